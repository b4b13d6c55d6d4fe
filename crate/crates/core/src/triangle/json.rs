use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Dims, ReportingTriangle, TimeUnit};
use crate::error::{NowcastError, Result};

/// On-disk triangle layout. `counts` is `[t][d]` for a single region and
/// `[t][d][s]` otherwise, with `null` for unobserved cells; `overflow` is
/// `[t]` or `[t][s]` accordingly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleFile {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub unit: TimeUnit,
    pub as_of: Option<NaiveDate>,
    pub regions: Vec<String>,
    pub counts: NestedCounts,
    pub overflow: NestedOverflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NestedCounts {
    Single(Vec<Vec<Option<u64>>>),
    Spatial(Vec<Vec<Vec<Option<u64>>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NestedOverflow {
    Single(Vec<u64>),
    Spatial(Vec<Vec<u64>>),
}

impl From<&ReportingTriangle> for TriangleFile {
    fn from(tri: &ReportingTriangle) -> Self {
        let dims = tri.dims();
        let (counts, overflow) = if dims.s == 1 {
            (
                NestedCounts::Single(
                    (0..dims.t)
                        .map(|t| (0..=dims.d).map(|d| tri.count(t, d, 0)).collect())
                        .collect(),
                ),
                NestedOverflow::Single((0..dims.t).map(|t| tri.overflow(t, 0)).collect()),
            )
        } else {
            (
                NestedCounts::Spatial(
                    (0..dims.t)
                        .map(|t| {
                            (0..=dims.d)
                                .map(|d| (0..dims.s).map(|s| tri.count(t, d, s)).collect())
                                .collect()
                        })
                        .collect(),
                ),
                NestedOverflow::Spatial(
                    (0..dims.t)
                        .map(|t| (0..dims.s).map(|s| tri.overflow(t, s)).collect())
                        .collect(),
                ),
            )
        };
        TriangleFile {
            t: dims.t,
            d: dims.d,
            s: dims.s,
            unit: tri.unit(),
            as_of: tri.as_of(),
            regions: tri.regions().to_vec(),
            counts,
            overflow,
        }
    }
}

impl TryFrom<TriangleFile> for ReportingTriangle {
    type Error = NowcastError;

    fn try_from(f: TriangleFile) -> Result<Self> {
        let dims = Dims::new(f.t, f.d, f.s);
        let bad = |what: &str| NowcastError::DimensionMismatch(format!("triangle file: {what}"));
        let mut cells = vec![None; dims.n_cells()];
        match (&f.counts, dims.s) {
            (NestedCounts::Single(rows), 1) => {
                if rows.len() != dims.t || rows.iter().any(|r| r.len() != dims.delays()) {
                    return Err(bad("counts must be T x (D+1)"));
                }
                for (t, row) in rows.iter().enumerate() {
                    for (d, &c) in row.iter().enumerate() {
                        cells[dims.index(t, d, 0)] = c;
                    }
                }
            }
            (NestedCounts::Spatial(rows), _) => {
                if rows.len() != dims.t
                    || rows
                        .iter()
                        .any(|r| r.len() != dims.delays() || r.iter().any(|c| c.len() != dims.s))
                {
                    return Err(bad("counts must be T x (D+1) x S"));
                }
                for (t, row) in rows.iter().enumerate() {
                    for (d, col) in row.iter().enumerate() {
                        for (s, &c) in col.iter().enumerate() {
                            cells[dims.index(t, d, s)] = c;
                        }
                    }
                }
            }
            _ => return Err(bad("counts nesting does not match S")),
        }
        let overflow = match f.overflow {
            NestedOverflow::Single(v) if dims.s == 1 => v,
            NestedOverflow::Spatial(v) => v.into_iter().flatten().collect(),
            NestedOverflow::Single(v) if v.is_empty() => vec![0; dims.t * dims.s],
            NestedOverflow::Single(_) => return Err(bad("overflow nesting does not match S")),
        };
        ReportingTriangle::new(dims, cells)?
            .with_overflow(overflow)?
            .with_regions(f.regions)
            .map(|t| t.with_unit(f.unit).with_as_of(f.as_of))
    }
}

impl ReportingTriangle {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(&TriangleFile::from(self))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TriangleFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn read_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
