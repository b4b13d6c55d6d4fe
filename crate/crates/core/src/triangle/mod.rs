//! Censored run-off triangles.
//!
//! Rows are occurrence periods, columns are reporting delays and an optional
//! third axis indexes regions. All in-memory indices are zero-based: row `t`
//! holds period `t + 1` and the standard censoring geometry observes cell
//! `(t, d)` iff `t + d < T`. Files and CSV column names use one-based periods.

mod json;
mod linelist;
mod regions;

pub use json::TriangleFile;
pub use linelist::{build_triangle, read_line_list, BuildOptions, LineListRecord, TimeUnit};
pub use regions::{connected_components, validate_adjacency, AdjacencyDiagnostics, RegionMap};

use chrono::NaiveDate;

use crate::error::{NowcastError, Result};

/// Shape of a triangle: `t` periods, delays `0..=d`, `s` regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub t: usize,
    pub d: usize,
    pub s: usize,
}

impl Dims {
    pub fn new(t: usize, d: usize, s: usize) -> Self {
        Self { t, d, s }
    }

    /// Number of delay columns, `D + 1`.
    pub fn delays(&self) -> usize {
        self.d + 1
    }

    pub fn n_cells(&self) -> usize {
        self.t * self.delays() * self.s
    }

    #[inline]
    pub fn index(&self, t: usize, d: usize, s: usize) -> usize {
        (t * self.delays() + d) * self.s + s
    }

    /// Inverse of [`Dims::index`].
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let s = idx % self.s;
        let rest = idx / self.s;
        (rest / self.delays(), rest % self.delays(), s)
    }

    /// Standard censoring rule: the cell is reported by the last period.
    pub fn observed_by_geometry(&self, t: usize, d: usize) -> bool {
        t + d < self.t
    }

    pub fn check(&self, t: usize, d: usize, s: usize) -> Result<()> {
        if t >= self.t || d > self.d || s >= self.s {
            return Err(NowcastError::IndexOutOfRange(format!(
                "cell (t={t}, d={d}, s={s}) outside T={}, D={}, S={}",
                self.t, self.d, self.s
            )));
        }
        Ok(())
    }
}

/// Delayed counts plus the mask of cells known at the as-of date.
///
/// Unobserved cells carry no count. The mask normally follows the censoring
/// geometry; [`ReportingTriangle::with_mask`] lets callers (and the simulator)
/// use arbitrary observation patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportingTriangle {
    dims: Dims,
    counts: Vec<u64>,
    mask: Vec<bool>,
    overflow: Vec<u64>,
    unit: TimeUnit,
    as_of: Option<NaiveDate>,
    regions: Vec<String>,
    unreported: u64,
}

impl ReportingTriangle {
    /// Build from per-cell values (`None` = unobserved) laid out by [`Dims::index`].
    pub fn new(dims: Dims, cells: Vec<Option<u64>>) -> Result<Self> {
        if dims.d < 1 {
            return Err(NowcastError::InvalidArgument(
                "maximum delay D must be at least 1".into(),
            ));
        }
        if dims.t == 0 || dims.s == 0 {
            return Err(NowcastError::InvalidArgument(
                "T and S must be positive".into(),
            ));
        }
        if cells.len() != dims.n_cells() {
            return Err(NowcastError::DimensionMismatch(format!(
                "expected {} cells, got {}",
                dims.n_cells(),
                cells.len()
            )));
        }
        let mask: Vec<bool> = cells.iter().map(Option::is_some).collect();
        let counts = cells.into_iter().map(|c| c.unwrap_or(0)).collect();
        Ok(Self {
            dims,
            counts,
            mask,
            overflow: vec![0; dims.t * dims.s],
            unit: TimeUnit::default(),
            as_of: None,
            regions: default_region_labels(dims.s),
            unreported: 0,
        })
    }

    /// Apply the standard censoring geometry to a complete count array.
    pub fn censored(dims: Dims, full_counts: &[u64]) -> Result<Self> {
        if full_counts.len() != dims.n_cells() {
            return Err(NowcastError::DimensionMismatch(format!(
                "expected {} cells, got {}",
                dims.n_cells(),
                full_counts.len()
            )));
        }
        let cells = (0..dims.n_cells())
            .map(|i| {
                let (t, d, _) = dims.unravel(i);
                dims.observed_by_geometry(t, d).then_some(full_counts[i])
            })
            .collect();
        let tri = Self::new(dims, cells)?;
        if dims.t <= dims.d {
            return Err(NowcastError::InvalidArgument(format!(
                "need T > D for at least one fully observed row (T={}, D={})",
                dims.t, dims.d
            )));
        }
        Ok(tri)
    }

    /// Replace the observation mask. Counts of newly masked-off cells are dropped;
    /// newly observed cells read as zero unless set with [`Self::set_count`].
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.dims.n_cells() {
            return Err(NowcastError::DimensionMismatch("mask length".into()));
        }
        for (c, &m) in self.counts.iter_mut().zip(&mask) {
            if !m {
                *c = 0;
            }
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn set_count(&mut self, t: usize, d: usize, s: usize, value: Option<u64>) -> Result<()> {
        self.dims.check(t, d, s)?;
        let i = self.dims.index(t, d, s);
        self.mask[i] = value.is_some();
        self.counts[i] = value.unwrap_or(0);
        Ok(())
    }

    pub fn with_regions(mut self, regions: Vec<String>) -> Result<Self> {
        if regions.len() != self.dims.s {
            return Err(NowcastError::DimensionMismatch(format!(
                "{} region labels for S={}",
                regions.len(),
                self.dims.s
            )));
        }
        self.regions = regions;
        Ok(self)
    }

    pub fn with_overflow(mut self, overflow: Vec<u64>) -> Result<Self> {
        if overflow.len() != self.dims.t * self.dims.s {
            return Err(NowcastError::DimensionMismatch(
                "overflow length must be T*S".into(),
            ));
        }
        self.overflow = overflow;
        Ok(self)
    }

    pub fn with_unit(mut self, unit: TimeUnit) -> Self {
        self.unit = unit;
        self
    }

    pub fn with_as_of(mut self, as_of: Option<NaiveDate>) -> Self {
        self.as_of = as_of;
        self
    }

    pub(crate) fn set_unreported(&mut self, n: u64) {
        self.unreported = n;
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn unit(&self) -> TimeUnit {
        self.unit
    }

    pub fn as_of(&self) -> Option<NaiveDate> {
        self.as_of
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    /// Records dropped at ingestion because they were reported after the as-of date.
    pub fn unreported(&self) -> u64 {
        self.unreported
    }

    pub fn count(&self, t: usize, d: usize, s: usize) -> Option<u64> {
        let i = self.dims.index(t, d, s);
        self.mask[i].then_some(self.counts[i])
    }

    pub fn is_observed(&self, t: usize, d: usize, s: usize) -> bool {
        self.mask[self.dims.index(t, d, s)]
    }

    /// Raw flat storage; unobserved cells hold 0.
    pub fn raw_counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn overflow(&self, t: usize, s: usize) -> u64 {
        self.overflow[t * self.dims.s + s]
    }

    pub fn overflow_all(&self) -> &[u64] {
        &self.overflow
    }

    /// Flat indices of observed cells, in storage order.
    pub fn observed_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
    }

    /// Flat indices of unobserved cells, in storage order.
    pub fn unobserved_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| !m)
            .map(|(i, _)| i)
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// True when the mask is exactly `{(t, d): t + d < T}` in every region.
    pub fn has_standard_censoring(&self) -> bool {
        (0..self.dims.n_cells()).all(|i| {
            let (t, d, _) = self.dims.unravel(i);
            self.mask[i] == self.dims.observed_by_geometry(t, d)
        })
    }

    /// Sum of observed cells in row `t` of region `s`.
    pub fn observed_partial(&self, t: usize, s: usize) -> u64 {
        (0..=self.dims.d)
            .map(|d| self.count(t, d, s).unwrap_or(0))
            .sum()
    }

    pub fn row_fully_observed(&self, t: usize, s: usize) -> bool {
        (0..=self.dims.d).all(|d| self.is_observed(t, d, s))
    }

    pub fn region_index(&self, label: &str) -> Option<usize> {
        self.regions.iter().position(|r| r == label)
    }
}

pub(crate) fn default_region_labels(s: usize) -> Vec<String> {
    (1..=s).map(|i| i.to_string()).collect()
}

/// Observed partial sum of one row and whether every cell of the row is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarginalTotal {
    pub t: usize,
    pub s: usize,
    pub observed_partial: u64,
    pub fully_observed: bool,
}

/// Partial row sums for every `(t, s)`, ordered by `t` then `s`.
///
/// Under the standard geometry `fully_observed` holds exactly for `t < T - D`
/// (zero-based), i.e. periods `1..=T-D`.
pub fn marginal_totals(tri: &ReportingTriangle) -> Vec<MarginalTotal> {
    let dims = tri.dims();
    let mut out = Vec::with_capacity(dims.t * dims.s);
    for t in 0..dims.t {
        for s in 0..dims.s {
            out.push(MarginalTotal {
                t,
                s,
                observed_partial: tri.observed_partial(t, s),
                fully_observed: tri.row_fully_observed(t, s),
            });
        }
    }
    out
}
