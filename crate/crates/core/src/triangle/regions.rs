use std::collections::VecDeque;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{NowcastError, Result};

/// Ordered region labels and their 0/1 adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMap {
    pub regions: Vec<String>,
    pub adjacency: Vec<Vec<u8>>,
}

impl RegionMap {
    pub fn new(regions: Vec<String>, adjacency: Vec<Vec<u8>>) -> Result<Self> {
        if regions.len() != adjacency.len() {
            return Err(NowcastError::InvalidAdjacency(format!(
                "{} labels for {} matrix rows",
                regions.len(),
                adjacency.len()
            )));
        }
        for (i, label) in regions.iter().enumerate() {
            if regions[..i].contains(label) {
                return Err(NowcastError::InvalidAdjacency(format!(
                    "duplicate region `{label}`"
                )));
            }
        }
        Ok(Self { regions, adjacency })
    }

    /// Symmetric map from an undirected edge list over `labels`.
    pub fn from_edges(labels: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = labels.len();
        let mut adjacency = vec![vec![0u8; n]; n];
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(NowcastError::InvalidAdjacency(format!(
                    "bad edge ({i}, {j})"
                )));
            }
            adjacency[i][j] = 1;
            adjacency[j][i] = 1;
        }
        Self::new(labels, adjacency)
    }

    /// Path graph `1 - 2 - ... - n` with labels "1".."n".
    pub fn chain(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(super::default_region_labels(n), &edges).expect("valid chain")
    }

    /// Single region with no neighbours.
    pub fn singleton() -> Self {
        Self::chain(1)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.regions.iter().position(|r| r == label)
    }

    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i]
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0)
            .map(|(j, _)| j)
    }

    /// Parse the adjacency CSV: the first row and column carry region labels.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut rows = rdr.records();
        let header = rows
            .next()
            .ok_or_else(|| NowcastError::Parse("empty adjacency file".into()))??;
        let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut adjacency = Vec::with_capacity(labels.len());
        for (k, row) in rows.enumerate() {
            let row = row?;
            let line = k + 2;
            let label = row.get(0).unwrap_or_default();
            if labels.get(k).map(String::as_str) != Some(label) {
                return Err(NowcastError::Parse(format!(
                    "line {line}: row label `{label}` does not match column order"
                )));
            }
            let values = row
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<u8>().map_err(|_| {
                        NowcastError::Parse(format!("line {line}: non-integer entry `{v}`"))
                    })
                })
                .collect::<Result<Vec<u8>>>()?;
            adjacency.push(values);
        }
        Self::new(labels, adjacency)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("region");
        for r in &self.regions {
            out.push(',');
            out.push_str(r);
        }
        out.push('\n');
        for (label, row) in self.regions.iter().zip(&self.adjacency) {
            out.push_str(label);
            for w in row {
                out.push(',');
                out.push_str(&w.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Report on an adjacency matrix. Problems are reported, never repaired.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyDiagnostics {
    pub symmetric: bool,
    /// Pairs `(i, j)`, `i < j`, where `w_ij != w_ji`.
    pub asymmetric_pairs: Vec<(usize, usize)>,
    pub components: Vec<Vec<usize>>,
    pub isolated: Vec<usize>,
    pub degrees: Vec<usize>,
}

impl AdjacencyDiagnostics {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }
}

/// Check shape and entries; errors on non-square, non-binary or non-zero
/// diagonal matrices, reports asymmetry and component structure otherwise.
pub fn validate_adjacency(map: &RegionMap) -> Result<AdjacencyDiagnostics> {
    let n = map.adjacency.len();
    for (i, row) in map.adjacency.iter().enumerate() {
        if row.len() != n {
            return Err(NowcastError::InvalidAdjacency(format!(
                "row {} has {} entries, expected {n}",
                i + 1,
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|&w| w > 1) {
            return Err(NowcastError::InvalidAdjacency(format!(
                "entry ({}, {}) = {} is not 0/1",
                i + 1,
                j + 1,
                row[j]
            )));
        }
        if row[i] != 0 {
            return Err(NowcastError::InvalidAdjacency(format!(
                "nonzero diagonal at region {}",
                i + 1
            )));
        }
    }
    let mut asymmetric_pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if map.adjacency[i][j] != map.adjacency[j][i] {
                asymmetric_pairs.push((i, j));
            }
        }
    }
    let degrees: Vec<usize> = map
        .adjacency
        .iter()
        .map(|r| r.iter().filter(|&&w| w == 1).count())
        .collect();
    let components = connected_components(&map.adjacency);
    let isolated = components
        .iter()
        .filter(|c| c.len() == 1)
        .map(|c| c[0])
        .collect();
    Ok(AdjacencyDiagnostics {
        symmetric: asymmetric_pairs.is_empty(),
        asymmetric_pairs,
        components,
        isolated,
        degrees,
    })
}

/// Connected components (an edge exists when either direction is non-zero),
/// each sorted, ordered by smallest member.
pub fn connected_components(adjacency: &[Vec<u8>]) -> Vec<Vec<usize>> {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut comp = vec![root];
        let mut queue = VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if !seen[j] && i != j && (adjacency[i][j] != 0 || adjacency[j][i] != 0) {
                    seen[j] = true;
                    comp.push(j);
                    queue.push_back(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}
