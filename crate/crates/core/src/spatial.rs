//! Intrinsic autoregressive (IAR) prior for areal effects.
//!
//! The precision structure is the graph Laplacian `Q = diag(degree) - W`.
//! `Q` has one zero eigenvalue per connected component, so the density is
//! improper along per-component constants. Effects are therefore kept
//! centred within each component, and the normalising constant is fixed to 0.

use serde::{Deserialize, Serialize};

use crate::error::{NowcastError, Result};
use crate::triangle::{validate_adjacency, RegionMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IarStructure {
    n: usize,
    /// Row-major `n x n` precision structure.
    precision: Vec<f64>,
    /// Undirected edges `(i, j)`, `i < j`.
    edges: Vec<(usize, usize)>,
    neighbours: Vec<Vec<usize>>,
    components: Vec<Vec<usize>>,
    component_of: Vec<usize>,
    rank: usize,
    warnings: Vec<String>,
}

/// Laplacian structure of a validated, symmetric adjacency matrix.
pub fn build_iar(map: &RegionMap) -> Result<IarStructure> {
    let diag = validate_adjacency(map)?;
    if !diag.symmetric {
        return Err(NowcastError::InvalidAdjacency(format!(
            "adjacency is not symmetric at {:?}",
            diag.asymmetric_pairs
        )));
    }
    let n = map.len();
    let mut precision = vec![0.0; n * n];
    let mut edges = Vec::new();
    let mut neighbours = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if map.adjacency[i][j] == 1 {
                precision[i * n + j] = -1.0;
                precision[i * n + i] += 1.0;
                neighbours[i].push(j);
                if i < j {
                    edges.push((i, j));
                }
            }
        }
    }
    let mut component_of = vec![0; n];
    for (k, comp) in diag.components.iter().enumerate() {
        for &i in comp {
            component_of[i] = k;
        }
    }
    let warnings = diag
        .isolated
        .iter()
        .map(|&i| {
            format!(
                "region `{}` has no neighbours; its structured effect is fixed at 0",
                map.regions[i]
            )
        })
        .collect();
    Ok(IarStructure {
        n,
        precision,
        edges,
        neighbours,
        rank: n - diag.components.len(),
        components: diag.components,
        component_of,
        warnings,
    })
}

impl IarStructure {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn precision_entry(&self, i: usize, j: usize) -> f64 {
        self.precision[i * self.n + j]
    }

    /// Row-major copy of `Q`.
    pub fn precision_matrix(&self) -> &[f64] {
        &self.precision
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn component_of(&self, i: usize) -> usize {
        self.component_of[i]
    }

    pub fn is_isolated(&self, i: usize) -> bool {
        self.neighbours[i].is_empty()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Neighbour differences `delta_i - delta_j`, one per edge.
    pub fn edge_differences(&self, delta: &[f64]) -> Vec<f64> {
        self.edges
            .iter()
            .map(|&(i, j)| delta[i] - delta[j])
            .collect()
    }

    /// `delta' Q delta = sum over edges of (delta_i - delta_j)^2`.
    pub fn quadratic_form(&self, delta: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|&(i, j)| (delta[i] - delta[j]).powi(2))
            .sum()
    }
}

/// `(rank / 2) log tau - (tau / 2) delta' Q delta`.
pub fn iar_logdensity(delta: &[f64], tau: f64, iar: &IarStructure) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(NowcastError::InvalidArgument(format!(
            "IAR precision must be positive, got {tau}"
        )));
    }
    if delta.len() != iar.len() {
        return Err(NowcastError::DimensionMismatch(format!(
            "IAR vector has {} entries for {} regions",
            delta.len(),
            iar.len()
        )));
    }
    Ok(0.5 * iar.rank() as f64 * tau.ln() - 0.5 * tau * iar.quadratic_form(delta))
}

/// Subtract each connected component's mean.
pub fn center_per_component(delta: &[f64], iar: &IarStructure) -> Vec<f64> {
    let mut out = delta.to_vec();
    for comp in iar.components() {
        let mean = comp.iter().map(|&i| delta[i]).sum::<f64>() / comp.len() as f64;
        for &i in comp {
            out[i] -= mean;
        }
    }
    out
}
