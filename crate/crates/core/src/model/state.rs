use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::error::{NowcastError, Result};
use crate::triangle::Dims;

/// One full realisation of the model parameters.
///
/// Matrices are row-major: `alpha_ts[t * S + s]`, `beta_ds[d * S + s]`.
/// Blocks that the variant does not use are kept at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub mu: f64,
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub alpha_ts: Vec<f64>,
    pub beta_ds: Vec<f64>,
    pub delta_ind: Vec<f64>,
    pub delta_iar: Vec<f64>,
    pub tau_alpha: f64,
    pub tau_beta: f64,
    pub tau_alpha_ts: f64,
    pub tau_beta_ds: f64,
    pub tau_delta_ind: f64,
    pub tau_delta_iar: f64,
    pub phi: f64,
}

impl ParameterState {
    /// All effects zero, all precisions and `phi` one.
    pub fn zeros(spec: &ModelSpec) -> Self {
        let dims = spec.dims();
        Self {
            mu: 0.0,
            gamma: vec![0.0; spec.covariate_count],
            alpha: vec![0.0; dims.t],
            beta: vec![0.0; dims.delays()],
            alpha_ts: vec![0.0; dims.t * dims.s],
            beta_ds: vec![0.0; dims.delays() * dims.s],
            delta_ind: vec![0.0; dims.s],
            delta_iar: vec![0.0; dims.s],
            tau_alpha: 1.0,
            tau_beta: 1.0,
            tau_alpha_ts: 1.0,
            tau_beta_ds: 1.0,
            tau_delta_ind: 1.0,
            tau_delta_iar: 1.0,
            phi: 1.0,
        }
    }

    pub fn alpha_ts(&self, s_len: usize, t: usize, s: usize) -> f64 {
        self.alpha_ts[t * s_len + s]
    }

    pub fn beta_ds(&self, s_len: usize, d: usize, s: usize) -> f64 {
        self.beta_ds[d * s_len + s]
    }

    /// Combined regional effect `delta_ind + delta_iar`.
    pub fn delta(&self, s: usize) -> f64 {
        self.delta_ind[s] + self.delta_iar[s]
    }

    /// Check lengths, positivity and that inactive blocks are zero.
    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        let dims = spec.dims();
        let v = spec.variant;
        let lens = [
            ("gamma", self.gamma.len(), spec.covariate_count),
            ("alpha", self.alpha.len(), dims.t),
            ("beta", self.beta.len(), dims.delays()),
            ("alpha_ts", self.alpha_ts.len(), dims.t * dims.s),
            ("beta_ds", self.beta_ds.len(), dims.delays() * dims.s),
            ("delta_ind", self.delta_ind.len(), dims.s),
            ("delta_iar", self.delta_iar.len(), dims.s),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(NowcastError::SpecMismatch(format!(
                    "{name} has length {got}, expected {want}"
                )));
            }
        }
        let inactive = [
            ("alpha_ts", !v.has_alpha_ts(), &self.alpha_ts),
            ("beta_ds", !v.has_beta_ds(), &self.beta_ds),
            ("delta_ind", !v.has_delta_ind(), &self.delta_ind),
            ("delta_iar", !v.has_delta_iar(), &self.delta_iar),
        ];
        for (name, off, values) in inactive {
            if off && values.iter().any(|&x| x != 0.0) {
                return Err(NowcastError::SpecMismatch(format!(
                    "{name} is not part of {v} but is non-zero"
                )));
            }
        }
        for (name, x) in self.precisions() {
            if !(x > 0.0 && x.is_finite()) {
                return Err(NowcastError::SpecMismatch(format!(
                    "{name} must be positive, got {x}"
                )));
            }
        }
        Ok(())
    }

    fn precisions(&self) -> [(&'static str, f64); 7] {
        [
            ("tau_alpha", self.tau_alpha),
            ("tau_beta", self.tau_beta),
            ("tau_alpha_ts", self.tau_alpha_ts),
            ("tau_beta_ds", self.tau_beta_ds),
            ("tau_delta_ind", self.tau_delta_ind),
            ("tau_delta_iar", self.tau_delta_iar),
            ("phi", self.phi),
        ]
    }

    /// Column names of the scalar parameters present in `spec`, in storage order.
    ///
    /// Periods and regions are one-based, delays zero-based:
    /// `alpha[1]`, `beta[0]`, `beta_ds[0,1]`.
    pub fn column_names(spec: &ModelSpec) -> Vec<String> {
        let dims = spec.dims();
        let v = spec.variant;
        let mut cols = vec!["mu".to_string()];
        cols.extend((1..=spec.covariate_count).map(|j| format!("gamma[{j}]")));
        cols.extend((1..=dims.t).map(|t| format!("alpha[{t}]")));
        cols.extend((0..=dims.d).map(|d| format!("beta[{d}]")));
        if v.has_alpha_ts() {
            for t in 1..=dims.t {
                cols.extend((1..=dims.s).map(|s| format!("alpha_ts[{t},{s}]")));
            }
        }
        if v.has_beta_ds() {
            for d in 0..=dims.d {
                cols.extend((1..=dims.s).map(|s| format!("beta_ds[{d},{s}]")));
            }
        }
        if v.has_delta_ind() {
            cols.extend((1..=dims.s).map(|s| format!("delta_ind[{s}]")));
        }
        if v.has_delta_iar() {
            cols.extend((1..=dims.s).map(|s| format!("delta_iar[{s}]")));
        }
        cols.extend(["tau_alpha".to_string(), "tau_beta".to_string()]);
        if v.has_alpha_ts() {
            cols.push("tau_alpha_ts".into());
        }
        if v.has_beta_ds() {
            cols.push("tau_beta_ds".into());
        }
        if v.has_delta_ind() {
            cols.push("tau_delta_ind".into());
        }
        if v.has_delta_iar() {
            cols.push("tau_delta_iar".into());
        }
        cols.push("phi".into());
        cols
    }

    /// Values matching [`ParameterState::column_names`].
    pub fn to_row(&self, spec: &ModelSpec) -> Vec<f64> {
        let v = spec.variant;
        let mut row = vec![self.mu];
        row.extend(&self.gamma);
        row.extend(&self.alpha);
        row.extend(&self.beta);
        if v.has_alpha_ts() {
            row.extend(&self.alpha_ts);
        }
        if v.has_beta_ds() {
            row.extend(&self.beta_ds);
        }
        if v.has_delta_ind() {
            row.extend(&self.delta_ind);
        }
        if v.has_delta_iar() {
            row.extend(&self.delta_iar);
        }
        row.extend([self.tau_alpha, self.tau_beta]);
        if v.has_alpha_ts() {
            row.push(self.tau_alpha_ts);
        }
        if v.has_beta_ds() {
            row.push(self.tau_beta_ds);
        }
        if v.has_delta_ind() {
            row.push(self.tau_delta_ind);
        }
        if v.has_delta_iar() {
            row.push(self.tau_delta_iar);
        }
        row.push(self.phi);
        row
    }

    /// Inverse of [`ParameterState::to_row`]; inactive precisions read as 1.
    pub fn from_row(spec: &ModelSpec, row: &[f64]) -> Result<Self> {
        let expected = Self::column_names(spec).len();
        if row.len() != expected {
            return Err(NowcastError::SpecMismatch(format!(
                "sample row has {} values, spec {} needs {expected}",
                row.len(),
                spec.variant
            )));
        }
        let v = spec.variant;
        let mut st = Self::zeros(spec);
        let mut it = row.iter().copied();
        let mut fill = |dst: &mut [f64]| dst.iter_mut().for_each(|x| *x = it.next().unwrap());
        let mut mu = [0.0];
        fill(&mut mu);
        st.mu = mu[0];
        fill(&mut st.gamma);
        fill(&mut st.alpha);
        fill(&mut st.beta);
        if v.has_alpha_ts() {
            fill(&mut st.alpha_ts);
        }
        if v.has_beta_ds() {
            fill(&mut st.beta_ds);
        }
        if v.has_delta_ind() {
            fill(&mut st.delta_ind);
        }
        if v.has_delta_iar() {
            fill(&mut st.delta_iar);
        }
        let mut taus = [0.0; 2];
        fill(&mut taus);
        st.tau_alpha = taus[0];
        st.tau_beta = taus[1];
        let mut one = [0.0];
        if v.has_alpha_ts() {
            fill(&mut one);
            st.tau_alpha_ts = one[0];
        }
        if v.has_beta_ds() {
            fill(&mut one);
            st.tau_beta_ds = one[0];
        }
        if v.has_delta_ind() {
            fill(&mut one);
            st.tau_delta_ind = one[0];
        }
        if v.has_delta_iar() {
            fill(&mut one);
            st.tau_delta_iar = one[0];
        }
        fill(&mut one);
        st.phi = one[0];
        Ok(st)
    }
}

/// Covariates `x_{t,d,s}` of length `p` per cell, stored cell-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateArray {
    dims: Dims,
    p: usize,
    values: Vec<f64>,
}

impl CovariateArray {
    pub fn none(dims: Dims) -> Self {
        Self {
            dims,
            p: 0,
            values: Vec::new(),
        }
    }

    pub fn zeros(dims: Dims, p: usize) -> Self {
        Self {
            dims,
            p,
            values: vec![0.0; dims.n_cells() * p],
        }
    }

    /// `values[cell * p + j]` with cells laid out by [`Dims::index`].
    pub fn new(dims: Dims, p: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.n_cells() * p {
            return Err(NowcastError::DimensionMismatch(format!(
                "covariates need {} values, got {}",
                dims.n_cells() * p,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(NowcastError::NonFinite(format!("covariate entry {i}")));
        }
        Ok(Self { dims, p, values })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.p..(cell + 1) * self.p]
    }

    pub fn get(&self, cell: usize, j: usize) -> f64 {
        self.values[cell * self.p + j]
    }

    pub fn set(&mut self, cell: usize, j: usize, value: f64) {
        self.values[cell * self.p + j] = value;
    }

    pub fn dot(&self, cell: usize, gamma: &[f64]) -> f64 {
        self.row(cell).iter().zip(gamma).map(|(x, g)| x * g).sum()
    }

    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.dims != spec.dims() || self.p != spec.covariate_count {
            return Err(NowcastError::DimensionMismatch(format!(
                "covariates are {:?} x {}, model expects {:?} x {}",
                self.dims,
                self.p,
                spec.dims(),
                spec.covariate_count
            )));
        }
        Ok(())
    }
}
