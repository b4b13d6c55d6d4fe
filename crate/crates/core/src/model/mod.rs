//! Negative binomial likelihood, log-linear mean structure and priors.
//!
//! ```text
//! n_{t,d,s} ~ NegBin(lambda_{t,d,s}, phi)
//! log lambda = mu + x'gamma + alpha_t + alpha_{t,s} + beta_d + beta_{d,s} + delta_s + delta_iar_s
//! alpha, beta ~ RW1 with N(0, 1/0.001) anchors; precisions, phi ~ Gamma(0.001, 0.001)
//! ```

mod density;
mod spec;
mod state;

pub use density::negbin_logpmf_unchecked;
pub(crate) use density::{eta_at, ln_rising};
pub use density::{
    gamma_logpdf, log_likelihood, log_mean, log_posterior_unnormalized, log_prior, negbin_logpmf,
    normal_logpdf, rw1_logdensity,
};
pub use spec::{GammaPrior, ModelSpec, Variant};
pub use state::{CovariateArray, ParameterState};

use crate::error::{NowcastError, Result};
use crate::spatial::{build_iar, IarStructure};
use crate::triangle::{RegionMap, ReportingTriangle};

/// A model specification bound to its data, checked for mutual consistency.
#[derive(Debug, Clone)]
pub struct ModelContext<'a> {
    pub spec: &'a ModelSpec,
    pub triangle: &'a ReportingTriangle,
    pub covariates: CovariateArray,
    pub iar: Option<IarStructure>,
    pub map: Option<RegionMap>,
}

impl<'a> ModelContext<'a> {
    /// `map` is required when the variant carries an IAR block and must list
    /// the triangle's regions in the same order.
    pub fn new(
        spec: &'a ModelSpec,
        triangle: &'a ReportingTriangle,
        covariates: Option<&CovariateArray>,
        map: Option<&RegionMap>,
    ) -> Result<Self> {
        spec.validate()?;
        if triangle.dims() != spec.dims() {
            return Err(NowcastError::DimensionMismatch(format!(
                "triangle is {:?}, model expects {:?}",
                triangle.dims(),
                spec.dims()
            )));
        }
        let covariates = match covariates {
            Some(x) => {
                x.check(spec)?;
                x.clone()
            }
            None if spec.covariate_count == 0 => CovariateArray::none(spec.dims()),
            None => {
                return Err(NowcastError::DimensionMismatch(
                    "model expects covariates".into(),
                ))
            }
        };
        if let Some(map) = map {
            if map.regions.as_slice() != triangle.regions() {
                return Err(NowcastError::DimensionMismatch(format!(
                    "adjacency regions {:?} differ from triangle regions {:?}",
                    map.regions,
                    triangle.regions()
                )));
            }
        }
        let iar = match (spec.variant.has_delta_iar(), map) {
            (true, Some(map)) => Some(build_iar(map)?),
            (true, None) => {
                return Err(NowcastError::InvalidArgument(format!(
                    "variant {} needs a region adjacency map",
                    spec.variant
                )))
            }
            (false, _) => None,
        };
        Ok(Self {
            spec,
            triangle,
            covariates,
            iar,
            map: map.cloned(),
        })
    }

    pub fn iar(&self) -> Option<&IarStructure> {
        self.iar.as_ref()
    }

    pub fn log_prior(&self, state: &ParameterState) -> Result<f64> {
        log_prior(state, self.spec, self.iar())
    }

    pub fn log_likelihood(&self, state: &ParameterState) -> Result<f64> {
        log_likelihood(state, self.spec, &self.covariates, self.triangle)
    }

    pub fn log_posterior(&self, state: &ParameterState) -> Result<f64> {
        log_posterior_unnormalized(
            state,
            self.spec,
            &self.covariates,
            self.triangle,
            self.iar(),
        )
    }

    /// `log lambda` at a flat cell index.
    pub fn eta(&self, state: &ParameterState, cell: usize) -> f64 {
        eta_at(state, self.spec, &self.covariates, cell)
    }

    /// Per-observed-cell log-likelihood terms in storage order.
    pub fn pointwise_log_likelihood(&self, state: &ParameterState) -> Vec<f64> {
        let counts = self.triangle.raw_counts();
        self.triangle
            .observed_indices()
            .map(|i| negbin_logpmf_unchecked(counts[i], self.eta(state, i).exp(), state.phi))
            .collect()
    }
}
