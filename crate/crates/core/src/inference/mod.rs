//! Adaptive Metropolis-within-Gibbs sampling of the posterior, with
//! convergence diagnostics and on-disk sample storage.
//!
//! Each sweep updates every active scalar effect by a single-site Gaussian
//! random walk, draws all active precisions from their conjugate Gamma
//! conditionals, and updates `phi` on the log scale. Proposal scales adapt
//! during burn-in only.

mod adapt;
mod diagnostics;
mod gibbs;
mod io;
mod sampler;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use adapt::{adapt_step, adaptation_gain, AdaptiveScale};
pub use diagnostics::{
    diagnostics, effective_sample_size, split_rhat, Diagnostics, ScalarDiagnostic,
};
pub use gibbs::{gibbs_precision, precision_conditional, GammaConditional};
pub use io::{read_samples, write_samples, SamplesMeta};
pub use sampler::run_mcmc;

use crate::error::{NowcastError, Result};
use crate::model::{CovariateArray, ModelSpec, ParameterState};

/// Hyperparameters held at fixed values instead of being sampled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedParameters {
    pub tau_alpha: Option<f64>,
    pub tau_beta: Option<f64>,
    pub tau_alpha_ts: Option<f64>,
    pub tau_beta_ds: Option<f64>,
    pub tau_delta_ind: Option<f64>,
    pub tau_delta_iar: Option<f64>,
    pub phi: Option<f64>,
}

impl FixedParameters {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub adapt_window: usize,
    #[serde(skip_serializing_if = "FixedParameters::is_empty")]
    pub fixed: FixedParameters,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 3,
            iterations: 20_000,
            burn_in: 10_000,
            thin: 5,
            seed: 1,
            target_acceptance: 0.44,
            adapt_window: 50,
            fixed: FixedParameters::default(),
        }
    }
}

impl SamplerConfig {
    pub fn new(chains: usize, iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        Self {
            chains,
            iterations,
            burn_in,
            thin,
            seed,
            ..Self::default()
        }
    }

    pub fn with_fixed(mut self, fixed: FixedParameters) -> Self {
        self.fixed = fixed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NowcastError::InvalidArgument(m.to_string()));
        if self.chains == 0 {
            return bad("at least one chain is required");
        }
        if self.burn_in >= self.iterations {
            return bad("burn_in must be smaller than iterations");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return bad("target_acceptance must lie in (0, 1)");
        }
        if self.adapt_window == 0 {
            return bad("adapt_window must be at least 1");
        }
        Ok(())
    }

    /// Draws kept per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// One retained state; `iteration` is the 1-based sweep number.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub chain: usize,
    pub iteration: usize,
    pub state: ParameterState,
}

/// Proposal scales per block at the end of burn-in and at the end of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationLog {
    pub chain: usize,
    pub burn_in_scales: BTreeMap<String, Vec<f64>>,
    pub final_scales: BTreeMap<String, Vec<f64>>,
}

impl AdaptationLog {
    /// True when no scale moved after burn-in.
    pub fn frozen(&self) -> bool {
        self.burn_in_scales == self.final_scales
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub spec: ModelSpec,
    pub config: SamplerConfig,
    pub covariates: CovariateArray,
    /// Ordered by chain, then iteration.
    pub draws: Vec<Draw>,
    /// Post-burn-in acceptance per Metropolis block, pooled over chains.
    pub acceptance_rates: BTreeMap<String, f64>,
    pub adaptation: Vec<AdaptationLog>,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn n_chains(&self) -> usize {
        self.draws.iter().map(|d| d.chain + 1).max().unwrap_or(0)
    }

    pub fn states(&self) -> impl Iterator<Item = &ParameterState> {
        self.draws.iter().map(|d| &d.state)
    }

    /// A scalar function of the state split by chain.
    pub fn per_chain<F: Fn(&ParameterState) -> f64>(&self, f: F) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains()];
        for d in &self.draws {
            out[d.chain].push(f(&d.state));
        }
        out
    }

    /// Posterior mean of a scalar function of the state.
    pub fn mean<F: Fn(&ParameterState) -> f64>(&self, f: F) -> f64 {
        self.states().map(f).sum::<f64>() / self.len() as f64
    }

    /// `log lambda` at a flat cell index for one state.
    pub fn eta(&self, state: &ParameterState, cell: usize) -> f64 {
        crate::model::eta_at(state, &self.spec, &self.covariates, cell)
    }
}
