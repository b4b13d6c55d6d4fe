use serde::{Deserialize, Serialize};

use super::PosteriorSamples;
use crate::model::{eta_at, ParameterState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarDiagnostic {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Absent with a single chain.
    pub rhat: Option<f64>,
    pub ess: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub scalars: Vec<ScalarDiagnostic>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> Option<f64> {
        self.scalars.iter().filter_map(|s| s.rhat).reduce(f64::max)
    }

    pub fn min_ess(&self) -> Option<f64> {
        self.scalars.iter().map(|s| s.ess).reduce(f64::min)
    }

    pub fn get(&self, name: &str) -> Option<&ScalarDiagnostic> {
        self.scalars.iter().find(|s| s.name == name)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Each chain cut into two halves of equal length (a middle draw of an odd chain is dropped).
fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    chains
        .iter()
        .flat_map(|c| {
            let c = &c[..];
            let len = c.len();
            [&c[..n], &c[len - n..]]
        })
        .collect()
}

/// Within-chain variance and pooled variance estimate over equal-length chains.
fn variance_components(chains: &[&[f64]]) -> (f64, f64) {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| sample_var(c)).sum::<f64>() / chains.len() as f64;
    let b = n * sample_var(&means);
    (w, (n - 1.0) / n * w + b / n)
}

/// Split potential scale reduction factor; `None` for fewer than two chains
/// or fewer than four draws per chain.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 || chains.iter().any(|c| c.len() < 4) {
        return None;
    }
    let halves = split(chains);
    let (w, var_plus) = variance_components(&halves);
    if w <= 0.0 {
        return Some(if var_plus <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    Some((var_plus / w).sqrt())
}

/// Multi-chain effective sample size over split chains, truncating the
/// autocorrelation sum with Geyer's initial monotone sequence. Capped at the
/// total number of draws.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let total: usize = chains.iter().map(Vec::len).sum();
    if chains.is_empty() || chains.iter().any(|c| c.len() < 4) {
        return total as f64;
    }
    let halves = split(chains);
    let m = halves.len() as f64;
    let n = halves[0].len();
    let (w, var_plus) = variance_components(&halves);
    if !(var_plus > 0.0) {
        return total as f64;
    }
    let centred: Vec<Vec<f64>> = halves
        .iter()
        .map(|c| {
            let mu = mean(c);
            c.iter().map(|v| v - mu).collect()
        })
        .collect();
    // autocorrelations are computed lazily; the sum usually stops at short lags
    let rho = |lag: usize| {
        let mean_acov = centred
            .iter()
            .map(|c| {
                c[..n - lag]
                    .iter()
                    .zip(&c[lag..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / n as f64
            })
            .sum::<f64>()
            / m;
        1.0 - (w - mean_acov) / var_plus
    };
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 1;
    }
    let tau = (-1.0 + 2.0 * sum).max(f64::EPSILON);
    (m * n as f64 / tau).min(total as f64)
}

/// Split-R-hat and ESS for `mu`, `phi`, every sampled precision and `lambda`
/// at the four corner cells of the first region.
pub fn diagnostics(samples: &PosteriorSamples) -> Diagnostics {
    let spec = &samples.spec;
    let v = spec.variant;
    let dims = spec.dims();
    let fixed = &samples.config.fixed;
    let mut monitors: Vec<(String, Box<dyn Fn(&ParameterState) -> f64>)> = vec![
        ("mu".into(), Box::new(|s| s.mu)),
        ("phi".into(), Box::new(|s| s.phi)),
    ];
    if fixed.phi.is_some() {
        monitors.pop();
    }
    let precisions: [(&str, bool, fn(&ParameterState) -> f64); 6] = [
        ("tau_alpha", fixed.tau_alpha.is_none(), |s| s.tau_alpha),
        ("tau_beta", fixed.tau_beta.is_none(), |s| s.tau_beta),
        (
            "tau_alpha_ts",
            v.has_alpha_ts() && fixed.tau_alpha_ts.is_none(),
            |s| s.tau_alpha_ts,
        ),
        (
            "tau_beta_ds",
            v.has_beta_ds() && fixed.tau_beta_ds.is_none(),
            |s| s.tau_beta_ds,
        ),
        (
            "tau_delta_ind",
            v.has_delta_ind() && fixed.tau_delta_ind.is_none(),
            |s| s.tau_delta_ind,
        ),
        (
            "tau_delta_iar",
            v.has_delta_iar() && fixed.tau_delta_iar.is_none(),
            |s| s.tau_delta_iar,
        ),
    ];
    for (name, active, f) in precisions {
        if active {
            monitors.push((name.into(), Box::new(f)));
        }
    }
    let last_t = dims.t - 1;
    let mut corners = vec![(0, 0), (0, dims.d), (last_t, 0), (last_t, dims.d)];
    corners.dedup();
    for (t, d) in corners {
        let cell = dims.index(t, d, 0);
        let x = &samples.covariates;
        monitors.push((
            format!("lambda[{},{},1]", t + 1, d),
            Box::new(move |s| eta_at(s, spec, x, cell).exp()),
        ));
    }

    let scalars = monitors
        .into_iter()
        .map(|(name, f)| {
            let chains = samples.per_chain(&f);
            let all: Vec<f64> = chains.iter().flatten().copied().collect();
            let sd = if all.len() > 1 {
                sample_var(&all).sqrt()
            } else {
                0.0
            };
            ScalarDiagnostic {
                name,
                mean: if all.is_empty() { f64::NAN } else { mean(&all) },
                sd,
                rhat: split_rhat(&chains),
                ess: effective_sample_size(&chains),
            }
        })
        .collect();
    Diagnostics { scalars }
}
