use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

use super::{CovariateArray, ModelSpec, ParameterState};
use crate::error::{NowcastError, Result};
use crate::spatial::{iar_logdensity, IarStructure};
use crate::triangle::ReportingTriangle;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn require_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(NowcastError::InvalidArgument(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

/// `ln Gamma(n + phi) - ln Gamma(phi)`.
pub(crate) fn ln_rising(phi: f64, n: u64) -> f64 {
    // the direct product avoids cancellation when phi dominates n
    if n <= 16 || (phi > 1e4 * n as f64 && n <= 4096) {
        (0..n).map(|k| (phi + k as f64).ln()).sum()
    } else {
        ln_gamma(n as f64 + phi) - ln_gamma(phi)
    }
}

/// Negative binomial log-pmf with mean `lambda` and scale `phi`:
/// `E[n] = lambda`, `Var[n] = lambda (1 + lambda / phi)`.
pub fn negbin_logpmf(n: u64, lambda: f64, phi: f64) -> Result<f64> {
    require_positive("lambda", lambda)?;
    require_positive("phi", phi)?;
    Ok(negbin_logpmf_unchecked(n, lambda, phi))
}

/// [`negbin_logpmf`] without argument checks.
#[inline]
pub fn negbin_logpmf_unchecked(n: u64, lambda: f64, phi: f64) -> f64 {
    let nf = n as f64;
    let tail = if n == 0 {
        0.0
    } else {
        nf * (lambda.ln() - (phi + lambda).ln())
    };
    ln_rising(phi, n) - ln_factorial(n) - phi * (lambda / phi).ln_1p() + tail
}

/// Gaussian log-density parametrised by precision.
#[inline]
pub fn normal_logpdf(x: f64, mean: f64, precision: f64) -> f64 {
    0.5 * (precision.ln() - LN_2PI) - 0.5 * precision * (x - mean).powi(2)
}

/// Gamma log-density in shape/rate form.
#[inline]
pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// First-order random walk: `x_1 ~ N(0, 1/anchor)`, `x_i ~ N(x_{i-1}, 1/tau)`.
pub fn rw1_logdensity(x: &[f64], tau: f64, anchor_precision: f64) -> Result<f64> {
    require_positive("random-walk precision", tau)?;
    require_positive("anchor precision", anchor_precision)?;
    let Some(&first) = x.first() else {
        return Err(NowcastError::InvalidArgument(
            "random walk needs at least one element".into(),
        ));
    };
    let walk: f64 = x.windows(2).map(|w| normal_logpdf(w[1], w[0], tau)).sum();
    Ok(normal_logpdf(first, 0.0, anchor_precision) + walk)
}

fn iid_normal_logdensity(x: &[f64], tau: f64) -> f64 {
    x.iter().map(|&v| normal_logpdf(v, 0.0, tau)).sum()
}

/// Linear predictor at flat cell index without bounds or spec checks.
#[inline]
pub(crate) fn eta_at(
    state: &ParameterState,
    spec: &ModelSpec,
    x: &CovariateArray,
    cell: usize,
) -> f64 {
    let dims = spec.dims();
    let (t, d, s) = dims.unravel(cell);
    let v = spec.variant;
    let mut eta = state.mu + state.alpha[t] + state.beta[d];
    if spec.covariate_count > 0 {
        eta += x.dot(cell, &state.gamma);
    }
    if v.has_alpha_ts() {
        eta += state.alpha_ts[t * dims.s + s];
    }
    if v.has_beta_ds() {
        eta += state.beta_ds[d * dims.s + s];
    }
    if v.has_delta_ind() {
        eta += state.delta_ind[s];
    }
    if v.has_delta_iar() {
        eta += state.delta_iar[s];
    }
    eta
}

/// `log lambda_{t,d,s}`; absent blocks contribute nothing.
pub fn log_mean(
    state: &ParameterState,
    spec: &ModelSpec,
    x: &CovariateArray,
    t: usize,
    d: usize,
    s: usize,
) -> Result<f64> {
    let dims = spec.dims();
    dims.check(t, d, s)?;
    if state.alpha.len() != dims.t
        || state.beta.len() != dims.delays()
        || state.gamma.len() != spec.covariate_count
    {
        return Err(NowcastError::SpecMismatch("state dimensions".into()));
    }
    Ok(eta_at(state, spec, x, dims.index(t, d, s)))
}

/// Log joint prior of all active blocks, precisions and `phi`.
pub fn log_prior(
    state: &ParameterState,
    spec: &ModelSpec,
    iar: Option<&IarStructure>,
) -> Result<f64> {
    state.check(spec)?;
    let v = spec.variant;
    let hp = spec.hyperprior;
    let fixed_precision = 1.0 / spec.fixed_effect_variance;
    let mut lp = normal_logpdf(state.mu, 0.0, fixed_precision);
    lp += iid_normal_logdensity(&state.gamma, fixed_precision);
    lp += rw1_logdensity(&state.alpha, state.tau_alpha, spec.anchor_precision)?;
    lp += rw1_logdensity(&state.beta, state.tau_beta, spec.anchor_precision)?;
    lp += gamma_logpdf(state.tau_alpha, hp.shape, hp.rate);
    lp += gamma_logpdf(state.tau_beta, hp.shape, hp.rate);
    lp += gamma_logpdf(state.phi, hp.shape, hp.rate);
    if v.has_alpha_ts() {
        lp += iid_normal_logdensity(&state.alpha_ts, state.tau_alpha_ts);
        lp += gamma_logpdf(state.tau_alpha_ts, hp.shape, hp.rate);
    }
    if v.has_beta_ds() {
        lp += iid_normal_logdensity(&state.beta_ds, state.tau_beta_ds);
        lp += gamma_logpdf(state.tau_beta_ds, hp.shape, hp.rate);
    }
    if v.has_delta_ind() {
        lp += iid_normal_logdensity(&state.delta_ind, state.tau_delta_ind);
        lp += gamma_logpdf(state.tau_delta_ind, hp.shape, hp.rate);
    }
    if v.has_delta_iar() {
        let iar =
            iar.ok_or_else(|| NowcastError::SpecMismatch(format!("{v} needs an IAR structure")))?;
        lp += iar_logdensity(&state.delta_iar, state.tau_delta_iar, iar)?;
        lp += gamma_logpdf(state.tau_delta_iar, hp.shape, hp.rate);
    }
    Ok(lp)
}

/// Sum of negative binomial log-pmfs over observed cells only.
pub fn log_likelihood(
    state: &ParameterState,
    spec: &ModelSpec,
    x: &CovariateArray,
    tri: &ReportingTriangle,
) -> Result<f64> {
    if tri.dims() != spec.dims() {
        return Err(NowcastError::DimensionMismatch(format!(
            "triangle {:?} vs model {:?}",
            tri.dims(),
            spec.dims()
        )));
    }
    x.check(spec)?;
    if state.alpha.len() != spec.t
        || state.beta.len() != spec.d + 1
        || state.gamma.len() != spec.covariate_count
    {
        return Err(NowcastError::SpecMismatch("state dimensions".into()));
    }
    let counts = tri.raw_counts();
    Ok(tri
        .observed_indices()
        .map(|i| negbin_logpmf_unchecked(counts[i], eta_at(state, spec, x, i).exp(), state.phi))
        .sum())
}

pub fn log_posterior_unnormalized(
    state: &ParameterState,
    spec: &ModelSpec,
    x: &CovariateArray,
    tri: &ReportingTriangle,
    iar: Option<&IarStructure>,
) -> Result<f64> {
    Ok(log_prior(state, spec, iar)? + log_likelihood(state, spec, x, tri)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::spatial::build_iar;
    use crate::triangle::{Dims, RegionMap};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Gamma, Poisson};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn geometric_special_case() {
        assert!(close(
            negbin_logpmf(0, 1.0, 1.0).unwrap(),
            0.5f64.ln(),
            1e-15
        ));
        // phi = 1 is geometric with success prob 1/(1+lambda)
        let p: f64 = 1.0 / 3.0;
        for n in 0..10u64 {
            let want = p.ln() + n as f64 * (1.0 - p).ln();
            assert!(close(negbin_logpmf(n, 2.0, 1.0).unwrap(), want, 1e-13));
        }
    }

    #[test]
    fn zero_count_form() {
        for &(l, f) in &[(0.3f64, 0.2f64), (4.0, 17.0), (120.0, 1.5), (2.0, 1e8)] {
            let want = f * (f / (f + l)).ln();
            // the reference form itself loses ~phi * eps absolute precision
            let tol = 1e-12 + 1e-15 * f;
            assert!(close(negbin_logpmf(0, l, f).unwrap(), want, tol), "{l} {f}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(negbin_logpmf(1, 0.0, 1.0).is_err());
        assert!(negbin_logpmf(1, 1.0, -1.0).is_err());
        assert!(negbin_logpmf(1, f64::NAN, 1.0).is_err());
        assert!(negbin_logpmf(1, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn sums_to_one_and_matches_simulated_moments() {
        let (lambda, phi) = (3.7, 2.2);
        let total: f64 = (0..=5000)
            .map(|n| negbin_logpmf(n, lambda, phi).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let gamma = Gamma::new(phi, lambda / phi).unwrap();
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let rate: f64 = gamma.sample(&mut rng);
            let k: f64 = Poisson::new(rate)
                .map(|p| p.sample(&mut rng))
                .unwrap_or(0.0);
            s1 += k;
            s2 += k * k;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let true_var = lambda * (1.0 + lambda / phi);
        // 4 standard errors
        assert!(
            (mean - lambda).abs() < 4.0 * (true_var / n as f64).sqrt(),
            "{mean}"
        );
        assert!((var - true_var).abs() / true_var < 0.02, "{var}");
    }

    #[test]
    fn large_phi_rising_factorial_is_accurate() {
        // direct product vs lgamma difference at moderate phi
        for &(phi, n) in &[(3.5, 40u64), (0.7, 200), (250.0, 1000)] {
            let direct: f64 = (0..n).map(|k| (phi + k as f64).ln()).sum();
            assert!(close(ln_rising(phi, n), direct, 1e-12));
        }
        // Poisson limit
        let l = 2.0f64;
        let pois = -l + 3.0 * l.ln() - 6f64.ln();
        assert!((negbin_logpmf(3, l, 1e10).unwrap() - pois).abs() < 1e-8);
    }

    #[test]
    fn rw1_cases() {
        let single = rw1_logdensity(&[0.0], 1.0, 0.001).unwrap();
        assert!(close(
            single,
            0.5 * (0.001 / (2.0 * std::f64::consts::PI)).ln(),
            1e-14
        ));
        let tau = 2.3;
        let zeros = rw1_logdensity(&[0.0; 7], tau, 0.001).unwrap();
        let want = single + 6.0 * 0.5 * (tau / (2.0 * std::f64::consts::PI)).ln();
        assert!(close(zeros, want, 1e-14));
        assert!(rw1_logdensity(&[0.0; 3], 0.0, 0.001).is_err());
        assert!(rw1_logdensity(&[], 1.0, 0.001).is_err());

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
        let scalar = |v: f64, m: f64, var: f64| {
            -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (v - m).powi(2) / (2.0 * var)
        };
        let mut oracle = scalar(x[0], 0.0, 1.0 / 0.001);
        for i in 1..10 {
            oracle += scalar(x[i], x[i - 1], 1.0 / tau);
        }
        assert!((rw1_logdensity(&x, tau, 0.001).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn log_mean_cases() {
        let spec = ModelSpec::base(4, 2).unwrap();
        let x = CovariateArray::none(spec.dims());
        let mut st = ParameterState::zeros(&spec);
        st.mu = 1.5;
        assert_eq!(log_mean(&st, &spec, &x, 2, 1, 0).unwrap(), 1.5);
        st.mu = 0.0;
        st.alpha[1] = 0.2;
        st.beta[2] = -0.3;
        assert!((log_mean(&st, &spec, &x, 1, 2, 0).unwrap() + 0.1).abs() < 1e-15);
        assert!(log_mean(&st, &spec, &x, 4, 0, 0).is_err());
        assert!(log_mean(&st, &spec, &x, 0, 3, 0).is_err());
    }

    fn random_state(spec: &ModelSpec, seed: u64) -> ParameterState {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut st = ParameterState::zeros(spec);
        let v = spec.variant;
        let mut fill = |xs: &mut Vec<f64>, on: bool| {
            if on {
                xs.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
            }
        };
        fill(&mut st.gamma, true);
        fill(&mut st.alpha, true);
        fill(&mut st.beta, true);
        fill(&mut st.alpha_ts, v.has_alpha_ts());
        fill(&mut st.beta_ds, v.has_beta_ds());
        fill(&mut st.delta_ind, v.has_delta_ind());
        fill(&mut st.delta_iar, v.has_delta_iar());
        st.mu = 0.7;
        st.tau_alpha = 2.0;
        st.tau_beta = 0.5;
        st.tau_beta_ds = 3.0;
        st.tau_alpha_ts = 1.5;
        st.tau_delta_ind = 0.8;
        st.tau_delta_iar = 1.3;
        st.phi = 4.0;
        st
    }

    #[test]
    fn m4_log_mean_matches_term_by_term() {
        let dims = Dims::new(5, 3, 4);
        let spec = ModelSpec::new(Variant::M4, dims)
            .unwrap()
            .with_covariates(2);
        let mut x = CovariateArray::zeros(dims, 2);
        for c in 0..dims.n_cells() {
            x.set(c, 0, (c as f64 * 0.37).sin());
            x.set(c, 1, (c as f64 * 0.11).cos());
        }
        let st = random_state(&spec, 42);
        for t in 0..5 {
            for d in 0..=3 {
                for s in 0..4 {
                    let c = dims.index(t, d, s);
                    let oracle = st.mu
                        + x.get(c, 0) * st.gamma[0]
                        + x.get(c, 1) * st.gamma[1]
                        + st.alpha[t]
                        + st.beta[d]
                        + st.beta_ds[d * 4 + s]
                        + st.delta_ind[s];
                    assert!((log_mean(&st, &spec, &x, t, d, s).unwrap() - oracle).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn base_prior_closed_form() {
        let (t, d) = (6usize, 3usize);
        let spec = ModelSpec::base(t, d).unwrap();
        let st = ParameterState::zeros(&spec);
        let g1 = 0.001 * 0.001f64.ln() - ln_gamma(0.001) - 0.001;
        let anchor = 0.5 * (0.001f64.ln() - LN_2PI);
        let walks = (t - 1 + d) as f64 * 0.5 * (1.0 / (2.0 * std::f64::consts::PI)).ln();
        let mu = 0.5 * ((1.0f64 / 1000.0).ln() - LN_2PI);
        let want = 3.0 * g1 + 2.0 * anchor + walks + mu;
        assert!(close(log_prior(&st, &spec, None).unwrap(), want, 1e-13));

        let mut doubled = st.clone();
        doubled.tau_alpha = 2.0;
        let diff = log_prior(&doubled, &spec, None).unwrap() - log_prior(&st, &spec, None).unwrap();
        let alpha_diff = rw1_logdensity(&doubled.alpha, 2.0, 0.001).unwrap()
            - rw1_logdensity(&st.alpha, 1.0, 0.001).unwrap()
            + gamma_logpdf(2.0, 0.001, 0.001)
            - gamma_logpdf(1.0, 0.001, 0.001);
        assert!((diff - alpha_diff).abs() < 1e-12);
    }

    #[test]
    fn m4_prior_matches_term_oracle() {
        let dims = Dims::new(6, 2, 3);
        let spec = ModelSpec::new(Variant::M4, dims).unwrap();
        let st = random_state(&spec, 7);
        let scalar = |v: f64, m: f64, var: f64| {
            -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (v - m).powi(2) / (2.0 * var)
        };
        let gam =
            |x: f64| 0.001 * 0.001f64.ln() - ln_gamma(0.001) + (0.001 - 1.0) * x.ln() - 0.001 * x;
        let mut oracle = scalar(st.mu, 0.0, 1000.0);
        oracle += scalar(st.alpha[0], 0.0, 1000.0);
        for i in 1..6 {
            oracle += scalar(st.alpha[i], st.alpha[i - 1], 1.0 / st.tau_alpha);
        }
        oracle += scalar(st.beta[0], 0.0, 1000.0);
        for i in 1..3 {
            oracle += scalar(st.beta[i], st.beta[i - 1], 1.0 / st.tau_beta);
        }
        oracle += st
            .beta_ds
            .iter()
            .map(|&b| scalar(b, 0.0, 1.0 / st.tau_beta_ds))
            .sum::<f64>();
        oracle += st
            .delta_ind
            .iter()
            .map(|&b| scalar(b, 0.0, 1.0 / st.tau_delta_ind))
            .sum::<f64>();
        oracle += gam(st.tau_alpha)
            + gam(st.tau_beta)
            + gam(st.tau_beta_ds)
            + gam(st.tau_delta_ind)
            + gam(st.phi);
        assert!((log_prior(&st, &spec, None).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn iar_variant_requires_structure() {
        let dims = Dims::new(5, 2, 3);
        let spec = ModelSpec::new(Variant::M1, dims).unwrap();
        let st = ParameterState::zeros(&spec);
        assert!(log_prior(&st, &spec, None).is_err());
        let iar = build_iar(&RegionMap::chain(3)).unwrap();
        assert!(log_prior(&st, &spec, Some(&iar)).unwrap().is_finite());
    }

    #[test]
    fn likelihood_cases() {
        let dims = Dims::new(3, 1, 1);
        let spec = ModelSpec::base(3, 1).unwrap();
        let x = CovariateArray::none(dims);
        let mut st = ParameterState::zeros(&spec);
        st.mu = 0.4;
        st.phi = 2.5;
        let empty = ReportingTriangle::new(dims, vec![None; 6]).unwrap();
        assert_eq!(log_likelihood(&st, &spec, &x, &empty).unwrap(), 0.0);
        let mut single = empty.clone();
        single.set_count(1, 0, 0, Some(0)).unwrap();
        let lambda = 0.4f64.exp();
        let want = 2.5 * (2.5 / (2.5 + lambda)).ln();
        assert!(close(
            log_likelihood(&st, &spec, &x, &single).unwrap(),
            want,
            1e-14
        ));
    }

    #[test]
    fn likelihood_matches_double_loop() {
        let dims = Dims::new(10, 3, 1);
        let spec = ModelSpec::base(10, 3).unwrap();
        let x = CovariateArray::none(dims);
        let st = random_state(&spec, 3);
        let full: Vec<u64> = (0..dims.n_cells() as u64)
            .map(|i| (i * 13 + 5) % 23)
            .collect();
        let tri = ReportingTriangle::censored(dims, &full).unwrap();
        let mut oracle = 0.0;
        for t in 0..10 {
            for d in 0..=3 {
                if t + d < 10 {
                    let n = full[t * 4 + d];
                    let lam = (st.mu + st.alpha[t] + st.beta[d]).exp();
                    let mut lp = -ln_factorial(n) - st.phi * (1.0 + lam / st.phi).ln();
                    lp += ln_gamma(n as f64 + st.phi) - ln_gamma(st.phi);
                    lp += n as f64 * (lam / (st.phi + lam)).ln();
                    oracle += lp;
                }
            }
        }
        assert!((log_likelihood(&st, &spec, &x, &tri).unwrap() - oracle).abs() < 1e-10);
        let post = log_posterior_unnormalized(&st, &spec, &x, &tri, None).unwrap();
        let sum =
            log_prior(&st, &spec, None).unwrap() + log_likelihood(&st, &spec, &x, &tri).unwrap();
        assert_eq!(post, sum);
    }

    #[test]
    fn shifting_mu_scales_every_mean() {
        let dims = Dims::new(4, 1, 1);
        let spec = ModelSpec::base(4, 1).unwrap();
        let x = CovariateArray::none(dims);
        let tri = ReportingTriangle::censored(dims, &[3, 1, 4, 1, 5, 9, 2, 6]).unwrap();
        let mut st = ParameterState::zeros(&spec);
        st.phi = 3.0;
        let before = log_likelihood(&st, &spec, &x, &tri).unwrap();
        st.mu += 1.0;
        let after = log_likelihood(&st, &spec, &x, &tri).unwrap();
        let e = std::f64::consts::E;
        let oracle: f64 = tri
            .observed_indices()
            .map(|i| {
                let n = tri.raw_counts()[i];
                negbin_logpmf(n, e, 3.0).unwrap() - negbin_logpmf(n, 1.0, 3.0).unwrap()
            })
            .sum();
        assert!((after - before - oracle).abs() < 1e-12);
    }

    #[test]
    fn tiny_model_grid_evidence_is_resolution_stable() {
        // evidence over (mu, alpha_3, beta_1) with the rest held fixed
        let dims = Dims::new(3, 1, 1);
        let spec = ModelSpec::base(3, 1).unwrap();
        let x = CovariateArray::none(dims);
        let tri = ReportingTriangle::censored(dims, &[12, 7, 15, 9, 20, 0]).unwrap();
        let evidence = |n: usize| {
            let (lo_m, hi_m) = (1.5, 3.5);
            let (lo_a, hi_a) = (-1.5, 1.5);
            let (lo_b, hi_b) = (-2.0, 1.0);
            let h = [
                (hi_m - lo_m) / n as f64,
                (hi_a - lo_a) / n as f64,
                (hi_b - lo_b) / n as f64,
            ];
            let mut st = ParameterState::zeros(&spec);
            st.phi = 5.0;
            let mut logs = Vec::with_capacity(n * n * n);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        st.mu = lo_m + (i as f64 + 0.5) * h[0];
                        st.alpha[2] = lo_a + (j as f64 + 0.5) * h[1];
                        st.beta[1] = lo_b + (k as f64 + 0.5) * h[2];
                        logs.push(log_posterior_unnormalized(&st, &spec, &x, &tri, None).unwrap());
                    }
                }
            }
            let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logs.iter().map(|l| (l - m).exp()).sum::<f64>() * h[0] * h[1] * h[2];
            m + z.ln()
        };
        let coarse = evidence(40);
        let fine = evidence(80);
        assert!(
            ((coarse - fine).exp() - 1.0).abs() < 0.01,
            "{coarse} vs {fine}"
        );
    }

    #[test]
    fn moment_identity_on_grid() {
        for &lambda in &[0.5, 3.0, 20.0] {
            for &phi in &[0.8, 5.0] {
                let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
                for n in 0..20_000u64 {
                    let p = negbin_logpmf(n, lambda, phi).unwrap().exp();
                    m0 += p;
                    m1 += p * n as f64;
                    m2 += p * (n as f64).powi(2);
                }
                let var = m2 / m0 - (m1 / m0).powi(2);
                assert!(((m1 / m0) - lambda).abs() / lambda < 1e-6);
                assert!((var - lambda * (1.0 + lambda / phi)).abs() / var < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn separable_time_effects(t1 in 0usize..6, t2 in 0usize..6, d in 0usize..3, seed in 0u64..500) {
            let spec = ModelSpec::base(6, 2).unwrap();
            let x = CovariateArray::none(spec.dims());
            let st = random_state(&spec, seed);
            let a = log_mean(&st, &spec, &x, t1, d, 0).unwrap();
            let b = log_mean(&st, &spec, &x, t2, d, 0).unwrap();
            prop_assert!((a - b - (st.alpha[t1] - st.alpha[t2])).abs() < 1e-12);
        }

        #[test]
        fn revealing_a_cell_changes_likelihood(n in 0u64..50, seed in 0u64..500) {
            let dims = Dims::new(5, 2, 1);
            let spec = ModelSpec::base(5, 2).unwrap();
            let x = CovariateArray::none(dims);
            let st = random_state(&spec, seed);
            let tri = ReportingTriangle::censored(dims, &vec![4; dims.n_cells()]).unwrap();
            let mut revealed = tri.clone();
            revealed.set_count(4, 2, 0, Some(n)).unwrap();
            let term = negbin_logpmf(n, log_mean(&st, &spec, &x, 4, 2, 0).unwrap().exp(), st.phi).unwrap();
            let diff = log_likelihood(&st, &spec, &x, &revealed).unwrap() - log_likelihood(&st, &spec, &x, &tri).unwrap();
            prop_assert!((diff - term).abs() < 1e-9);
            prop_assert!(term != 0.0 && diff != 0.0);
        }

        #[test]
        fn inactive_blocks_do_not_matter(seed in 0u64..500) {
            let dims = Dims::new(4, 2, 3);
            let spec = ModelSpec::new(Variant::M0, dims).unwrap();
            let st = random_state(&spec, seed);
            let mut other = st.clone();
            other.tau_beta_ds = 123.0;
            other.tau_alpha_ts = 0.01;
            prop_assert_eq!(log_prior(&st, &spec, None).unwrap(), log_prior(&other, &spec, None).unwrap());
        }
    }
}
