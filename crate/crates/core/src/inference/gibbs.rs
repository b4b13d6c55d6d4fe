use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{NowcastError, Result};
use crate::model::GammaPrior;

/// Full conditional of a precision: `Gamma(a + k/2, b + SS/2)` (shape/rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaConditional {
    pub shape: f64,
    pub rate: f64,
}

impl GammaConditional {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn log_density(&self, x: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
            - self.rate * x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate)
            .expect("positive shape and rate")
            .sample(rng)
    }
}

/// Conditional for a Gaussian block whose density is `tau^(k/2) exp(-tau/2 * sum terms^2)`.
///
/// `terms` are successive differences for a random walk, the values for an
/// unstructured block, or neighbour differences for an IAR block (with
/// `effective_dim` equal to the rank).
pub fn precision_conditional(
    terms: &[f64],
    prior: GammaPrior,
    effective_dim: usize,
) -> Result<GammaConditional> {
    let ss: f64 = terms.iter().map(|x| x * x).sum();
    if !ss.is_finite() {
        return Err(NowcastError::NonFinite(
            "sum of squares in precision update".into(),
        ));
    }
    Ok(GammaConditional {
        shape: prior.shape + 0.5 * effective_dim as f64,
        rate: prior.rate + 0.5 * ss,
    })
}

/// One Gibbs draw of a precision.
pub fn gibbs_precision<R: Rng + ?Sized>(
    terms: &[f64],
    prior: GammaPrior,
    effective_dim: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(precision_conditional(terms, prior, effective_dim)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn shape_and_rate_arithmetic() {
        let prior = GammaPrior::default();
        let c = precision_conditional(&[0.0; 9], prior, 9).unwrap();
        assert!((c.shape - 4.501).abs() < 1e-12);
        assert!((c.rate - 0.001).abs() < 1e-15);
        let c = precision_conditional(&[2.0], prior, 1).unwrap();
        assert!((c.rate - 2.001).abs() < 1e-12);
        assert!(precision_conditional(&[f64::NAN], prior, 1).is_err());
    }

    #[test]
    fn empirical_mean_matches_conditional() {
        let prior = GammaPrior::default();
        let terms = [0.3, -1.2, 0.5, 0.8, -0.1, 0.4];
        let c = precision_conditional(&terms, prior, terms.len()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| gibbs_precision(&terms, prior, 6, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (c.shape).sqrt() / c.rate;
        assert!(
            (mean - c.mean()).abs() < 4.0 * sd / (n as f64).sqrt(),
            "{mean} vs {}",
            c.mean()
        );
    }
}
