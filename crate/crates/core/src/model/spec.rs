use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NowcastError, Result};
use crate::triangle::Dims;

/// Mean-structure variant.
///
/// `Base` is the non-spatial chain-ladder form `mu + x'gamma + alpha_t + beta_d`.
/// The `M*` variants add, on top of an unstructured regional effect:
///
/// | variant | IAR regional | time x region | delay x region |
/// |---------|:---:|:---:|:---:|
/// | M0 |   |   |   |
/// | M1 | x |   |   |
/// | M2 |   | x |   |
/// | M3 | x | x |   |
/// | M4 |   |   | x |
/// | M5 | x |   | x |
/// | M6 |   | x | x |
/// | M7 | x | x | x |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    Base,
    M0,
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Base,
        Variant::M0,
        Variant::M1,
        Variant::M2,
        Variant::M3,
        Variant::M4,
        Variant::M5,
        Variant::M6,
        Variant::M7,
    ];

    pub fn is_spatial(&self) -> bool {
        *self != Variant::Base
    }

    pub fn has_delta_ind(&self) -> bool {
        self.is_spatial()
    }

    pub fn has_delta_iar(&self) -> bool {
        matches!(self, Variant::M1 | Variant::M3 | Variant::M5 | Variant::M7)
    }

    pub fn has_alpha_ts(&self) -> bool {
        matches!(self, Variant::M2 | Variant::M3 | Variant::M6 | Variant::M7)
    }

    pub fn has_beta_ds(&self) -> bool {
        matches!(self, Variant::M4 | Variant::M5 | Variant::M6 | Variant::M7)
    }

    /// Human-readable linear predictor.
    pub fn formula(&self) -> &'static str {
        match self {
            Variant::Base => "mu + alpha_t + beta_d",
            Variant::M0 => "mu + alpha_t + beta_d + delta_s",
            Variant::M1 => "mu + alpha_t + beta_d + delta_s + delta_iar_s",
            Variant::M2 => "mu + alpha_t + beta_d + delta_s + alpha_ts",
            Variant::M3 => "mu + alpha_t + beta_d + delta_s + alpha_ts + delta_iar_s",
            Variant::M4 => "mu + alpha_t + beta_d + delta_s + beta_ds",
            Variant::M5 => "mu + alpha_t + beta_d + delta_s + beta_ds + delta_iar_s",
            Variant::M6 => "mu + alpha_t + beta_d + delta_s + alpha_ts + beta_ds",
            Variant::M7 => "mu + alpha_t + beta_d + delta_s + alpha_ts + beta_ds + delta_iar_s",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Base => "BASE",
            Variant::M0 => "M0",
            Variant::M1 => "M1",
            Variant::M2 => "M2",
            Variant::M3 => "M3",
            Variant::M4 => "M4",
            Variant::M5 => "M5",
            Variant::M6 => "M6",
            Variant::M7 => "M7",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = NowcastError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                NowcastError::Parse(format!(
                    "unknown model variant `{s}` (expected BASE or M0..M7)"
                ))
            })
    }
}

impl TryFrom<String> for Variant {
    type Error = NowcastError;
    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<Variant> for String {
    fn from(value: Variant) -> Self {
        value.to_string()
    }
}

/// Gamma prior in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self {
            shape: 0.001,
            rate: 0.001,
        }
    }
}

/// Everything needed to define the posterior up to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(default)]
    pub covariate_count: usize,
    /// Precision of the first element of each random walk.
    #[serde(default = "default_anchor")]
    pub anchor_precision: f64,
    /// Prior on `phi` and on every active precision.
    #[serde(default)]
    pub hyperprior: GammaPrior,
    /// Variance of the zero-mean Gaussian priors on `mu` and `gamma`.
    #[serde(default = "default_fixed_variance")]
    pub fixed_effect_variance: f64,
}

fn default_anchor() -> f64 {
    0.001
}

fn default_fixed_variance() -> f64 {
    1000.0
}

impl ModelSpec {
    pub fn new(variant: Variant, dims: Dims) -> Result<Self> {
        let spec = Self {
            variant,
            t: dims.t,
            d: dims.d,
            s: dims.s,
            covariate_count: 0,
            anchor_precision: default_anchor(),
            hyperprior: GammaPrior::default(),
            fixed_effect_variance: default_fixed_variance(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn base(t: usize, d: usize) -> Result<Self> {
        Self::new(Variant::Base, Dims::new(t, d, 1))
    }

    pub fn with_covariates(mut self, p: usize) -> Self {
        self.covariate_count = p;
        self
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.t, self.d, self.s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.s == 0 {
            return Err(NowcastError::InvalidArgument(
                "T and S must be positive".into(),
            ));
        }
        if self.d < 1 {
            return Err(NowcastError::InvalidArgument("D must be at least 1".into()));
        }
        if self.variant == Variant::Base && self.s != 1 {
            return Err(NowcastError::InvalidArgument(format!(
                "the BASE model is non-spatial but S={}",
                self.s
            )));
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.anchor_precision)
            || !positive(self.hyperprior.shape)
            || !positive(self.hyperprior.rate)
            || !positive(self.fixed_effect_variance)
        {
            return Err(NowcastError::InvalidArgument(
                "prior constants must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}
