//! Synthetic data from the model's own generative process, with an optional
//! multiplicative outbreak, plus censoring and calibration experiments.

use chrono::NaiveDate;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NowcastError, Result};
use crate::inference::{run_mcmc, SamplerConfig};
use crate::model::{eta_at, CovariateArray, ModelContext, ModelSpec, ParameterState};
use crate::nowcast::{nowcast_totals, predict_cells, sample_negbin, target_rows};
use crate::rng::{derive_seed, stream_rng, StreamRng};
use crate::spatial::build_iar;
use crate::triangle::{Dims, LineListRecord, RegionMap, ReportingTriangle, TimeUnit};

/// Largest permitted `log lambda`.
const MAX_LOG_MEAN: f64 = 30.0;

/// Multiply `lambda` by `amplitude` in periods `start..start + duration` (one-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outbreak {
    pub start: usize,
    pub duration: usize,
    pub amplitude: f64,
}

impl Outbreak {
    /// Multiplier for zero-based period `t`.
    pub fn multiplier(&self, t: usize) -> f64 {
        let t = t + 1;
        if t >= self.start && t < self.start + self.duration {
            self.amplitude
        } else {
            1.0
        }
    }
}

/// Scales from which effects are drawn. Random-walk blocks start at
/// `alpha_start` / `beta_start`; standard deviations of inactive blocks are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub mu: f64,
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
    pub phi: f64,
    #[serde(default)]
    pub alpha_start: f64,
    #[serde(default)]
    pub beta_start: f64,
    /// Fixed delay profile used instead of a random-walk draw.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub sigma_alpha_ts: Option<f64>,
    #[serde(default)]
    pub sigma_beta_ds: Option<f64>,
    #[serde(default)]
    pub sigma_delta_ind: Option<f64>,
    #[serde(default)]
    pub sigma_delta_iar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Explicit(ParameterState),
    Hyperparameters(Hyperparameters),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub spec: ModelSpec,
    pub truth: Truth,
    /// Region labels and adjacency, required when the variant has an IAR block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<CovariateArray>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outbreak: Option<Outbreak>,
    #[serde(default)]
    pub seed: u64,
}

impl SimulationScenario {
    pub fn new(spec: ModelSpec, truth: Truth, seed: u64) -> Self {
        Self {
            spec,
            truth,
            regions: None,
            adjacency: None,
            covariates: None,
            outbreak: None,
            seed,
        }
    }

    pub fn with_map(mut self, map: &RegionMap) -> Self {
        self.regions = Some(map.regions.clone());
        self.adjacency = Some(map.adjacency.clone());
        self
    }

    pub fn with_outbreak(mut self, outbreak: Outbreak) -> Self {
        self.outbreak = Some(outbreak);
        self
    }

    pub fn region_map(&self) -> Result<Option<RegionMap>> {
        match (&self.regions, &self.adjacency) {
            (Some(r), Some(a)) => Ok(Some(RegionMap::new(r.clone(), a.clone())?)),
            (None, None) => Ok(None),
            (Some(r), None) if !self.spec.variant.has_delta_iar() => Ok(Some(RegionMap::new(
                r.clone(),
                vec![vec![0; r.len()]; r.len()],
            )?)),
            _ => Err(NowcastError::InvalidArgument(
                "scenario regions and adjacency must be given together".into(),
            )),
        }
    }

    fn covariates(&self) -> Result<CovariateArray> {
        match &self.covariates {
            Some(x) => {
                x.check(&self.spec)?;
                Ok(x.clone())
            }
            None if self.spec.covariate_count == 0 => Ok(CovariateArray::none(self.spec.dims())),
            None => Err(NowcastError::DimensionMismatch(
                "scenario model expects covariates".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if let Some(o) = &self.outbreak {
            if !(o.amplitude > 0.0 && o.amplitude.is_finite()) {
                return Err(NowcastError::InvalidArgument(
                    "outbreak amplitude must be positive".into(),
                ));
            }
        }
        if let Some(map) = self.region_map()? {
            if map.len() != self.spec.s {
                return Err(NowcastError::DimensionMismatch(format!(
                    "{} region labels for S = {}",
                    map.len(),
                    self.spec.s
                )));
            }
        } else if self.spec.variant.has_delta_iar() {
            return Err(NowcastError::InvalidArgument(
                "IAR scenarios need regions and adjacency".into(),
            ));
        }
        self.covariates()?;
        Ok(())
    }
}

/// Latent truth behind a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub state: ParameterState,
    /// `lambda` per cell after the outbreak multiplier, in storage order.
    pub lambda: Vec<f64>,
    /// Complete totals `N_{t,s}`, indexed `t * S + s`.
    pub totals: Vec<u64>,
}

impl SimulationTruth {
    pub fn total(&self, dims: Dims, t: usize, s: Option<usize>) -> u64 {
        match s {
            Some(s) => self.totals[t * dims.s + s],
            None => (0..dims.s).map(|s| self.totals[t * dims.s + s]).sum(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Complete triangle with every cell observed.
    pub full: ReportingTriangle,
    pub truth: SimulationTruth,
}

fn sd_to_precision(name: &str, sd: f64) -> Result<f64> {
    if sd > 0.0 && sd.is_finite() {
        Ok(1.0 / (sd * sd))
    } else {
        Err(NowcastError::InvalidArgument(format!(
            "{name} must be positive, got {sd}"
        )))
    }
}

fn random_walk(rng: &mut StreamRng, len: usize, start: f64, sd: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(len);
    let mut cur = start;
    for i in 0..len {
        if i > 0 {
            cur += sd * rng.sample::<f64, _>(StandardNormal);
        }
        x.push(cur);
    }
    x
}

fn normals(rng: &mut StreamRng, len: usize, sd: f64) -> Vec<f64> {
    (0..len)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Draw from the IAR prior restricted to the centred subspace.
fn iar_draw(rng: &mut StreamRng, map: &RegionMap, sd: f64) -> Result<Vec<f64>> {
    let iar = build_iar(map)?;
    let n = iar.len();
    let q = DMatrix::from_row_slice(n, n, iar.precision_matrix());
    let eig = SymmetricEigen::new(q);
    let mut delta = vec![0.0; n];
    for k in 0..n {
        let ev = eig.eigenvalues[k];
        if ev > 1e-9 {
            let z: f64 = rng.sample(StandardNormal);
            let w = z * sd / ev.sqrt();
            for (i, d) in delta.iter_mut().enumerate() {
                *d += w * eig.eigenvectors[(i, k)];
            }
        }
    }
    Ok(delta)
}

fn draw_state(
    scenario: &SimulationScenario,
    h: &Hyperparameters,
    rng: &mut StreamRng,
) -> Result<ParameterState> {
    let spec = &scenario.spec;
    let v = spec.variant;
    let dims = spec.dims();
    let mut st = ParameterState::zeros(spec);
    st.mu = h.mu;
    if h.gamma.len() != spec.covariate_count {
        return Err(NowcastError::DimensionMismatch(
            "gamma length differs from covariate count".into(),
        ));
    }
    st.gamma = h.gamma.clone();
    st.tau_alpha = sd_to_precision("sigma_alpha", h.sigma_alpha)?;
    st.alpha = random_walk(rng, dims.t, h.alpha_start, h.sigma_alpha);
    st.tau_beta = sd_to_precision("sigma_beta", h.sigma_beta)?;
    st.beta = match &h.beta {
        Some(b) if b.len() == dims.delays() => b.clone(),
        Some(b) => {
            return Err(NowcastError::DimensionMismatch(format!(
                "beta has {} entries, D + 1 = {}",
                b.len(),
                dims.delays()
            )))
        }
        None => random_walk(rng, dims.delays(), h.beta_start, h.sigma_beta),
    };
    if !(h.phi > 0.0 && h.phi.is_finite()) {
        return Err(NowcastError::InvalidArgument(format!(
            "phi must be positive, got {}",
            h.phi
        )));
    }
    st.phi = h.phi;
    let need = |name: &str, x: Option<f64>| {
        x.ok_or_else(|| NowcastError::InvalidArgument(format!("{} needs {name}", v)))
    };
    if v.has_alpha_ts() {
        let sd = need("sigma_alpha_ts", h.sigma_alpha_ts)?;
        st.tau_alpha_ts = sd_to_precision("sigma_alpha_ts", sd)?;
        st.alpha_ts = normals(rng, dims.t * dims.s, sd);
    }
    if v.has_beta_ds() {
        let sd = need("sigma_beta_ds", h.sigma_beta_ds)?;
        st.tau_beta_ds = sd_to_precision("sigma_beta_ds", sd)?;
        st.beta_ds = normals(rng, dims.delays() * dims.s, sd);
    }
    if v.has_delta_ind() {
        let sd = need("sigma_delta_ind", h.sigma_delta_ind)?;
        st.tau_delta_ind = sd_to_precision("sigma_delta_ind", sd)?;
        st.delta_ind = normals(rng, dims.s, sd);
    }
    if v.has_delta_iar() {
        let sd = need("sigma_delta_iar", h.sigma_delta_iar)?;
        st.tau_delta_iar = sd_to_precision("sigma_delta_iar", sd)?;
        let map = scenario.region_map()?.expect("validated");
        st.delta_iar = iar_draw(rng, &map, sd)?;
    }
    Ok(st)
}

/// Draw the latent state (stream 0) and every cell (stream 1) for `scenario.seed`.
pub fn simulate(scenario: &SimulationScenario) -> Result<Simulation> {
    scenario.validate()?;
    let spec = &scenario.spec;
    let dims = spec.dims();
    let x = scenario.covariates()?;
    let mut rng = stream_rng(scenario.seed, 0);
    let state = match &scenario.truth {
        Truth::Explicit(st) => {
            st.check(spec)?;
            st.clone()
        }
        Truth::Hyperparameters(h) => draw_state(scenario, h, &mut rng)?,
    };
    let mut lambda = Vec::with_capacity(dims.n_cells());
    for cell in 0..dims.n_cells() {
        let (t, d, s) = dims.unravel(cell);
        let m = scenario.outbreak.map_or(1.0, |o| o.multiplier(t));
        let log_mean = eta_at(&state, spec, &x, cell) + m.ln();
        if !(log_mean <= MAX_LOG_MEAN) {
            return Err(NowcastError::MeanOverflow {
                t: t + 1,
                d,
                s: s + 1,
                value: log_mean,
            });
        }
        lambda.push(log_mean.exp());
    }
    let mut rng = stream_rng(scenario.seed, 1);
    let counts = lambda
        .iter()
        .map(|&l| sample_negbin(l, state.phi, &mut rng))
        .collect::<Result<Vec<u64>>>()?;
    let mut totals = vec![0u64; dims.t * dims.s];
    for (cell, &n) in counts.iter().enumerate() {
        let (t, _, s) = dims.unravel(cell);
        totals[t * dims.s + s] += n;
    }
    let mut full = ReportingTriangle::new(dims, counts.into_iter().map(Some).collect())?;
    if let Some(labels) = &scenario.regions {
        full = full.with_regions(labels.clone())?;
    }
    Ok(Simulation {
        full,
        truth: SimulationTruth {
            state,
            lambda,
            totals,
        },
    })
}

/// The triangle as known at the end of period `as_of` (one-based): rows after
/// `as_of` are dropped and cell `(t, d)` is kept when `t + d <= as_of`.
pub fn censor(full: &ReportingTriangle, as_of: usize) -> Result<ReportingTriangle> {
    let dims = full.dims();
    if as_of == 0 {
        return Err(NowcastError::InvalidArgument(
            "as_of must be at least 1".into(),
        ));
    }
    let rows = as_of.min(dims.t);
    let out_dims = Dims::new(rows, dims.d, dims.s);
    let cells = (0..out_dims.n_cells())
        .map(|i| {
            let (t, d, s) = out_dims.unravel(i);
            if t + d < as_of {
                full.count(t, d, s)
            } else {
                None
            }
        })
        .collect();
    let overflow = full.overflow_all()[..rows * dims.s].to_vec();
    ReportingTriangle::new(out_dims, cells)?
        .with_regions(full.regions().to_vec())?
        .with_overflow(overflow)
        .map(|t| t.with_unit(full.unit()))
}

/// One record per counted case, dated at the start of its event and report periods.
pub fn to_line_list(
    tri: &ReportingTriangle,
    origin: NaiveDate,
    unit: TimeUnit,
) -> Vec<LineListRecord> {
    let dims = tri.dims();
    let origin = unit.period_start(origin);
    let mut out = Vec::new();
    for cell in tri.observed_indices() {
        let (t, d, s) = dims.unravel(cell);
        let event = unit.period_date(origin, t as i64);
        let report = unit.period_date(origin, (t + d) as i64);
        for _ in 0..tri.raw_counts()[cell] {
            let r = LineListRecord::new(event, report);
            out.push(if dims.s > 1 {
                r.in_region(tri.regions()[s].clone())
            } else {
                r
            });
        }
    }
    out
}

/// Outcome for one nowcast target of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub replicate: usize,
    /// One-based period.
    pub t: usize,
    /// One-based region, `None` for the all-region total.
    pub s: Option<usize>,
    pub truth: u64,
    pub level: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
}

impl CoverageRow {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn error(&self) -> f64 {
        self.median - self.truth as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
    /// Replicates that failed, with the error message.
    pub failures: Vec<(usize, String)>,
}

impl CoverageTable {
    /// Fraction of rows covered, optionally restricted by a predicate.
    pub fn coverage_where<F: Fn(&CoverageRow) -> bool>(&self, keep: F) -> Option<f64> {
        let rows: Vec<_> = self.rows.iter().filter(|r| keep(r)).collect();
        (!rows.is_empty())
            .then(|| rows.iter().filter(|r| r.covered).count() as f64 / rows.len() as f64)
    }

    /// Coverage over all targets at nominal `level`.
    pub fn coverage(&self, level: f64) -> Option<f64> {
        self.coverage_where(|r| r.level == level)
    }
}

/// Simulate, censor at the last period, fit, nowcast and score each replicate
/// at every nominal level in `levels`.
///
/// Replicate `r` uses scenario seed `derive_seed(scenario.seed, r)` and sampler
/// seed `derive_seed(cfg.seed, r)`; replicates run in parallel. Failed
/// replicates are recorded and skipped.
pub fn coverage_experiment(
    scenario: &SimulationScenario,
    replicates: usize,
    cfg: &SamplerConfig,
    levels: &[f64],
) -> Result<CoverageTable> {
    if replicates == 0 {
        return Err(NowcastError::InvalidArgument(
            "at least one replicate is required".into(),
        ));
    }
    if levels.is_empty() || levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return Err(NowcastError::InvalidArgument(
            "coverage level must lie in (0, 1)".into(),
        ));
    }
    scenario.validate()?;
    cfg.validate()?;
    let map = scenario.region_map()?;
    let results: Vec<(usize, Result<Vec<CoverageRow>>)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            (
                r,
                coverage_replicate(scenario, map.as_ref(), cfg, levels, r),
            )
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(x) => rows.extend(x),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    Ok(CoverageTable { rows, failures })
}

fn coverage_replicate(
    scenario: &SimulationScenario,
    map: Option<&RegionMap>,
    cfg: &SamplerConfig,
    levels: &[f64],
    r: usize,
) -> Result<Vec<CoverageRow>> {
    let mut sc = scenario.clone();
    sc.seed = derive_seed(scenario.seed, r as u64);
    let sim = simulate(&sc)?;
    let dims = sim.full.dims();
    let tri = censor(&sim.full, dims.t)?;
    let x = sc.covariates()?;
    let ctx = ModelContext::new(&sc.spec, &tri, Some(&x), map)?;
    let cfg = SamplerConfig {
        seed: derive_seed(cfg.seed, r as u64),
        ..cfg.clone()
    };
    let samples = run_mcmc(&ctx, &cfg)?;
    let cells = predict_cells(&samples, &tri, derive_seed(cfg.seed, u64::MAX))?;
    let res = nowcast_totals(cells, &tri, None);
    debug_assert!(res.targets.iter().all(|t| target_rows(&tri).contains(&t.t)));
    let mut rows = Vec::new();
    for (i, target) in res.targets.iter().enumerate() {
        let truth = sim.truth.total(dims, target.t, target.s);
        for &level in levels {
            let (lower, upper) = res.interval(i, level);
            rows.push(CoverageRow {
                replicate: r,
                t: target.t + 1,
                s: target.s.map(|s| s + 1),
                truth,
                level,
                median: res.summaries[i].median,
                lower,
                upper,
                covered: lower <= truth as f64 && truth as f64 <= upper,
            });
        }
    }
    Ok(rows)
}
