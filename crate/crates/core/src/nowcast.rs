//! Posterior predictive draws of unreported cells and of the marginal totals
//! `N_t` for the most recent `D` periods, with threshold exceedance.

use std::io::Write;

use chrono::NaiveDate;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NowcastError, Result};
use crate::inference::{run_mcmc, PosteriorSamples, SamplerConfig};
use crate::model::{ModelContext, ModelSpec, Variant};
use crate::rng::{substream_rng, StreamRng};
use crate::triangle::{
    build_triangle, BuildOptions, LineListRecord, RegionMap, ReportingTriangle, TimeUnit,
};

/// One NegBin draw as a gamma-Poisson mixture: `G ~ Gamma(phi, lambda / phi)`, `n ~ Poisson(G)`.
pub fn sample_negbin(lambda: f64, phi: f64, rng: &mut StreamRng) -> Result<u64> {
    if !(lambda.is_finite() && lambda >= 0.0 && phi > 0.0 && phi.is_finite()) {
        return Err(NowcastError::NonFinite(format!(
            "predictive mean {lambda} with phi {phi}"
        )));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    let rate = Gamma::new(phi, lambda / phi)
        .map_err(|e| NowcastError::NonFinite(e.to_string()))?
        .sample(rng);
    if rate <= 0.0 {
        return Ok(0);
    }
    let n: f64 = Poisson::new(rate)
        .map_err(|e| NowcastError::NonFinite(format!("Poisson rate {rate}: {e}")))?
        .sample(rng);
    Ok(n as u64)
}

/// Predictive draws for every unobserved cell, stored draw-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDraws {
    /// Flat indices of the unobserved cells in storage order.
    pub cells: Vec<usize>,
    pub n_draws: usize,
    values: Vec<u64>,
}

impl CellDraws {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty() || self.n_draws == 0
    }

    /// Draws of all cells for posterior draw `m`.
    pub fn draw(&self, m: usize) -> &[u64] {
        let k = self.cells.len();
        &self.values[m * k..(m + 1) * k]
    }

    /// Draws of one cell (position in [`Self::cells`]) across posterior draws.
    pub fn cell(&self, j: usize) -> Vec<u64> {
        (0..self.n_draws).map(|m| self.draw(m)[j]).collect()
    }
}

/// One predictive draw per posterior draw and unobserved cell.
///
/// The draw for posterior draw `m` and cell index `i` comes from stream
/// `(seed, m, i + 1)`, so the result does not depend on the order (or
/// parallel schedule) in which cells are simulated.
pub fn predict_cells(
    samples: &PosteriorSamples,
    tri: &ReportingTriangle,
    seed: u64,
) -> Result<CellDraws> {
    if tri.dims() != samples.spec.dims() {
        return Err(NowcastError::SpecMismatch(format!(
            "samples fitted to {:?}, triangle is {:?}",
            samples.spec.dims(),
            tri.dims()
        )));
    }
    let cells: Vec<usize> = tri.unobserved_indices().collect();
    let k = cells.len();
    let n_draws = samples.len();
    let mut values = vec![0u64; k * n_draws];
    if k > 0 {
        values
            .par_chunks_mut(k)
            .zip(samples.draws.par_iter())
            .enumerate()
            .try_for_each(|(m, (out, draw))| {
                for (slot, &cell) in out.iter_mut().zip(&cells) {
                    let mut rng = substream_rng(seed, m as u64, cell as u64 + 1);
                    let lambda = samples.eta(&draw.state, cell).exp();
                    *slot = sample_negbin(lambda, draw.state.phi, &mut rng)?;
                }
                Ok::<_, NowcastError>(())
            })?;
    }
    Ok(CellDraws {
        cells,
        n_draws,
        values,
    })
}

/// A nowcast target: period `t` (zero-based) in region `s`, or all regions when `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub t: usize,
    pub s: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub target: Target,
    pub observed_partial: u64,
    pub mean: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub exceedance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NowcastResult {
    pub cells: CellDraws,
    pub targets: Vec<Target>,
    /// Draws of `N_t` per target, in posterior draw order.
    pub totals: Vec<Vec<u64>>,
    pub summaries: Vec<TargetSummary>,
    pub threshold: Option<f64>,
}

impl NowcastResult {
    /// Equal-tailed interval at `level` for target `i`.
    pub fn interval(&self, i: usize, level: f64) -> (f64, f64) {
        let sorted = sorted_f64(&self.totals[i]);
        let a = 0.5 * (1.0 - level);
        (
            quantile_sorted(&sorted, a),
            quantile_sorted(&sorted, 1.0 - a),
        )
    }

    pub fn find(&self, target: Target) -> Option<usize> {
        self.targets.iter().position(|x| *x == target)
    }
}

fn sorted_f64(x: &[u64]) -> Vec<f64> {
    let mut v: Vec<f64> = x.iter().map(|&n| n as f64).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary of one set of total draws.
pub fn summarize(
    target: Target,
    observed_partial: u64,
    draws: &[u64],
    threshold: Option<f64>,
) -> TargetSummary {
    let sorted = sorted_f64(draws);
    let n = sorted.len() as f64;
    TargetSummary {
        target,
        observed_partial,
        mean: sorted.iter().sum::<f64>() / n,
        median: quantile_sorted(&sorted, 0.5),
        lower: quantile_sorted(&sorted, 0.025),
        upper: quantile_sorted(&sorted, 0.975),
        exceedance: threshold.map(|c| sorted.iter().filter(|&&x| x > c).count() as f64 / n),
    }
}

/// Target periods `T-D+1..=T` (zero-based `T-D..T`).
pub fn target_rows(tri: &ReportingTriangle) -> std::ops::Range<usize> {
    let dims = tri.dims();
    dims.t.saturating_sub(dims.d)..dims.t
}

/// Totals `N_{t,s}` = observed partial sum + predicted cells of the row, for
/// every target row and region, plus all-region totals when `S > 1`.
pub fn nowcast_totals(
    cells: CellDraws,
    tri: &ReportingTriangle,
    threshold: Option<f64>,
) -> NowcastResult {
    let dims = tri.dims();
    let mut targets = Vec::new();
    for t in target_rows(tri) {
        targets.extend((0..dims.s).map(|s| Target { t, s: Some(s) }));
        if dims.s > 1 {
            targets.push(Target { t, s: None });
        }
    }
    let in_target = |target: &Target, cell: usize| {
        let (t, _, s) = dims.unravel(cell);
        t == target.t && target.s.is_none_or(|x| x == s)
    };
    let mut totals = Vec::with_capacity(targets.len());
    let mut summaries = Vec::with_capacity(targets.len());
    for target in &targets {
        let partial = match target.s {
            Some(s) => tri.observed_partial(target.t, s),
            None => (0..dims.s).map(|s| tri.observed_partial(target.t, s)).sum(),
        };
        let positions: Vec<usize> = (0..cells.cells.len())
            .filter(|&j| in_target(target, cells.cells[j]))
            .collect();
        let draws: Vec<u64> = (0..cells.n_draws)
            .map(|m| {
                let row = cells.draw(m);
                partial + positions.iter().map(|&j| row[j]).sum::<u64>()
            })
            .collect();
        if !draws.is_empty() {
            summaries.push(summarize(*target, partial, &draws, threshold));
        }
        totals.push(draws);
    }
    NowcastResult {
        cells,
        targets,
        totals,
        summaries,
        threshold,
    }
}

/// Nowcast CSV: `t,s,observed_partial,mean,median,q2.5,q97.5` and an
/// `exceedance` column when a threshold was given. `t` is one-based and `s`
/// is the region label or `all`.
pub fn write_nowcast_csv<W: Write>(
    result: &NowcastResult,
    regions: &[String],
    writer: W,
) -> Result<()> {
    write_nowcast_csv_with_quantiles(result, regions, &[0.025, 0.975], writer)
}

/// Column label of quantile `p`, e.g. `q2.5` for 0.025.
pub fn quantile_label(p: f64) -> String {
    format!("q{}", (p * 1e8).round() / 1e6)
}

/// As [`write_nowcast_csv`] with one `q<percent>` column per entry of
/// `quantiles` (0.5 is already reported as `median` and is skipped).
pub fn write_nowcast_csv_with_quantiles<W: Write>(
    result: &NowcastResult,
    regions: &[String],
    quantiles: &[f64],
    writer: W,
) -> Result<()> {
    if let Some(p) = quantiles.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(NowcastError::InvalidArgument(format!(
            "quantile {p} outside [0, 1]"
        )));
    }
    let quantiles: Vec<f64> = quantiles.iter().copied().filter(|&p| p != 0.5).collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["t", "s", "observed_partial", "mean", "median"]
        .map(String::from)
        .to_vec();
    header.extend(quantiles.iter().map(|&p| quantile_label(p)));
    if result.threshold.is_some() {
        header.push("exceedance".into());
    }
    w.write_record(&header)?;
    for s in &result.summaries {
        let i = result.find(s.target).expect("summary of a listed target");
        let sorted = sorted_f64(&result.totals[i]);
        let region = s.target.s.map_or("all".to_string(), |i| regions[i].clone());
        let mut rec = vec![
            (s.target.t + 1).to_string(),
            region,
            s.observed_partial.to_string(),
            s.mean.to_string(),
            s.median.to_string(),
        ];
        rec.extend(
            quantiles
                .iter()
                .map(|&p| quantile_sorted(&sorted, p).to_string()),
        );
        if let Some(e) = s.exceedance {
            rec.push(e.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Predictive draws of every target total: a `draw` column, then one `N[t,s]`
/// column per target (one-based `t`, region label or `all`).
pub fn write_total_draws<W: Write>(
    result: &NowcastResult,
    regions: &[String],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["draw".to_string()];
    header.extend(result.targets.iter().map(|t| {
        format!(
            "N[{},{}]",
            t.t + 1,
            t.s.map_or("all".to_string(), |s| regions[s].clone())
        )
    }));
    w.write_record(&header)?;
    let n = result.totals.first().map_or(0, Vec::len);
    for m in 0..n {
        let mut rec = vec![m.to_string()];
        rec.extend(result.totals.iter().map(|col| col[m].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Settings shared by every as-of date of a rolling evaluation.
#[derive(Debug, Clone)]
pub struct RollingOptions<'a> {
    pub unit: TimeUnit,
    pub max_delay: usize,
    /// Period containing this date is row 1 for every refit; defaults to the earliest event.
    pub origin: Option<NaiveDate>,
    pub regions: Option<&'a RegionMap>,
    pub variant: Variant,
    pub sampler: SamplerConfig,
    pub threshold: Option<f64>,
    pub predictive_seed: u64,
}

#[derive(Debug, Clone)]
pub struct RollingNowcast {
    pub as_of: NaiveDate,
    pub triangle: ReportingTriangle,
    pub result: NowcastResult,
}

/// Rebuild the triangle as known at each date, refit and nowcast.
pub fn rolling_nowcast(
    records: &[LineListRecord],
    opts: &RollingOptions<'_>,
    dates: &[NaiveDate],
) -> Result<Vec<RollingNowcast>> {
    if dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(NowcastError::InvalidArgument(
            "as-of dates must be strictly increasing".into(),
        ));
    }
    let origin = opts
        .origin
        .or_else(|| records.iter().map(|r| r.event_time).min())
        .ok_or(NowcastError::EmptyRecords)?;
    dates
        .iter()
        .map(|&as_of| {
            let known: Vec<LineListRecord> = records
                .iter()
                .filter(|r| r.event_time <= as_of)
                .cloned()
                .collect();
            let build = BuildOptions {
                unit: opts.unit,
                max_delay: opts.max_delay,
                as_of,
                regions: opts.regions,
                origin: Some(origin),
            };
            let tri = build_triangle(&known, &build)?;
            let spec = ModelSpec::new(opts.variant, tri.dims())?;
            let ctx = ModelContext::new(&spec, &tri, None, opts.regions)?;
            let samples = run_mcmc(&ctx, &opts.sampler)?;
            let cells = predict_cells(&samples, &tri, opts.predictive_seed)?;
            let result = nowcast_totals(cells, &tri, opts.threshold);
            Ok(RollingNowcast {
                as_of,
                triangle: tri,
                result,
            })
        })
        .collect()
}
