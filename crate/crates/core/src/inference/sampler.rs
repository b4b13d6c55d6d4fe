use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::adapt::{adaptation_gain, AdaptiveScale};
use super::gibbs::gibbs_precision;
use super::{AdaptationLog, Draw, FixedParameters, PosteriorSamples, SamplerConfig};
use crate::error::{NowcastError, Result};
use crate::model::{
    eta_at, gamma_logpdf, ln_rising, rw1_logdensity, GammaPrior, ModelContext, ParameterState,
};
use crate::rng::{stream_rng, StreamRng};
use crate::spatial::iar_logdensity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Mu,
    Gamma,
    Alpha,
    Beta,
    AlphaTs,
    BetaDs,
    DeltaInd,
    DeltaIar,
    Phi,
}

const BLOCKS: [Block; 9] = [
    Block::Mu,
    Block::Gamma,
    Block::Alpha,
    Block::Beta,
    Block::AlphaTs,
    Block::BetaDs,
    Block::DeltaInd,
    Block::DeltaIar,
    Block::Phi,
];

impl Block {
    fn name(self) -> &'static str {
        match self {
            Block::Mu => "mu",
            Block::Gamma => "gamma",
            Block::Alpha => "alpha",
            Block::Beta => "beta",
            Block::AlphaTs => "alpha_ts",
            Block::BetaDs => "beta_ds",
            Block::DeltaInd => "delta_ind",
            Block::DeltaIar => "delta_iar",
            Block::Phi => "phi",
        }
    }
}

/// Observed cells and, for each effect, the positions of the observed cells it touches.
struct Layout {
    cells: Vec<usize>,
    n: Vec<f64>,
    all: Vec<u32>,
    by_t: Vec<Vec<u32>>,
    by_d: Vec<Vec<u32>>,
    by_ts: Vec<Vec<u32>>,
    by_ds: Vec<Vec<u32>>,
    by_s: Vec<Vec<u32>>,
    /// Distinct positive counts with multiplicities, for the `phi` update.
    hist: Vec<(u64, f64)>,
}

impl Layout {
    fn new(ctx: &ModelContext) -> Self {
        let dims = ctx.spec.dims();
        let (t_len, d_len, s_len) = (dims.t, dims.delays(), dims.s);
        let counts = ctx.triangle.raw_counts();
        let cells: Vec<usize> = ctx.triangle.observed_indices().collect();
        let mut by_t = vec![Vec::new(); t_len];
        let mut by_d = vec![Vec::new(); d_len];
        let mut by_ts = vec![Vec::new(); t_len * s_len];
        let mut by_ds = vec![Vec::new(); d_len * s_len];
        let mut by_s = vec![Vec::new(); s_len];
        let mut hist = BTreeMap::new();
        for (k, &cell) in cells.iter().enumerate() {
            let (t, d, s) = dims.unravel(cell);
            let k = k as u32;
            by_t[t].push(k);
            by_d[d].push(k);
            by_ts[t * s_len + s].push(k);
            by_ds[d * s_len + s].push(k);
            by_s[s].push(k);
            if counts[cell] > 0 {
                *hist.entry(counts[cell]).or_insert(0.0) += 1.0;
            }
        }
        Self {
            n: cells.iter().map(|&c| counts[c] as f64).collect(),
            all: (0..cells.len() as u32).collect(),
            cells,
            by_t,
            by_d,
            by_ts,
            by_ds,
            by_s,
            hist: hist.into_iter().collect(),
        }
    }

    /// Starting random-walk scale from a rough Fisher information of the touched cells.
    fn initial_scale(&self, cells: &[u32]) -> f64 {
        let info: f64 = cells
            .iter()
            .map(|&k| {
                let m = self.n[k as usize] + 0.5;
                m * 10.0 / (10.0 + m)
            })
            .sum();
        2.4 / (info + 1.0).sqrt()
    }
}

/// `ln(phi + exp(eta))`.
#[inline]
fn log_denominator(phi: f64, eta: f64) -> f64 {
    let e = eta.exp();
    if e.is_finite() {
        (phi + e).ln()
    } else {
        eta
    }
}

/// Terms of a random walk prior that involve position `i` evaluated at `v`.
#[inline]
fn rw1_local(x: &[f64], i: usize, v: f64, tau: f64, anchor: f64) -> f64 {
    let mut lp = if i == 0 {
        -0.5 * anchor * v * v
    } else {
        -0.5 * tau * (v - x[i - 1]).powi(2)
    };
    if i + 1 < x.len() {
        lp -= 0.5 * tau * (x[i + 1] - v).powi(2);
    }
    lp
}

/// Exact draw of a shift `c` whose log conditional `f` is quadratic.
fn gaussian_shift(rng: &mut StreamRng, f: impl Fn(f64) -> f64) -> f64 {
    let (fm, f0, fp) = (f(-1.0), f(0.0), f(1.0));
    let precision = f0 * 2.0 - (fp + fm);
    let linear = 0.5 * (fp - fm);
    if !(precision > 0.0 && precision.is_finite() && linear.is_finite()) {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    linear / precision + z / precision.sqrt()
}

/// Tiny Gamma shapes can underflow to exactly zero.
fn positive(x: f64) -> f64 {
    x.max(f64::MIN_POSITIVE)
}

struct Chain<'c, 'a> {
    ctx: &'c ModelContext<'a>,
    lay: &'c Layout,
    fixed: &'c FixedParameters,
    st: ParameterState,
    eta: Vec<f64>,
    lden: Vec<f64>,
    scratch: Vec<f64>,
    scales: Vec<Vec<AdaptiveScale>>,
    rng: StreamRng,
}

impl<'c, 'a> Chain<'c, 'a> {
    fn new(
        ctx: &'c ModelContext<'a>,
        lay: &'c Layout,
        fixed: &'c FixedParameters,
        rng: StreamRng,
    ) -> Result<Self> {
        let spec = ctx.spec;
        let v = spec.variant;
        let dims = spec.dims();
        let mut st = ParameterState::zeros(spec);
        let mean = if lay.n.is_empty() {
            0.0
        } else {
            lay.n.iter().sum::<f64>() / lay.n.len() as f64
        };
        st.mu = (mean + 0.5).ln();
        let apply = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        apply(&mut st.tau_alpha, fixed.tau_alpha);
        apply(&mut st.tau_beta, fixed.tau_beta);
        apply(&mut st.tau_alpha_ts, fixed.tau_alpha_ts);
        apply(&mut st.tau_beta_ds, fixed.tau_beta_ds);
        apply(&mut st.tau_delta_ind, fixed.tau_delta_ind);
        apply(&mut st.tau_delta_iar, fixed.tau_delta_iar);
        apply(&mut st.phi, fixed.phi);
        check_initial(ctx, &st)?;

        let sc = |cells: &Vec<u32>| AdaptiveScale::new(lay.initial_scale(cells));
        let mut scales = vec![Vec::new(); BLOCKS.len()];
        scales[Block::Mu as usize] = vec![sc(&lay.all)];
        scales[Block::Gamma as usize] = vec![sc(&lay.all); spec.covariate_count];
        scales[Block::Alpha as usize] = lay.by_t.iter().map(sc).collect();
        scales[Block::Beta as usize] = lay.by_d.iter().map(sc).collect();
        if v.has_alpha_ts() {
            scales[Block::AlphaTs as usize] = lay.by_ts.iter().map(sc).collect();
        }
        if v.has_beta_ds() {
            scales[Block::BetaDs as usize] = lay.by_ds.iter().map(sc).collect();
        }
        if v.has_delta_ind() {
            scales[Block::DeltaInd as usize] = lay.by_s.iter().map(sc).collect();
        }
        if let Some(iar) = ctx.iar() {
            scales[Block::DeltaIar as usize] = (0..dims.s)
                .map(|s| {
                    if iar.is_isolated(s) {
                        AdaptiveScale::new(0.0)
                    } else {
                        sc(&lay.by_s[s])
                    }
                })
                .collect();
        }
        if fixed.phi.is_none() {
            scales[Block::Phi as usize] = vec![AdaptiveScale::new(0.2)];
        }

        let n_obs = lay.cells.len();
        let mut chain = Self {
            ctx,
            lay,
            fixed,
            st,
            eta: vec![0.0; n_obs],
            lden: vec![0.0; n_obs],
            scratch: vec![0.0; n_obs],
            scales,
            rng,
        };
        chain.refresh();
        Ok(chain)
    }

    fn refresh(&mut self) {
        let ctx = self.ctx;
        for (k, &cell) in self.lay.cells.iter().enumerate() {
            let e = eta_at(&self.st, ctx.spec, &ctx.covariates, cell);
            self.eta[k] = e;
            self.lden[k] = log_denominator(self.st.phi, e);
        }
    }

    #[inline]
    fn accept(&mut self, log_ratio: f64) -> bool {
        let u: f64 = self.rng.random();
        log_ratio.is_finite() && u.ln() < log_ratio
    }

    fn propose(&mut self, block: Block, i: usize, current: f64) -> f64 {
        self.scales[block as usize][i].propose(current, &mut self.rng)
    }

    /// Metropolis step for a move that adds `delta` to `eta` on `cells`.
    fn try_shift(&mut self, block: Block, i: usize, cells: &[u32], delta: f64, dlp: f64) -> bool {
        let phi = self.st.phi;
        let mut dll = 0.0;
        for (j, &k) in cells.iter().enumerate() {
            let k = k as usize;
            let n = self.lay.n[k];
            let l = log_denominator(phi, self.eta[k] + delta);
            self.scratch[j] = l;
            dll += n * delta - (n + phi) * (l - self.lden[k]);
        }
        let ok = self.accept(dlp + dll);
        self.scales[block as usize][i].record(ok);
        if ok {
            for (j, &k) in cells.iter().enumerate() {
                self.eta[k as usize] += delta;
                self.lden[k as usize] = self.scratch[j];
            }
        }
        ok
    }

    /// Metropolis step for `gamma_j`, whose effect varies by cell.
    fn try_covariate(&mut self, j: usize, delta: f64, dlp: f64) -> bool {
        let phi = self.st.phi;
        let x = &self.ctx.covariates;
        let mut dll = 0.0;
        for (k, &cell) in self.lay.cells.iter().enumerate() {
            let dk = delta * x.get(cell, j);
            let n = self.lay.n[k];
            let l = log_denominator(phi, self.eta[k] + dk);
            self.scratch[k] = l;
            dll += n * dk - (n + phi) * (l - self.lden[k]);
        }
        let ok = self.accept(dlp + dll);
        self.scales[Block::Gamma as usize][j].record(ok);
        if ok {
            for (k, &cell) in self.lay.cells.iter().enumerate() {
                self.eta[k] += delta * x.get(cell, j);
            }
            std::mem::swap(&mut self.lden, &mut self.scratch);
        }
        ok
    }

    fn sweep(&mut self) -> Result<()> {
        let ctx = self.ctx;
        let lay = self.lay;
        let spec = ctx.spec;
        let v = spec.variant;
        let dims = spec.dims();
        let s_len = dims.s;
        let fixed_prec = 1.0 / spec.fixed_effect_variance;
        let anchor = spec.anchor_precision;

        let cur = self.st.mu;
        let prop = self.propose(Block::Mu, 0, cur);
        let dlp = -0.5 * fixed_prec * (prop * prop - cur * cur);
        if self.try_shift(Block::Mu, 0, &lay.all, prop - cur, dlp) {
            self.st.mu = prop;
        }

        for j in 0..spec.covariate_count {
            let cur = self.st.gamma[j];
            let prop = self.propose(Block::Gamma, j, cur);
            let dlp = -0.5 * fixed_prec * (prop * prop - cur * cur);
            if self.try_covariate(j, prop - cur, dlp) {
                self.st.gamma[j] = prop;
            }
        }

        for t in 0..dims.t {
            let cur = self.st.alpha[t];
            let prop = self.propose(Block::Alpha, t, cur);
            let tau = self.st.tau_alpha;
            let dlp = rw1_local(&self.st.alpha, t, prop, tau, anchor)
                - rw1_local(&self.st.alpha, t, cur, tau, anchor);
            if self.try_shift(Block::Alpha, t, &lay.by_t[t], prop - cur, dlp) {
                self.st.alpha[t] = prop;
            }
        }

        for d in 0..dims.delays() {
            let cur = self.st.beta[d];
            let prop = self.propose(Block::Beta, d, cur);
            let tau = self.st.tau_beta;
            let dlp = rw1_local(&self.st.beta, d, prop, tau, anchor)
                - rw1_local(&self.st.beta, d, cur, tau, anchor);
            if self.try_shift(Block::Beta, d, &lay.by_d[d], prop - cur, dlp) {
                self.st.beta[d] = prop;
            }
        }

        if v.has_alpha_ts() {
            for i in 0..self.st.alpha_ts.len() {
                let cur = self.st.alpha_ts[i];
                let prop = self.propose(Block::AlphaTs, i, cur);
                let dlp = -0.5 * self.st.tau_alpha_ts * (prop * prop - cur * cur);
                if self.try_shift(Block::AlphaTs, i, &lay.by_ts[i], prop - cur, dlp) {
                    self.st.alpha_ts[i] = prop;
                }
            }
        }

        if v.has_beta_ds() {
            for i in 0..self.st.beta_ds.len() {
                let cur = self.st.beta_ds[i];
                let prop = self.propose(Block::BetaDs, i, cur);
                let dlp = -0.5 * self.st.tau_beta_ds * (prop * prop - cur * cur);
                if self.try_shift(Block::BetaDs, i, &lay.by_ds[i], prop - cur, dlp) {
                    self.st.beta_ds[i] = prop;
                }
            }
        }

        if v.has_delta_ind() {
            for s in 0..s_len {
                let cur = self.st.delta_ind[s];
                let prop = self.propose(Block::DeltaInd, s, cur);
                let dlp = -0.5 * self.st.tau_delta_ind * (prop * prop - cur * cur);
                if self.try_shift(Block::DeltaInd, s, &lay.by_s[s], prop - cur, dlp) {
                    self.st.delta_ind[s] = prop;
                }
            }
        }

        if let Some(iar) = ctx.iar() {
            // Each move stays on the centred subspace: region s moves by `delta`,
            // its component drops by `delta / m`, and that level goes to `mu`
            // (one component) or to the component's `delta_ind`, so only the
            // cells of region s change.
            let single = iar.components().len() == 1;
            for s in 0..s_len {
                if iar.is_isolated(s) {
                    continue;
                }
                let comp = &iar.components()[iar.component_of(s)];
                let cur = self.st.delta_iar[s];
                let prop = self.propose(Block::DeltaIar, s, cur);
                let delta = prop - cur;
                let level = delta / comp.len() as f64;
                let mut dq = 0.0;
                for &j in iar.neighbours(s) {
                    let dj = self.st.delta_iar[j];
                    dq += (prop - dj).powi(2) - (cur - dj).powi(2);
                }
                let mut dlp = -0.5 * self.st.tau_delta_iar * dq;
                if single {
                    let mu = self.st.mu;
                    dlp -= 0.5 * fixed_prec * ((mu + level).powi(2) - mu * mu);
                } else {
                    let tau = self.st.tau_delta_ind;
                    dlp -= 0.5
                        * tau
                        * comp
                            .iter()
                            .map(|&r| {
                                let x = self.st.delta_ind[r];
                                (x + level).powi(2) - x * x
                            })
                            .sum::<f64>();
                }
                if self.try_shift(Block::DeltaIar, s, &lay.by_s[s], delta, dlp) {
                    for &r in comp {
                        self.st.delta_iar[r] -= level;
                    }
                    self.st.delta_iar[s] += delta;
                    if single {
                        self.st.mu += level;
                    } else {
                        for &r in comp {
                            self.st.delta_ind[r] += level;
                        }
                    }
                }
            }
        }

        self.level_shifts();
        self.update_precisions()?;
        self.update_phi();
        self.recentre();
        self.refresh();
        Ok(())
    }

    /// Exact Gibbs moves along directions that leave every `log lambda` unchanged.
    fn level_shifts(&mut self) {
        let spec = self.ctx.spec;
        let v = spec.variant;
        let s_len = spec.s;
        let fp = 1.0 / spec.fixed_effect_variance;
        let anchor = spec.anchor_precision;
        let st = &mut self.st;
        let rng = &mut self.rng;

        let (mu, a0) = (st.mu, st.alpha[0]);
        let c = gaussian_shift(rng, |c| {
            -0.5 * fp * (mu + c).powi(2) - 0.5 * anchor * (a0 - c).powi(2)
        });
        st.mu += c;
        st.alpha.iter_mut().for_each(|a| *a -= c);

        let (mu, b0) = (st.mu, st.beta[0]);
        let c = gaussian_shift(rng, |c| {
            -0.5 * fp * (mu + c).powi(2) - 0.5 * anchor * (b0 - c).powi(2)
        });
        st.mu += c;
        st.beta.iter_mut().for_each(|b| *b -= c);

        if v.has_delta_ind() {
            let mu = st.mu;
            let tau = st.tau_delta_ind;
            let di = &st.delta_ind;
            let c = gaussian_shift(rng, |c| {
                -0.5 * fp * (mu + c).powi(2)
                    - 0.5 * tau * di.iter().map(|x| (x - c).powi(2)).sum::<f64>()
            });
            st.mu += c;
            st.delta_ind.iter_mut().for_each(|x| *x -= c);
        }

        if v.has_alpha_ts() {
            for t in 0..st.alpha.len() {
                let (al, ta) = (&st.alpha, st.tau_alpha);
                let row = &st.alpha_ts[t * s_len..(t + 1) * s_len];
                let tau = st.tau_alpha_ts;
                let c = gaussian_shift(rng, |c| {
                    rw1_local(al, t, al[t] + c, ta, anchor)
                        - 0.5 * tau * row.iter().map(|x| (x - c).powi(2)).sum::<f64>()
                });
                st.alpha[t] += c;
                st.alpha_ts[t * s_len..(t + 1) * s_len]
                    .iter_mut()
                    .for_each(|x| *x -= c);
            }
        }

        if v.has_beta_ds() {
            for d in 0..st.beta.len() {
                let (be, tb) = (&st.beta, st.tau_beta);
                let row = &st.beta_ds[d * s_len..(d + 1) * s_len];
                let tau = st.tau_beta_ds;
                let c = gaussian_shift(rng, |c| {
                    rw1_local(be, d, be[d] + c, tb, anchor)
                        - 0.5 * tau * row.iter().map(|x| (x - c).powi(2)).sum::<f64>()
                });
                st.beta[d] += c;
                st.beta_ds[d * s_len..(d + 1) * s_len]
                    .iter_mut()
                    .for_each(|x| *x -= c);
            }
        }
    }

    fn update_precisions(&mut self) -> Result<()> {
        let spec = self.ctx.spec;
        let v = spec.variant;
        let hp: GammaPrior = spec.hyperprior;
        let fixed = self.fixed;
        let st = &mut self.st;
        let rng = &mut self.rng;
        let diffs = |x: &[f64]| x.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();

        if fixed.tau_alpha.is_none() {
            st.tau_alpha = positive(gibbs_precision(
                &diffs(&st.alpha),
                hp,
                st.alpha.len() - 1,
                rng,
            )?);
        }
        if fixed.tau_beta.is_none() {
            st.tau_beta = positive(gibbs_precision(
                &diffs(&st.beta),
                hp,
                st.beta.len() - 1,
                rng,
            )?);
        }
        if v.has_alpha_ts() && fixed.tau_alpha_ts.is_none() {
            st.tau_alpha_ts = positive(gibbs_precision(&st.alpha_ts, hp, st.alpha_ts.len(), rng)?);
        }
        if v.has_beta_ds() && fixed.tau_beta_ds.is_none() {
            st.tau_beta_ds = positive(gibbs_precision(&st.beta_ds, hp, st.beta_ds.len(), rng)?);
        }
        if v.has_delta_ind() && fixed.tau_delta_ind.is_none() {
            st.tau_delta_ind =
                positive(gibbs_precision(&st.delta_ind, hp, st.delta_ind.len(), rng)?);
        }
        if let (Some(iar), None) = (self.ctx.iar(), fixed.tau_delta_iar) {
            let terms = iar.edge_differences(&st.delta_iar);
            st.tau_delta_iar = positive(gibbs_precision(&terms, hp, iar.rank(), rng)?);
        }
        Ok(())
    }

    /// Random walk on `log phi`; the Jacobian enters the ratio.
    fn update_phi(&mut self) {
        if self.fixed.phi.is_some() {
            return;
        }
        let hp = self.ctx.spec.hyperprior;
        let cur = self.st.phi;
        let psi = cur.ln();
        let psi_prop = self.propose(Block::Phi, 0, psi);
        let prop = psi_prop.exp();
        let lay = self.lay;
        let mut dll: f64 = lay
            .hist
            .iter()
            .map(|&(n, m)| m * (ln_rising(prop, n) - ln_rising(cur, n)))
            .sum();
        dll += lay.n.len() as f64 * (prop * prop.ln() - cur * psi);
        for k in 0..lay.n.len() {
            let n = lay.n[k];
            let l = log_denominator(prop, self.eta[k]);
            self.scratch[k] = l;
            dll -= (n + prop) * l - (n + cur) * self.lden[k];
        }
        let dlp = gamma_logpdf(prop, hp.shape, hp.rate) - gamma_logpdf(cur, hp.shape, hp.rate)
            + (psi_prop - psi);
        let ok = prop > 0.0 && prop.is_finite() && self.accept(dll + dlp);
        self.scales[Block::Phi as usize][0].record(ok);
        if ok {
            self.st.phi = prop;
            std::mem::swap(&mut self.lden, &mut self.scratch);
        }
    }

    /// Remove rounding drift from the IAR centring, moving the level as the moves do.
    fn recentre(&mut self) {
        let Some(iar) = self.ctx.iar() else { return };
        let single = iar.components().len() == 1;
        for comp in iar.components() {
            if comp.len() < 2 {
                continue;
            }
            let m = comp.iter().map(|&r| self.st.delta_iar[r]).sum::<f64>() / comp.len() as f64;
            for &r in comp {
                self.st.delta_iar[r] -= m;
                if !single {
                    self.st.delta_ind[r] += m;
                }
            }
            if single {
                self.st.mu += m;
            }
        }
    }

    fn snapshot(&self) -> BTreeMap<String, Vec<f64>> {
        BLOCKS
            .iter()
            .filter(|b| !self.scales[**b as usize].is_empty())
            .map(|b| {
                (
                    b.name().to_string(),
                    self.scales[*b as usize].iter().map(|a| a.scale).collect(),
                )
            })
            .collect()
    }

    fn all_scales(&mut self) -> impl Iterator<Item = &mut AdaptiveScale> {
        self.scales.iter_mut().flatten()
    }
}

/// Name the first block whose log-density is not finite at the starting state.
fn check_initial(ctx: &ModelContext, st: &ParameterState) -> Result<()> {
    let spec = ctx.spec;
    let v = spec.variant;
    let hp = spec.hyperprior;
    let fail = |block: &str| {
        Err(NowcastError::NonFiniteInitialization {
            block: block.to_string(),
        })
    };
    let ok_pos = |x: f64| x > 0.0 && x.is_finite();
    let mut precisions = vec![("tau_alpha", st.tau_alpha), ("tau_beta", st.tau_beta)];
    if v.has_alpha_ts() {
        precisions.push(("tau_alpha_ts", st.tau_alpha_ts));
    }
    if v.has_beta_ds() {
        precisions.push(("tau_beta_ds", st.tau_beta_ds));
    }
    if v.has_delta_ind() {
        precisions.push(("tau_delta_ind", st.tau_delta_ind));
    }
    if v.has_delta_iar() {
        precisions.push(("tau_delta_iar", st.tau_delta_iar));
    }
    precisions.push(("phi", st.phi));
    for (name, x) in precisions {
        if !ok_pos(x) || !gamma_logpdf(x, hp.shape, hp.rate).is_finite() {
            return fail(name);
        }
    }
    if !st.mu.is_finite() {
        return fail("mu");
    }
    if !rw1_logdensity(&st.alpha, st.tau_alpha, spec.anchor_precision).is_ok_and(f64::is_finite) {
        return fail("alpha");
    }
    if !rw1_logdensity(&st.beta, st.tau_beta, spec.anchor_precision).is_ok_and(f64::is_finite) {
        return fail("beta");
    }
    if let Some(iar) = ctx.iar() {
        if !iar_logdensity(&st.delta_iar, st.tau_delta_iar, iar).is_ok_and(f64::is_finite) {
            return fail("delta_iar");
        }
    }
    match ctx.log_likelihood(st) {
        Ok(x) if x.is_finite() => Ok(()),
        _ => fail("likelihood"),
    }
}

struct ChainOutput {
    draws: Vec<Draw>,
    accepted: Vec<(u64, u64)>,
    log: AdaptationLog,
}

fn run_chain(
    ctx: &ModelContext,
    lay: &Layout,
    cfg: &SamplerConfig,
    chain: usize,
) -> Result<ChainOutput> {
    let mut ch = Chain::new(ctx, lay, &cfg.fixed, stream_rng(cfg.seed, chain as u64))?;
    let mut draws = Vec::with_capacity(cfg.draws_per_chain());
    let mut burn_in_scales = (cfg.burn_in == 0).then(|| ch.snapshot());
    for iter in 1..=cfg.iterations {
        ch.sweep()?;
        if iter % cfg.adapt_window == 0 {
            let gain = (iter <= cfg.burn_in).then(|| adaptation_gain(iter / cfg.adapt_window));
            let target = cfg.target_acceptance;
            ch.all_scales().for_each(|a| a.end_window(target, gain));
        }
        if iter == cfg.burn_in {
            burn_in_scales = Some(ch.snapshot());
            ch.all_scales().for_each(AdaptiveScale::reset_totals);
        }
        if iter > cfg.burn_in && (iter - cfg.burn_in).is_multiple_of(cfg.thin) {
            draws.push(Draw {
                chain,
                iteration: iter,
                state: ch.st.clone(),
            });
        }
    }
    let accepted = ch
        .scales
        .iter()
        .map(|v| {
            v.iter()
                .fold((0, 0), |(a, p), s| (a + s.accepted, p + s.proposed))
        })
        .collect();
    let log = AdaptationLog {
        chain,
        burn_in_scales: burn_in_scales.unwrap_or_default(),
        final_scales: ch.snapshot(),
    };
    Ok(ChainOutput {
        draws,
        accepted,
        log,
    })
}

/// Run `cfg.chains` independent chains (in parallel) and pool the retained draws.
///
/// Chain `c` draws from stream `(seed, c)`, so results do not depend on the
/// number of worker threads.
pub fn run_mcmc(ctx: &ModelContext, cfg: &SamplerConfig) -> Result<PosteriorSamples> {
    cfg.validate()?;
    let lay = Layout::new(ctx);
    let outputs: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(ctx, &lay, cfg, c))
        .collect::<Result<_>>()?;

    let mut totals = vec![(0u64, 0u64); BLOCKS.len()];
    let mut draws = Vec::with_capacity(cfg.chains * cfg.draws_per_chain());
    let mut adaptation = Vec::with_capacity(cfg.chains);
    for out in outputs {
        for (tot, (a, p)) in totals.iter_mut().zip(out.accepted) {
            tot.0 += a;
            tot.1 += p;
        }
        draws.extend(out.draws);
        adaptation.push(out.log);
    }
    let acceptance_rates = BLOCKS
        .iter()
        .zip(totals)
        .filter(|(_, (_, p))| *p > 0)
        .map(|(b, (a, p))| (b.name().to_string(), a as f64 / p as f64))
        .collect();
    Ok(PosteriorSamples {
        spec: ctx.spec.clone(),
        config: cfg.clone(),
        covariates: ctx.covariates.clone(),
        draws,
        acceptance_rates,
        adaptation,
    })
}
