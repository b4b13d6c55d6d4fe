//! DIC and WAIC for ranking fitted model variants.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NowcastError, Result};
use crate::inference::PosteriorSamples;
use crate::model::{negbin_logpmf_unchecked, ParameterState};
use crate::triangle::ReportingTriangle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    pub dbar: f64,
    pub p_d: f64,
    pub dic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub lppd: f64,
    pub p_waic: f64,
    pub waic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub model: String,
    pub dbar: f64,
    pub p_d: f64,
    pub dic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub waic: f64,
}

fn check(samples: &PosteriorSamples, tri: &ReportingTriangle) -> Result<()> {
    if samples.len() < 2 {
        return Err(NowcastError::InvalidArgument(
            "information criteria need at least two draws".into(),
        ));
    }
    if tri.dims() != samples.spec.dims() {
        return Err(NowcastError::SpecMismatch(format!(
            "samples fitted to {:?}, triangle is {:?}",
            samples.spec.dims(),
            tri.dims()
        )));
    }
    Ok(())
}

fn deviance(samples: &PosteriorSamples, tri: &ReportingTriangle, state: &ParameterState) -> f64 {
    let counts = tri.raw_counts();
    -2.0 * tri
        .observed_indices()
        .map(|i| negbin_logpmf_unchecked(counts[i], samples.eta(state, i).exp(), state.phi))
        .sum::<f64>()
}

/// Posterior mean with precisions and `phi` averaged on the log scale.
pub fn plug_in_state(samples: &PosteriorSamples) -> ParameterState {
    let spec = &samples.spec;
    let n = samples.len() as f64;
    let names = ParameterState::column_names(spec);
    let mut acc = vec![0.0; names.len()];
    let positive: Vec<bool> = names
        .iter()
        .map(|c| c.starts_with("tau_") || c == "phi")
        .collect();
    for st in samples.states() {
        for ((a, x), &pos) in acc.iter_mut().zip(st.to_row(spec)).zip(&positive) {
            *a += if pos { x.ln() } else { x };
        }
    }
    let row: Vec<f64> = acc
        .iter()
        .zip(&positive)
        .map(|(&a, &pos)| if pos { (a / n).exp() } else { a / n })
        .collect();
    ParameterState::from_row(spec, &row).expect("row built from the spec's own columns")
}

/// `Dbar` = mean deviance over draws, `pD = Dbar - D(plug-in)`, `DIC = Dbar + pD`.
pub fn dic(samples: &PosteriorSamples, tri: &ReportingTriangle) -> Result<Dic> {
    check(samples, tri)?;
    let devs: Vec<f64> = samples
        .draws
        .par_iter()
        .map(|d| deviance(samples, tri, &d.state))
        .collect();
    if let Some(draw) = devs.iter().position(|d| !d.is_finite()) {
        return Err(NowcastError::NonFiniteDeviance { draw });
    }
    let dbar = devs.iter().sum::<f64>() / devs.len() as f64;
    let d_hat = deviance(samples, tri, &plug_in_state(samples));
    if !d_hat.is_finite() {
        return Err(NowcastError::NonFinite(
            "deviance at the posterior mean".into(),
        ));
    }
    let p_d = dbar - d_hat;
    Ok(Dic {
        dbar,
        p_d,
        dic: dbar + p_d,
    })
}

/// Pointwise over observed cells: `lppd = sum log mean p`, `pWAIC = sum var log p`,
/// `WAIC = -2 (lppd - pWAIC)`. The variance divides by the number of draws, so
/// duplicating every draw leaves the result unchanged.
pub fn waic(samples: &PosteriorSamples, tri: &ReportingTriangle) -> Result<Waic> {
    check(samples, tri)?;
    let counts = tri.raw_counts();
    let cells: Vec<usize> = tri.observed_indices().collect();
    let per_cell: Vec<std::result::Result<(f64, f64), usize>> = cells
        .par_iter()
        .map(|&i| {
            // streaming log-sum-exp and Welford variance
            let mut max = f64::NEG_INFINITY;
            let mut sum_exp = 0.0;
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for (k, d) in samples.draws.iter().enumerate() {
                let ll =
                    negbin_logpmf_unchecked(counts[i], samples.eta(&d.state, i).exp(), d.state.phi);
                if !ll.is_finite() {
                    return Err(k);
                }
                if ll > max {
                    sum_exp = sum_exp * (max - ll).exp() + 1.0;
                    max = ll;
                } else {
                    sum_exp += (ll - max).exp();
                }
                let delta = ll - mean;
                mean += delta / (k + 1) as f64;
                m2 += delta * (ll - mean);
            }
            let n = samples.len() as f64;
            Ok((max + sum_exp.ln() - n.ln(), m2 / n))
        })
        .collect();
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    for r in per_cell {
        let (l, v) = r.map_err(|draw| NowcastError::NonFiniteDeviance { draw })?;
        lppd += l;
        p_waic += v;
    }
    Ok(Waic {
        lppd,
        p_waic,
        waic: -2.0 * (lppd - p_waic),
    })
}

pub fn criteria(
    model: &str,
    samples: &PosteriorSamples,
    tri: &ReportingTriangle,
) -> Result<CriteriaReport> {
    let d = dic(samples, tri)?;
    let w = waic(samples, tri)?;
    Ok(CriteriaReport {
        model: model.to_string(),
        dbar: d.dbar,
        p_d: d.p_d,
        dic: d.dic,
        lppd: w.lppd,
        p_waic: w.p_waic,
        waic: w.waic,
    })
}

/// Comparison table with columns `model,Dbar,pD,DIC,WAIC`.
pub fn write_criteria_csv<W: Write>(reports: &[CriteriaReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "Dbar", "pD", "DIC", "WAIC"])?;
    for r in reports {
        w.write_record([
            r.model.clone(),
            fmt(r.dbar),
            fmt(r.p_d),
            fmt(r.dic),
            fmt(r.waic),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn fmt(x: f64) -> String {
    format!("{x:.4}")
}
