use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{AdaptationLog, Diagnostics, Draw, PosteriorSamples, SamplerConfig};
use crate::error::{NowcastError, Result};
use crate::model::{CovariateArray, ModelSpec, ParameterState};

/// JSON sidecar stored next to a samples CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesMeta {
    pub spec: ModelSpec,
    pub config: SamplerConfig,
    pub draws: usize,
    pub acceptance_rates: BTreeMap<String, f64>,
    pub adaptation: Vec<AdaptationLog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

impl SamplesMeta {
    pub fn new(samples: &PosteriorSamples, diagnostics: Option<Diagnostics>) -> Self {
        Self {
            spec: samples.spec.clone(),
            config: samples.config.clone(),
            draws: samples.len(),
            acceptance_rates: samples.acceptance_rates.clone(),
            adaptation: samples.adaptation.clone(),
            diagnostics,
        }
    }
}

/// One row per draw: `chain,iteration,` then [`ParameterState::column_names`].
/// Values use the shortest representation that round-trips exactly.
pub fn write_samples<W: Write>(samples: &PosteriorSamples, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(ParameterState::column_names(&samples.spec));
    w.write_record(&header)?;
    for d in &samples.draws {
        let mut rec = vec![d.chain.to_string(), d.iteration.to_string()];
        rec.extend(d.state.to_row(&samples.spec).iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuild samples from a CSV written by [`write_samples`] and its sidecar.
pub fn read_samples<R: Read>(
    reader: R,
    meta: &SamplesMeta,
    covariates: Option<&CovariateArray>,
) -> Result<PosteriorSamples> {
    let spec = &meta.spec;
    let mut r = csv::Reader::from_reader(reader);
    let mut expected = vec!["chain".to_string(), "iteration".to_string()];
    expected.extend(ParameterState::column_names(spec));
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        return Err(NowcastError::SpecMismatch(
            "samples header does not match the model columns".into(),
        ));
    }
    let mut draws = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |what: &str| NowcastError::Parse(format!("samples line {line}: {what}"));
        let chain = rec[0].parse().map_err(|_| bad("chain"))?;
        let iteration = rec[1].parse().map_err(|_| bad("iteration"))?;
        let row = rec
            .iter()
            .skip(2)
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("value"))?;
        draws.push(Draw {
            chain,
            iteration,
            state: ParameterState::from_row(spec, &row)?,
        });
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
    Ok(PosteriorSamples {
        spec: spec.clone(),
        config: meta.config.clone(),
        covariates,
        draws,
        acceptance_rates: meta.acceptance_rates.clone(),
        adaptation: meta.adaptation.clone(),
    })
}
