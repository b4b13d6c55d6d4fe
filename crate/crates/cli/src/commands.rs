use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use nowcast_core::inference::{
    diagnostics, read_samples, run_mcmc, write_samples, Diagnostics, SamplesMeta,
};
use nowcast_core::model::{ModelContext, ModelSpec, Variant};
use nowcast_core::nowcast::{
    nowcast_totals, predict_cells, write_nowcast_csv_with_quantiles, write_total_draws,
};
use nowcast_core::rng::derive_seed;
use nowcast_core::selection::{criteria, write_criteria_csv};
use nowcast_core::simulator::{
    censor, coverage_experiment, simulate as simulate_one, SimulationScenario,
};
use nowcast_core::triangle::{
    build_triangle, read_line_list, BuildOptions, RegionMap, ReportingTriangle, TimeUnit,
};

use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, Recorder};
use crate::{CompareArgs, FitArgs, IngestArgs, NowcastArgs, SimulateArgs};

const RHAT_LIMIT: f64 = 1.1;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::output(path, e))
}

/// Write through `f`, reporting any failure against `path`.
fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> nowcast_core::error::Result<()>,
) -> CliResult<()> {
    let mut w = create(path)?;
    f(&mut w).map_err(|e| CliError::output(path, e))?;
    w.flush().map_err(|e| CliError::output(path, e))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

fn parse_date(flag: &str, s: &str) -> CliResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| CliError::input(format!("--{flag} `{s}`: {e}")))
}

fn read_triangle(path: &Path, rec: &mut Recorder) -> CliResult<ReportingTriangle> {
    rec.input(path)?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    ReportingTriangle::from_json(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn read_map(path: Option<&Path>, rec: &mut Recorder) -> CliResult<Option<RegionMap>> {
    let Some(path) = path else { return Ok(None) };
    rec.input(path)?;
    RegionMap::read_csv(open(path)?)
        .map(Some)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// M-variants carry region effects, so the CLI insists on an explicit map.
fn require_map(variant: Variant, map: Option<&RegionMap>) -> CliResult<()> {
    if variant.is_spatial() && map.is_none() {
        return Err(CliError::input(format!(
            "model {variant} has region effects and needs --adjacency (CSV with region labels in the first row and column)"
        )));
    }
    Ok(())
}

fn print_diagnostics(label: &str, diag: &Diagnostics) {
    println!(
        "{label}: {:<18} {:>10} {:>10} {:>7} {:>8}",
        "parameter", "mean", "sd", "R-hat", "ESS"
    );
    for s in &diag.scalars {
        let rhat = s.rhat.map_or("-".to_string(), |r| format!("{r:.3}"));
        println!(
            "{label}: {:<18} {:>10.4} {:>10.4} {:>7} {:>8.0}",
            s.name, s.mean, s.sd, rhat, s.ess
        );
    }
    if let Some(r) = diag.max_rhat() {
        println!("{label}: max R-hat {r:.3} (limit {RHAT_LIMIT})");
    }
}

fn unconverged(diag: &Diagnostics) -> Vec<String> {
    diag.scalars
        .iter()
        .filter(|s| s.rhat.is_some_and(|r| r.is_nan() || r > RHAT_LIMIT))
        .map(|s| format!("{} ({:.3})", s.name, s.rhat.unwrap_or(f64::NAN)))
        .collect()
}

pub fn ingest(a: &IngestArgs, args: &[String]) -> CliResult<()> {
    let mut rec = Recorder::new("ingest", args, a, None);
    rec.input(&a.input)?;
    let records = read_line_list(open(&a.input)?)
        .map_err(|e| CliError::input(format!("{}: {e}", a.input.display())))?;
    let map = read_map(a.adjacency.as_deref(), &mut rec)?;
    let unit: TimeUnit = a.unit.parse()?;
    let opts = BuildOptions {
        unit,
        max_delay: a.max_delay,
        as_of: parse_date("as-of", &a.as_of)?,
        regions: map.as_ref(),
        origin: a
            .origin
            .as_deref()
            .map(|s| parse_date("origin", s))
            .transpose()?,
    };
    let tri = build_triangle(&records, &opts)?;
    let json = tri.to_json()?;
    write_with(&a.out, |w| Ok(w.write_all(json.as_bytes())?))?;
    rec.output(&a.out);
    let dims = tri.dims();
    eprintln!(
        "triangle T={} D={} S={} from {} records ({} reported after the as-of date, {} beyond the maximum delay)",
        dims.t,
        dims.d,
        dims.s,
        records.len(),
        tri.unreported(),
        tri.overflow_all().iter().sum::<u64>()
    );
    rec.finish(&manifest_path_for(&a.out))
}

pub fn fit(a: &FitArgs, args: &[String]) -> CliResult<()> {
    let mut rec = Recorder::new("fit", args, a, Some(a.sampler.seed));
    let variant: Variant = a.model.parse()?;
    let tri = read_triangle(&a.triangle, &mut rec)?;
    let map = read_map(a.adjacency.as_deref(), &mut rec)?;
    require_map(variant, map.as_ref())?;
    let cfg = a.sampler.config()?;
    let spec = ModelSpec::new(variant, tri.dims())?;
    let ctx = ModelContext::new(&spec, &tri, None, map.as_ref())?;
    let samples = rec.time("sampling", || run_mcmc(&ctx, &cfg))?;
    let diag = diagnostics(&samples);

    let csv_path = with_suffix(&a.out_prefix, ".samples.csv");
    let meta_path = with_suffix(&a.out_prefix, ".samples.json");
    let diag_path = with_suffix(&a.out_prefix, ".diagnostics.csv");
    write_with(&csv_path, |w| write_samples(&samples, w))?;
    let meta = serde_json::to_string_pretty(&SamplesMeta::new(&samples, Some(diag.clone())))
        .expect("sidecar serializes");
    write_with(&meta_path, |w| Ok(w.write_all((meta + "\n").as_bytes())?))?;
    write_with(&diag_path, |w| {
        let mut c = csv_writer(w);
        c.write_record(["parameter", "mean", "sd", "rhat", "ess"])?;
        for s in &diag.scalars {
            let rhat = s.rhat.map_or(String::new(), |r| r.to_string());
            c.write_record([
                s.name.clone(),
                s.mean.to_string(),
                s.sd.to_string(),
                rhat,
                s.ess.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    for p in [&csv_path, &meta_path, &diag_path] {
        rec.output(p);
    }
    print_diagnostics(&variant.to_string(), &diag);
    rec.finish(&with_suffix(&a.out_prefix, ".manifest.json"))?;

    let bad = unconverged(&diag);
    if !bad.is_empty() {
        let msg = format!("R-hat above {RHAT_LIMIT} for {}", bad.join(", "));
        if !a.no_strict {
            return Err(CliError::Convergence(format!(
                "{msg}; rerun longer or pass --no-strict"
            )));
        }
        eprintln!("warning: {msg}");
    }
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

pub fn nowcast(a: &NowcastArgs, args: &[String]) -> CliResult<()> {
    let mut rec = Recorder::new("nowcast", args, a, Some(a.seed));
    let meta_path = a.samples.with_extension("json");
    rec.input(&a.samples)?;
    rec.input(&meta_path)?;
    let meta: SamplesMeta = serde_json::from_reader(open(&meta_path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", meta_path.display())))?;
    let tri = read_triangle(&a.triangle, &mut rec)?;
    if meta.spec.dims() != tri.dims() {
        return Err(CliError::input(format!(
            "spec mismatch: samples were fitted to {:?} but the triangle is {:?}",
            meta.spec.dims(),
            tri.dims()
        )));
    }
    let samples = read_samples(open(&a.samples)?, &meta, None)?;
    let result = rec.time("prediction", || -> CliResult<_> {
        let cells = predict_cells(&samples, &tri, a.seed)?;
        Ok(nowcast_totals(cells, &tri, a.threshold))
    })?;
    let regions = tri.regions().to_vec();
    write_with(&a.out, |w| {
        write_nowcast_csv_with_quantiles(&result, &regions, &a.quantiles, w)
    })?;
    rec.output(&a.out);
    if let Some(path) = &a.draws {
        write_with(path, |w| write_total_draws(&result, &regions, w))?;
        rec.output(path);
    }
    for s in &result.summaries {
        let region = s.target.s.map_or("all", |i| regions[i].as_str());
        let exceed = s
            .exceedance
            .map_or(String::new(), |e| format!("  P(>threshold) {e:.3}"));
        println!(
            "t={:<4} s={:<8} observed {:>7}  median {:>9.1}  95% [{:.1}, {:.1}]{exceed}",
            s.target.t + 1,
            region,
            s.observed_partial,
            s.median,
            s.lower,
            s.upper
        );
    }
    rec.finish(&manifest_path_for(&a.out))
}

pub fn compare(a: &CompareArgs, args: &[String]) -> CliResult<()> {
    let mut rec = Recorder::new("compare", args, a, Some(a.sampler.seed));
    let tri = read_triangle(&a.triangle, &mut rec)?;
    let map = read_map(a.adjacency.as_deref(), &mut rec)?;
    let cfg = a.sampler.config()?;
    let mut seen: Vec<String> = Vec::new();
    for m in &a.models {
        let key = m.trim().to_ascii_uppercase();
        if seen.contains(&key) {
            eprintln!("warning: model {key} listed more than once; fitting it once");
        } else {
            seen.push(key);
        }
    }
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for name in &seen {
        let outcome = rec.time(&format!("fit {name}"), || -> CliResult<_> {
            let variant: Variant = name.parse()?;
            require_map(variant, map.as_ref())?;
            let spec = ModelSpec::new(variant, tri.dims())?;
            let ctx = ModelContext::new(&spec, &tri, None, map.as_ref())?;
            let samples = run_mcmc(&ctx, &cfg)?;
            let diag = diagnostics(&samples);
            Ok((criteria(&variant.to_string(), &samples, &tri)?, diag))
        });
        match outcome {
            Ok((report, diag)) => {
                let bad = unconverged(&diag);
                if !bad.is_empty() {
                    eprintln!(
                        "warning: {name}: R-hat above {RHAT_LIMIT} for {}",
                        bad.join(", ")
                    );
                }
                println!(
                    "{name}: DIC {:.2}  WAIC {:.2}  pD {:.2}",
                    report.dic, report.waic, report.p_d
                );
                reports.push(report);
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                failures.push(name.clone());
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::input(format!(
            "every model failed: {}",
            failures.join(", ")
        )));
    }
    write_with(&a.out, |w| write_criteria_csv(&reports, w))?;
    rec.output(&a.out);
    rec.finish(&manifest_path_for(&a.out))
}

pub fn simulate(a: &SimulateArgs, args: &[String]) -> CliResult<()> {
    let mut rec = Recorder::new("simulate", args, a, None);
    rec.input(&a.scenario)?;
    let scenario: SimulationScenario = serde_json::from_reader(open(&a.scenario)?)
        .map_err(|e| CliError::input(format!("{}: {e}", a.scenario.display())))?;
    scenario.validate()?;
    if a.replicates == 0 {
        return Err(CliError::input("--replicates must be at least 1"));
    }
    let width = a.replicates.to_string().len().max(3);
    for r in 0..a.replicates {
        let mut sc = scenario.clone();
        // same replicate seeds as the coverage experiment
        sc.seed = derive_seed(scenario.seed, r as u64);
        let sim = simulate_one(&sc)?;
        let tag = format!("rep-{:0width$}", r + 1);
        let observed = censor(&sim.full, sim.full.dims().t)?;
        let files: [(String, String); 3] = [
            (format!("{tag}.triangle.json"), observed.to_json()?),
            (format!("{tag}.full.json"), sim.full.to_json()?),
            (
                format!("{tag}.truth.json"),
                serde_json::to_string_pretty(&sim.truth).expect("truth serializes") + "\n",
            ),
        ];
        for (name, text) in files {
            let path = a.out_dir.join(name);
            write_with(&path, |w| Ok(w.write_all(text.as_bytes())?))?;
            rec.output(&path);
        }
    }
    if a.coverage {
        let cfg = a.sampler.config()?;
        let table = rec.time("coverage", || {
            coverage_experiment(&scenario, a.replicates, &cfg, &a.levels)
        })?;
        let path = a.out_dir.join("coverage.csv");
        write_with(&path, |w| {
            let mut c = csv_writer(w);
            c.write_record([
                "replicate",
                "t",
                "s",
                "level",
                "truth",
                "median",
                "lower",
                "upper",
                "covered",
            ])?;
            for row in &table.rows {
                c.write_record([
                    (row.replicate + 1).to_string(),
                    row.t.to_string(),
                    row.s.map_or("all".to_string(), |s| s.to_string()),
                    row.level.to_string(),
                    row.truth.to_string(),
                    row.median.to_string(),
                    row.lower.to_string(),
                    row.upper.to_string(),
                    row.covered.to_string(),
                ])?;
            }
            c.flush()?;
            Ok(())
        })?;
        rec.output(&path);
        let t_last = scenario.spec.t;
        for &level in &a.levels {
            let all = table.coverage(level).unwrap_or(f64::NAN);
            let last = table
                .coverage_where(|r| r.level == level && r.t == t_last)
                .unwrap_or(f64::NAN);
            println!(
                "coverage at {level}: {all:.3} over all targets, {last:.3} for the last period"
            );
        }
        for (r, msg) in &table.failures {
            eprintln!("replicate {}: failed: {msg}", r + 1);
        }
    }
    rec.finish(&a.out_dir.join("manifest.json"))
}
