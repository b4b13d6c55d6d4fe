//! Per-run provenance record written next to every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command line after the program name; `nowcast replay` re-parses it.
    pub args: Vec<String>,
    /// Every option after defaults were applied.
    pub config: serde_json::Value,
    /// SHA-256 of each input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    /// Wall-clock seconds per phase; the only field that differs between reruns.
    pub timings: BTreeMap<String, f64>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects inputs, outputs and timings while a command runs.
pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
}

impl Recorder {
    pub fn new(command: &str, args: &[String], config: impl Serialize, seed: Option<u64>) -> Self {
        Self {
            manifest: RunManifest {
                tool: "nowcast".into(),
                version: VERSION.into(),
                command: command.into(),
                args: args.to_vec(),
                config: serde_json::to_value(config).expect("options serialize"),
                inputs: BTreeMap::new(),
                seed,
                outputs: Vec::new(),
                timings: BTreeMap::new(),
            },
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let digest = sha256_file(path)?;
        self.manifest
            .inputs
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.manifest
            .timings
            .insert(phase.into(), t.elapsed().as_secs_f64());
        out
    }

    pub fn finish(mut self, path: &Path) -> CliResult<()> {
        self.manifest
            .timings
            .insert("total".into(), self.started.elapsed().as_secs_f64());
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::output(path, e))
    }
}

/// `dir/stem.manifest.json` for an output file `dir/stem.ext`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}

pub fn read_manifest(path: &Path) -> CliResult<RunManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Inputs whose current digest differs from the recorded one.
pub fn changed_inputs(m: &RunManifest) -> Vec<String> {
    m.inputs
        .iter()
        .filter(|(path, digest)| sha256_file(Path::new(path)).map_or(true, |d| &d != *digest))
        .map(|(path, _)| path.clone())
        .collect()
}
