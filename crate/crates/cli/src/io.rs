//! Input loading with digests, provenance blocks and output writing.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use sras_core::data::Dataset;
use sras_core::repmap::RepMap;
use sras_core::summaries::{PerturbationFamily, SensitivitySummary};

/// A problem with the user's inputs or flags (exit code 2).
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Reads input files and remembers their digests.
#[derive(Default)]
pub struct Inputs {
    digests: Vec<InputDigest>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))?;
        self.digests.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        String::from_utf8(bytes).map_err(|_| input_error(format!("{} is not UTF-8 text", path.display())))
    }

    pub fn model(&mut self, path: &Path) -> Result<RepMap> {
        let text = self.read(path)?;
        serde_json::from_str(&text).with_context(|| format!("parsing model {}", path.display()))
    }

    pub fn dataset(&mut self, path: &Path) -> Result<Dataset> {
        let text = self.read(path)?;
        Dataset::from_csv(&text).with_context(|| format!("parsing dataset {}", path.display()))
    }

    /// Family CSV; the id is the file stem.
    pub fn family(&mut self, path: &Path) -> Result<PerturbationFamily> {
        let text = self.read(path)?;
        PerturbationFamily::from_csv(stem(path), &text).with_context(|| format!("parsing family {}", path.display()))
    }

    pub fn summary(&mut self, path: &Path) -> Result<SensitivitySummary> {
        let text = self.read(path)?;
        SensitivitySummary::from_json(&text).with_context(|| format!("parsing summary {}", path.display()))
    }

    pub fn digests(&self) -> &[InputDigest] {
        &self.digests
    }
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Seed, numeric constants and command options of one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub eps_reg: f64,
    pub eps_spd: f64,
    pub chunk_size: usize,
}

#[derive(Serialize)]
pub struct Provenance<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub options: Value,
    pub inputs: &'a [InputDigest],
}

/// Output directory plus the provenance shared by every file of a run.
pub struct Output {
    dir: PathBuf,
    provenance: Value,
}

impl Output {
    pub fn new(dir: &Path, command: &str, config: &RunConfig, options: &impl Serialize, inputs: &Inputs) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        let provenance = serde_json::to_value(Provenance {
            tool: "sras",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            options: serde_json::to_value(options)?,
            inputs: inputs.digests(),
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            provenance,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    /// Writes `value` (a JSON object) with the provenance block appended.
    pub fn json(&mut self, name: &str, value: Value) -> Result<()> {
        let mut value = value;
        match value.as_object_mut() {
            Some(obj) => {
                obj.insert("provenance".into(), self.provenance.clone());
            }
            None => anyhow::bail!("output {name} is not a JSON object"),
        }
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        self.text(name, &text)
    }
}

/// Parses the JSON text produced by a library `to_json`.
pub fn json_value(text: &str) -> Result<Value> {
    Ok(serde_json::from_str(text)?)
}
