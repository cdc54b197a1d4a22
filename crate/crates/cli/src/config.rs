//! Run configuration: JSON file, then `--set` overrides, then dedicated flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fgatt::data::{CsvSchema, SynthConfig};
use fgatt::harness::{EvalConfig, SweepConfig};
use fgatt::{ModelConfig, ModelKind, SplitSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Generated on the fly; identical settings give identical data.
    Synthetic {
        nodes: usize,
        samples: usize,
        seed: u64,
        #[serde(default)]
        generator: SynthConfig,
    },
    /// A CSV file with a timestamp column and one numeric column per node.
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            nodes: 12,
            samples: 4000,
            seed: 7,
            generator: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub split: SplitSpec,
    /// Model trained by `train`; `sweep` uses `sweep.models` instead.
    pub model: ModelKind,
    pub architecture: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub precision: Precision,
    /// Output directory; when unset a fresh `runs/<hash>-<timestamp>` is used.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            split: SplitSpec::default(),
            model: ModelKind::Fgatt,
            architecture: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
            precision: Precision::F64,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        self.split.validate()?;
        self.architecture.validate()?;
        self.train.validate()?;
        self.sweep.validate()?;
        if self.eval.window != self.train.window {
            bail!(
                "eval.window ({}) must equal train.window ({}), the model's context length",
                self.eval.window,
                self.train.window
            );
        }
        if self.eval.stride == Some(0) {
            bail!("eval.stride must be positive");
        }
        match &self.dataset {
            DatasetConfig::Synthetic { nodes, samples, generator, .. } => {
                if *nodes < 2 || *samples == 0 {
                    bail!("dataset: synthetic data needs nodes >= 2 and samples >= 1");
                }
                generator.validate(*nodes)?;
            }
            DatasetConfig::Csv { path, .. } => {
                if path.as_os_str().is_empty() {
                    bail!("dataset.path is empty");
                }
            }
        }
        Ok(())
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..12].to_string()
    }
}

/// Sets `path` (dot separated) in a JSON object tree, creating objects on the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> anyhow::Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("bad override path {path:?}");
    }
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            bail!("override {path:?}: {} is not an object", parts[..i].join("."));
        }
        let obj = cur.as_object_mut().expect("checked");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("path has at least one part")
}

/// Parses `key.path=value`; the value is read as JSON and falls back to a string.
pub fn parse_assignment(raw: &str) -> anyhow::Result<(String, Value)> {
    let (key, val) = raw
        .split_once('=')
        .with_context(|| format!("override {raw:?} is not of the form key.path=value"))?;
    let value = serde_json::from_str(val).unwrap_or_else(|_| Value::String(val.to_string()));
    Ok((key.trim().to_string(), value))
}

/// Deserializes with the failing field path in the error message.
pub fn from_value(value: Value, origin: &str) -> anyhow::Result<RunConfig> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("{origin}: invalid config at `{path}`: {}", e.into_inner())
    })
}

pub fn read_file(path: &Path) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e))
}
