use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problems::{ImbalancedQuadratic, Problem, ToyCodecConfig, ToyCodecProblem};
use crate::trainer::{Mode, TrainConfig};

/// Environment variable that replaces `output.dir` when `--out` is absent.
pub const OUTPUT_ROOT_ENV: &str = "RDBALANCE_OUTPUT_ROOT";

/// The λ grid of the standard learned-compression protocol.
pub const LAMBDA_GRID: [f64; 6] = [0.0018, 0.0035, 0.0067, 0.0130, 0.0250, 0.0483];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    ImbalancedQuadratic {
        dim: usize,
        #[serde(default = "default_ratio")]
        ratio: f64,
        #[serde(default = "default_floor")]
        floor: f64,
        #[serde(default = "default_radius")]
        init_radius: f64,
        /// Seeds the targets; the initial point comes from `train.seed`.
        #[serde(default)]
        instance_seed: u64,
    },
    ToyCodec(ToyCodecConfig),
}

fn default_ratio() -> f64 {
    10.0
}

fn default_floor() -> f64 {
    1.0
}

fn default_radius() -> f64 {
    1.0
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Box<dyn Problem>> {
        let built: Box<dyn Problem> = match self {
            ProblemConfig::ImbalancedQuadratic {
                dim,
                ratio,
                floor,
                init_radius,
                instance_seed,
            } => {
                if !(init_radius.is_finite() && *init_radius > 0.0) {
                    return Err(Error::Config("init_radius must be positive".into()));
                }
                Box::new(
                    ImbalancedQuadratic::random(*dim, *ratio, *floor, *instance_seed)
                        .map_err(as_config)?
                        .with_init_radius(*init_radius),
                )
            }
            ProblemConfig::ToyCodec(c) => {
                Box::new(ToyCodecProblem::new(c.clone()).map_err(as_config)?)
            }
        };
        Ok(built)
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            ProblemConfig::ToyCodec(c) => Some(c.lambda_rd),
            _ => None,
        }
    }

    pub fn with_lambda(&self, lambda_rd: f64) -> Result<Self> {
        match self {
            ProblemConfig::ToyCodec(c) => Ok(ProblemConfig::ToyCodec(ToyCodecConfig {
                lambda_rd,
                ..c.clone()
            })),
            _ => Err(Error::Config(
                "a λ sweep needs the toy_codec problem".into(),
            )),
        }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::Config(m),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write the per-iteration trace CSV.
    pub trace: bool,
    /// Write the balance diagnostics CSV (c_t, raw weights, KKT multiplier).
    pub diagnostics: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            trace: true,
            diagnostics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
    /// Fine-tune each λ from the first λ's checkpoint instead of training
    /// every λ from scratch.
    pub chain: bool,
    /// Epochs for chained λ runs; defaults to three quarters of `train.epochs`.
    pub chain_epochs: Option<u32>,
    /// Solution 2 fine-tunes the standard checkpoints instead of training
    /// from scratch.
    pub solution2_from_standard: bool,
    /// Worker threads; defaults to the available parallelism.
    pub workers: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambdas: LAMBDA_GRID.to_vec(),
            seeds: vec![0],
            modes: vec![Mode::Standard, Mode::Solution1, Mode::Solution2],
            chain: true,
            chain_epochs: None,
            solution2_from_standard: true,
            workers: None,
        }
    }
}

impl SweepConfig {
    pub fn chain_epochs(&self, train: &TrainConfig) -> u32 {
        self.chain_epochs.unwrap_or((train.epochs * 3 / 4).max(1))
    }

    fn validate(&self, problem: &ProblemConfig) -> Result<()> {
        if self.seeds.is_empty() || self.modes.is_empty() {
            return Err(Error::Config(
                "sweep needs at least one seed and one mode".into(),
            ));
        }
        if !self.lambdas.is_empty() {
            problem.with_lambda(1.0)?;
        }
        if let Some(bad) = self.lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Config(format!(
                "sweep λ must be positive, got {bad}"
            )));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.solution2_from_standard
            && self.modes.contains(&Mode::Solution2)
            && !self.modes.contains(&Mode::Standard)
        {
            return Err(Error::Config(
                "solution2_from_standard needs `standard` among the sweep modes".into(),
            ));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.problem.build()?;
        if let Some(s) = &self.sweep {
            s.validate(&self.problem)?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let config: ExperimentConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }
}

/// Apply one `dotted.key=value` override. The value is parsed as a TOML
/// literal and falls back to a plain string.
pub fn apply_override(root: &mut toml::Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let value = parse_literal(raw.trim());
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("nonempty key");
    let mut node = root;
    for part in parts {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` descends into a non-table")))?;
        node = table
            .entry(part)
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    node.as_table_mut()
        .ok_or_else(|| Error::Config(format!("`{key}` descends into a non-table")))?
        .insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    toml::from_str::<Probe>(&format!("v = {raw}"))
        .map(|p| p.v)
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}
