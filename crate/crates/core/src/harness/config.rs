use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MetricStructure, DEFAULT_LAMBDA};
use crate::optim::OptimizerKind;
use crate::targets::{hex_gkp_target, load_target, number_target, HexGkpSpec, TargetState};

pub const DEFAULT_THRESHOLD: f64 = 0.01;
pub const DEFAULT_INIT_SCALE: f64 = 0.01;

/// Which state the circuit is trained to prepare.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Task {
    SinglePhoton,
    HexGkp,
    /// Amplitudes read from a target file.
    Custom(PathBuf),
}

impl Task {
    pub fn default_steps(&self) -> usize {
        match self {
            Task::HexGkp => 5000,
            _ => 500,
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_photon" => Ok(Task::SinglePhoton),
            "hex_gkp" => Ok(Task::HexGkp),
            _ => match s.strip_prefix("custom:") {
                Some(path) if !path.is_empty() => Ok(Task::Custom(PathBuf::from(path))),
                _ => Err(Error::Config(format!(
                    "unknown task {s:?}; expected single_photon, hex_gkp or custom:<path>"
                ))),
            },
        }
    }
}

impl TryFrom<String> for Task {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Task> for String {
    fn from(t: Task) -> String {
        t.to_string()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::SinglePhoton => f.write_str("single_photon"),
            Task::HexGkp => f.write_str("hex_gkp"),
            Task::Custom(p) => write!(f, "custom:{}", p.display()),
        }
    }
}

/// Settings of one experiment. Read from a flat TOML file; every field can
/// be overridden with [`ExperimentConfig::set`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub layers: usize,
    pub cutoff: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default = "default_lambda")]
    pub ngd_lambda: f64,
    #[serde(default)]
    pub ngd_structure: MetricStructure,
    /// Defaults to 500 for the single photon and 5000 for Hex-GKP.
    #[serde(default)]
    pub steps: Option<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// End a run as soon as the loss reaches `threshold`.
    #[serde(default)]
    pub stop_at_threshold: bool,
    #[serde(default = "default_gkp_d")]
    pub gkp_d: u32,
    #[serde(default = "default_gkp_mu")]
    pub gkp_mu: u32,
    #[serde(default = "default_gkp_delta")]
    pub gkp_delta: f64,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_init_scale() -> f64 {
    DEFAULT_INIT_SCALE
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_gkp_d() -> u32 {
    2
}
fn default_gkp_mu() -> u32 {
    1
}
fn default_gkp_delta() -> f64 {
    0.3
}

impl ExperimentConfig {
    /// Preparing `|1⟩` with 8 layers.
    pub fn single_photon() -> Self {
        Self {
            task: Task::SinglePhoton,
            layers: 8,
            cutoff: 100,
            optimizer: OptimizerKind::Ngd,
            learning_rate: 0.02,
            ngd_lambda: DEFAULT_LAMBDA,
            ngd_structure: MetricStructure::Block,
            steps: None,
            seeds: (0..20).collect(),
            init_scale: DEFAULT_INIT_SCALE,
            output: None,
            threshold: DEFAULT_THRESHOLD,
            stop_at_threshold: false,
            gkp_d: 2,
            gkp_mu: 1,
            gkp_delta: 0.3,
        }
    }

    /// Preparing the Hex-GKP codeword with 25 layers.
    pub fn hex_gkp() -> Self {
        Self {
            task: Task::HexGkp,
            layers: 25,
            cutoff: 50,
            ..Self::single_photon()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Overrides one field. `value` is read as a TOML value, falling back to
    /// a plain string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let parsed = match (key, parsed) {
            ("seeds", toml::Value::Integer(i)) => toml::Value::Array(vec![toml::Value::Integer(i)]),
            (_, v) => v,
        };
        table.insert(key.to_string(), parsed);
        let updated: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override {key}={value}: {e}")))?;
        *self = updated;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps.unwrap_or_else(|| self.task.default_steps())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.layers == 0 {
            return fail("layers must be >= 1".into());
        }
        if self.cutoff < 2 {
            return fail(format!("cutoff must be >= 2, got {}", self.cutoff));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.ngd_lambda >= 0.0 && self.ngd_lambda.is_finite()) {
            return fail(format!("ngd_lambda must be >= 0, got {}", self.ngd_lambda));
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return fail(format!("init_scale must be >= 0, got {}", self.init_scale));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        Ok(())
    }

    pub fn hex_gkp_spec(&self) -> HexGkpSpec {
        HexGkpSpec {
            d: self.gkp_d,
            mu: self.gkp_mu,
            delta: self.gkp_delta,
            cutoff: self.cutoff,
        }
    }

    pub fn target(&self) -> Result<TargetState> {
        match &self.task {
            Task::SinglePhoton => number_target(1, self.cutoff),
            Task::HexGkp => hex_gkp_target(&self.hex_gkp_spec()),
            Task::Custom(path) => load_target(path, self.cutoff),
        }
    }
}
