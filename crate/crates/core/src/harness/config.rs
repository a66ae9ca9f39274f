use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fqi::{auto_lambda, BackendSpec};
use crate::kernel::KernelSpec;
use crate::mdp::{EnvSpec, EpisodicMdp};

/// Penalty weight: `lambda = 2 M H / sqrt(n)` or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LambdaRepr", into = "LambdaRepr")]
pub enum LambdaRule {
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LambdaRepr {
    Word(String),
    Value(f64),
}

impl TryFrom<LambdaRepr> for LambdaRule {
    type Error = String;

    fn try_from(r: LambdaRepr) -> std::result::Result<Self, String> {
        match r {
            LambdaRepr::Word(w) if w == "auto" => Ok(LambdaRule::Auto),
            LambdaRepr::Word(w) => Err(format!("lambda must be \"auto\" or a number, got {w:?}")),
            LambdaRepr::Value(v) if v > 0.0 && v.is_finite() => Ok(LambdaRule::Fixed(v)),
            LambdaRepr::Value(v) => Err(format!("lambda must be positive, got {v}")),
        }
    }
}

impl From<LambdaRule> for LambdaRepr {
    fn from(l: LambdaRule) -> Self {
        match l {
            LambdaRule::Auto => LambdaRepr::Word("auto".into()),
            LambdaRule::Fixed(v) => LambdaRepr::Value(v),
        }
    }
}

impl LambdaRule {
    pub fn resolve(self, mdp: &dyn EpisodicMdp, backend: &BackendSpec, n: usize) -> f64 {
        match self {
            LambdaRule::Auto => auto_lambda(mdp, backend, n),
            LambdaRule::Fixed(v) => v,
        }
    }
}

fn default_backend() -> BackendSpec {
    BackendSpec::Kernel {
        kernel: KernelSpec::Delta,
    }
}

fn default_episodes() -> usize {
    10_000
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// A rate study: every `(n, seed)` cell of `grid x seeds` runs FQI and scores the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Environment spec string, e.g. `finite:s20a3h4:seed7`.
    pub env: String,
    #[serde(default = "default_backend")]
    pub backend: BackendSpec,
    pub grid: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "LambdaRule::auto")]
    pub lambda: LambdaRule,
    /// Rollouts per cell when the gap cannot be computed exactly.
    #[serde(default = "default_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub master_seed: u64,
}

impl LambdaRule {
    fn auto() -> Self {
        LambdaRule::Auto
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        self.env.parse()
    }

    pub fn validate(&self) -> Result<()> {
        self.env_spec()?;
        if self.grid.is_empty() {
            return Err(Error::invalid("grid must not be empty"));
        }
        if self.grid[0] == 0 || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid must be positive and strictly increasing"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must not be empty"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::invalid("seeds must be distinct"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::invalid("eval_episodes must be at least 1"));
        }
        Ok(())
    }
}

/// A single FQI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FqiRunConfig {
    pub env: String,
    #[serde(default = "default_backend")]
    pub backend: BackendSpec,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "LambdaRule::auto")]
    pub lambda: LambdaRule,
    #[serde(default = "default_episodes")]
    pub eval_episodes: usize,
    /// Where the fitted model is written as JSON.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl FqiRunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: FqiRunConfig = toml::from_str(s)?;
        cfg.env.parse::<EnvSpec>()?;
        if cfg.n == 0 || cfg.eval_episodes == 0 {
            return Err(Error::invalid("n and eval_episodes must be at least 1"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read(path)?)
    }
}

fn default_trials() -> usize {
    200
}

fn default_radius() -> f64 {
    1.0
}

/// Empirical checks of the regression-class assumptions on one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionsConfig {
    pub env: String,
    /// Kernel for the kernel-ball estimate; the environment's own kernel when absent.
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    pub n: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl AssumptionsConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: AssumptionsConfig = toml::from_str(s)?;
        cfg.env.parse::<EnvSpec>()?;
        if cfg.n == 0 || cfg.trials == 0 {
            return Err(Error::invalid("n and trials must be at least 1"));
        }
        if !(cfg.radius >= 0.0) {
            return Err(Error::invalid("radius must be nonnegative"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read(path)?)
    }
}
