//! Experiment configuration: one TOML file per run, unknown keys rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use diffabm::calibration::{Family, PriorDist, TrainConfig};
use diffabm::gradcheck::FdConfig;
use diffabm::models::axtell::{AmofConfig, AmofParams};
use diffabm::models::sir::{SirConfig, SirParams};
use diffabm::models::sugarscape::{SugarConfig, SugarParams};
use diffabm::EstimatorKind;

/// Raised for anything wrong with the configuration; maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Sir,
    Axtell,
    Sugarscape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Gradcheck,
    Sensitivity,
    Calibrate,
    BenchmarkEstimators,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Gradcheck => "gradcheck",
            Command::Sensitivity => "sensitivity",
            Command::Calibrate => "calibrate",
            Command::BenchmarkEstimators => "benchmark-estimators",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Block<C, P> {
    pub config: C,
    pub params: P,
}

/// Which output column and parameters a gradient check covers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    /// Parameter names; empty means all (at most nine).
    pub params: Vec<String>,
    /// Output column name; defaults to the first output.
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub estimators: Vec<EstimatorKind>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            estimators: vec![
                EstimatorKind::StraightThrough,
                EstimatorKind::GumbelSoftmax { tau: 0.1 },
                EstimatorKind::SpaSmoothed,
                EstimatorKind::SpaPruned { samples: 10 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Observed {
    /// Trajectories simulated from the configured parameters.
    Synthetic { seed: u64, count: usize },
    /// CSV with one column per model output and an optional `replicate`
    /// column separating trajectories.
    Csv { path: PathBuf },
}

impl Default for Observed {
    fn default() -> Self {
        Observed::Synthetic { seed: 12345, count: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    pub free: Vec<String>,
    /// One prior per free parameter, in the same order.
    pub priors: Vec<PriorDist>,
    pub family: Family,
    pub observed: Observed,
    pub train: TrainConfig,
    pub posterior_samples: usize,
    /// Warm start from a saved checkpoint.
    pub init_checkpoint: Option<PathBuf>,
}

fn default_replicates() -> usize {
    100
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelName,
    pub command: Command,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub sir: Block<SirConfig, SirParams>,
    #[serde(default)]
    pub axtell: Block<AmofConfig, AmofParams>,
    #[serde(default)]
    pub sugarscape: Block<SugarConfig, SugarParams>,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub fd: FdConfig,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
    #[serde(default)]
    pub calibrate: CalibrateSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        if cfg.calibrate.posterior_samples == 0 {
            cfg.calibrate.posterior_samples = 1000;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    /// Checks that do not need a constructed model.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        if self.replicates == 0 {
            return bad("replicates: must be at least 1".into());
        }
        self.estimator
            .validate()
            .map_err(|e| ConfigError(format!("estimator: {e}")))?;
        for (k, est) in self.benchmark.estimators.iter().enumerate() {
            est.validate()
                .map_err(|e| ConfigError(format!("benchmark.estimators[{k}]: {e}")))?;
        }
        if self.fd.n_fd == 0 {
            return bad("fd.n_fd: must be at least 1".into());
        }
        if self.command == Command::Calibrate {
            let c = &self.calibrate;
            if c.free.is_empty() {
                return bad("calibrate.free: list at least one parameter".into());
            }
            if c.priors.len() != c.free.len() {
                return bad(format!(
                    "calibrate.priors: {} priors for {} free parameters",
                    c.priors.len(),
                    c.free.len()
                ));
            }
            c.train
                .validate()
                .map_err(|e| ConfigError(format!("calibrate.train: {e}")))?;
            if let Observed::Synthetic { count: 0, .. } = c.observed {
                return bad("calibrate.observed.count: must be at least 1".into());
            }
        }
        Ok(())
    }
}
