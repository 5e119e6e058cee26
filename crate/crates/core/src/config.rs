//! Experiment configuration, read from a TOML document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bo::BoConfig;
use crate::circuit::BenchmarkId;
use crate::error::{Error, Result};
use crate::pareto::ParetoMethod;
use crate::reward::RewardConfig;
use crate::rl::TrainConfig;
use crate::sim::{ParasiticModel, MAX_BETA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeployConfig {
    /// Number of sampled design goals.
    pub goals: usize,
}

impl Default for DeployConfig {
    fn default() -> Self {
        Self { goals: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParasiticConfig {
    /// Degradation coefficients to run, each applied to every spec.
    pub betas: Vec<f64>,
    pub max_rounds: usize,
    /// Sampled goals per coefficient.
    pub goals: usize,
    pub load_scale: f64,
}

impl Default for ParasiticConfig {
    fn default() -> Self {
        let model = ParasiticModel::default();
        Self {
            betas: vec![0.0, model.beta_gain],
            max_rounds: 3,
            goals: 20,
            load_scale: model.load_scale,
        }
    }
}

impl ParasiticConfig {
    pub fn model(&self, beta: f64) -> ParasiticModel {
        ParasiticModel {
            load_scale: self.load_scale,
            ..ParasiticModel::uniform(beta)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParetoConfig {
    pub budget: usize,
    pub methods: Vec<ParetoMethod>,
}

impl Default for ParetoConfig {
    fn default() -> Self {
        Self {
            budget: 2000,
            methods: ParetoMethod::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub benchmark: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Independent vanguard runs; the most typical one supplies the start.
    pub bo_repeats: usize,
    pub bo: BoConfig,
    pub train: TrainConfig,
    pub reward: RewardConfig,
    pub deploy: DeployConfig,
    pub parasitic: ParasiticConfig,
    pub pareto: ParetoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmark: BenchmarkId::TwoStage.name().to_string(),
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            bo_repeats: 1,
            bo: BoConfig::default(),
            train: TrainConfig::default(),
            reward: RewardConfig::default(),
            deploy: DeployConfig::default(),
            parasitic: ParasiticConfig::default(),
            pareto: ParetoConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !BenchmarkId::ALL.iter().any(|b| b.name() == self.benchmark) {
            return Err(Error::config(format!("benchmark: unknown circuit `{}`", self.benchmark)));
        }
        if self.bo_repeats == 0 {
            return Err(Error::config("bo_repeats must be at least 1"));
        }
        self.bo.validate()?;
        self.train.validate()?;
        self.reward.validate()?;
        if self.deploy.goals == 0 {
            return Err(Error::config("deploy.goals must be positive"));
        }
        if self.parasitic.max_rounds == 0 {
            return Err(Error::config("parasitic.max_rounds must be at least 1"));
        }
        for &b in &self.parasitic.betas {
            if !(0.0..=MAX_BETA).contains(&b) {
                return Err(Error::config(format!("parasitic.betas: {b} outside [0, {MAX_BETA}]")));
            }
            self.parasitic.model(b).validate()?;
        }
        if self.pareto.budget == 0 {
            return Err(Error::config("pareto.budget must be positive"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_toml(&text)
}
