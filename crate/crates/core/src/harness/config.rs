use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionSpec;
use crate::benchmarks::{GravityScenario, Objective};
use crate::error::{Error, Result};
use crate::gp::InputNoise;

/// How kernel hyperparameters are chosen during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperparameterMode {
    /// True values for GP-sample objectives; otherwise fitted once on the
    /// initial design and then held.
    Fixed,
    /// Refitted before every acquisition step.
    #[default]
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub name: String,
    /// Draw index for `gp_sample`.
    #[serde(default)]
    pub seed: u64,
    /// Use draw `seed + repetition` for repetition `r` (within-model suite).
    #[serde(default)]
    pub seed_per_repetition: bool,
    #[serde(default)]
    pub input_std: Option<Vec<f64>>,
    #[serde(default)]
    pub observation_std: Option<f64>,
    /// Gravity scenario file replacing the shipped default.
    #[serde(default)]
    pub scenario: Option<PathBuf>,
}

impl ObjectiveConfig {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            seed: 0,
            seed_per_repetition: false,
            input_std: None,
            observation_std: None,
            scenario: None,
        }
    }

    /// Builds the objective seen by repetition `rep`.
    pub fn build(&self, rep: usize) -> Result<Objective> {
        let mut obj = match (self.name.as_str(), &self.scenario) {
            ("gravity", Some(path)) => Objective::gravity(GravityScenario::load(path)?)?,
            (_, Some(_)) => return Err(Error::Config("`scenario` only applies to the gravity objective".into())),
            ("gp_sample", None) => {
                let offset = if self.seed_per_repetition { rep as u64 } else { 0 };
                Objective::gp_sample(self.seed + offset)?
            }
            (name, None) => Objective::by_name(name)?,
        };
        if let Some(std) = &self.input_std {
            let noise = InputNoise::from_std(std).map_err(|e| Error::Config(e.to_string()))?;
            obj = obj.with_input_noise(noise).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(s) = self.observation_std {
            obj = obj.with_observation_std(s).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(obj)
    }
}

/// One experiment: an objective, an acquisition and the repetition protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub acquisition: AcquisitionSpec,
    pub iterations: usize,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Defaults to 3, 5, 10 for 1, 2, 3 inputs and `2d` beyond.
    #[serde(default)]
    pub initial_points: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hyperparameters: HyperparameterMode,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

pub fn default_initial_points(dim: usize) -> usize {
    match dim {
        1 => 3,
        2 => 5,
        3 => 10,
        d => 2 * d,
    }
}

impl ExperimentConfig {
    pub fn new(objective: &str, acquisition: AcquisitionSpec, iterations: usize) -> Self {
        Self {
            objective: ObjectiveConfig::named(objective),
            acquisition,
            iterations,
            repetitions: 1,
            initial_points: None,
            seed: 0,
            hyperparameters: HyperparameterMode::Refit,
            output_dir: default_output(),
            workers: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without running: the objective
    /// builds, the acquisition spec fits its dimension, counts are sane.
    pub fn validate(&self) -> Result<()> {
        let obj = self.objective.build(0)?;
        self.acquisition
            .validate(obj.dim())
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.initial_points == Some(0) {
            return Err(Error::Config("initial_points must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn initial_points_for(&self, dim: usize) -> usize {
        self.initial_points.unwrap_or_else(|| default_initial_points(dim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::AcquisitionKind;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            iterations = 5
            [objective]
            name = "sin_linear"
            [acquisition]
            kind = "ei"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.acquisition.kind, AcquisitionKind::Ei);
        assert_eq!(cfg.repetitions, 1);
        assert_eq!(cfg.hyperparameters, HyperparameterMode::Refit);
        assert_eq!(cfg.initial_points_for(1), 3);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_names_and_fields() {
        let bad_obj = ExperimentConfig::from_toml("iterations = 1\n[objective]\nname = \"nope\"\n");
        assert!(matches!(bad_obj, Err(Error::Config(m)) if m.contains("sin_linear")));
        let bad_acq = ExperimentConfig::from_toml(
            "iterations = 1\n[objective]\nname = \"sin_linear\"\n[acquisition]\nkind = \"pi\"\n",
        );
        assert!(matches!(bad_acq, Err(Error::Config(_))));
        let extra = ExperimentConfig::from_toml("iterations = 1\ncolour = 3\n[objective]\nname = \"sin_linear\"\n");
        assert!(extra.is_err());
    }

    #[test]
    fn default_design_sizes() {
        assert_eq!(
            [1, 2, 3, 6].map(default_initial_points),
            [3, 5, 10, 12]
        );
    }

    #[test]
    fn overrides_apply() {
        let mut oc = ObjectiveConfig::named("gp_sample");
        oc.seed = 5;
        oc.seed_per_repetition = true;
        oc.observation_std = Some(0.2);
        let a = oc.build(2).unwrap();
        let b = Objective::gp_sample(7).unwrap();
        assert_eq!(a.latent(&[0.4]), b.latent(&[0.4]));
        assert_eq!(a.observation_std(), 0.2);
    }
}
