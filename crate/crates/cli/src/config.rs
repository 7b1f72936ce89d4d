//! Experiment configuration.
//!
//! A TOML file with one section per concern. Every key except `env.name`
//! has a default matching the CartPole setup, so the shortest useful config
//! is
//!
//! ```toml
//! [env]
//! name = "cartpole"
//! ```

use std::path::Path;

use morphevo::envs::{EnvKind, Environment};
use morphevo::generalist::{RunBudget, RunSettings};
use morphevo::metrics::{build_test_sets, TestSets};
use morphevo::net::NetworkTopology;
use morphevo::schedule::{MorphologyGrid, ScheduleKind};
use morphevo::seed::{self, purpose};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub evolution: EvolutionSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    /// `cartpole` or `synthetic`.
    pub name: String,
    /// Synthetic only: x position where the actuator sign flips.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_split: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub hidden: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { hidden: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    /// Number of training morphologies; 1 or a perfect square.
    pub size: usize,
    pub origin: [f64; 2],
    pub step: [f64; 2],
    /// `incremental`, `random` or `random_walk`.
    pub schedule: String,
    pub walk_step: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            size: 64,
            origin: [0.1, 0.1],
            step: [0.1, 0.1],
            schedule: "incremental".into(),
            walk_step: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSection {
    pub sigma0: f64,
    pub max_generations: u64,
    pub stagnation_window: u64,
    pub threshold_multiplier: f64,
    /// Defaults to the environment's target.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub satisfaction_target: Option<f64>,
    pub init_range: f64,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        Self {
            sigma0: 0.1,
            max_generations: 5000,
            stagnation_window: 50,
            threshold_multiplier: 1.0,
            satisfaction_target: None,
            init_range: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub runs: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub output: String,
    /// Generations between checkpoints.
    pub checkpoint_every: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            runs: 30,
            base_seed: 0,
            jobs: 0,
            output: "runs".into(),
            checkpoint_every: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub origin: [f64; 2],
    pub step: [f64; 2],
    pub shape: [usize; 2],
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            origin: [0.1, 0.1],
            step: [0.1, 0.1],
            shape: [18, 18],
        }
    }
}

impl LatticeSpec {
    pub fn grid(&self) -> morphevo::Result<MorphologyGrid> {
        MorphologyGrid::lattice(
            (self.origin[0], self.origin[1]),
            (self.step[0], self.step[1]),
            (self.shape[0], self.shape[1]),
        )
    }
}

impl std::str::FromStr for LatticeSpec {
    type Err = String;

    /// `ox,oy,sx,sy,nx,ny`
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(format!("expected ox,oy,sx,sy,nx,ny, got '{s}'"));
        }
        let f = |i: usize| {
            parts[i]
                .parse::<f64>()
                .map_err(|e| format!("'{}': {e}", parts[i]))
        };
        let n = |i: usize| {
            parts[i]
                .parse::<usize>()
                .map_err(|e| format!("'{}': {e}", parts[i]))
        };
        Ok(Self {
            origin: [f(0)?, f(1)?],
            step: [f(2)?, f(3)?],
            shape: [n(4)?, n(5)?],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub global: LatticeSpec,
    pub local_distance: usize,
    pub n_eval: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            global: LatticeSpec::default(),
            local_distance: morphevo::metrics::LOCAL_DISTANCE,
            n_eval: 3,
        }
    }
}

/// Everything a run needs, built and checked from an [`ExperimentConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub env: EnvKind,
    pub topology: NetworkTopology,
    pub training: MorphologyGrid,
    pub schedule: ScheduleKind,
    pub budget: RunBudget,
    pub sets: TestSets,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.message().trim_end().to_string();
            if path == "." || path.is_empty() {
                CliError::Config(message)
            } else {
                CliError::Config(format!("{path}: {message}"))
            }
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schedule_kind(&self) -> CliResult<ScheduleKind> {
        match self.training.schedule.as_str() {
            "incremental" => Ok(ScheduleKind::Incremental),
            "random" => Ok(ScheduleKind::Random),
            "random_walk" => {
                if self.training.walk_step == 0 {
                    return Err(CliError::Config("training.walk_step must be at least 1".into()));
                }
                Ok(ScheduleKind::RandomWalk {
                    step: self.training.walk_step,
                })
            }
            other => Err(CliError::Config(format!(
                "training.schedule: unknown schedule '{other}' (expected incremental, random or random_walk)"
            ))),
        }
    }

    pub fn set_schedule(&mut self, kind: ScheduleKind) {
        match kind {
            ScheduleKind::Incremental => self.training.schedule = "incremental".into(),
            ScheduleKind::Random => self.training.schedule = "random".into(),
            ScheduleKind::RandomWalk { step } => {
                self.training.schedule = "random_walk".into();
                self.training.walk_step = step;
            }
        }
    }

    pub fn resolve(&self) -> CliResult<Resolved> {
        let config = |what: &str, e: morphevo::Error| CliError::Config(format!("{what}: {e}"));
        let mut env = EnvKind::by_name(&self.env.name).ok_or_else(|| {
            CliError::Config(format!(
                "env.name: unknown environment '{}' (expected cartpole or synthetic)",
                self.env.name
            ))
        })?;
        if let Some(split) = self.env.x_split {
            match &mut env {
                EnvKind::Synthetic(s) => s.x_split = split,
                EnvKind::CartPole(_) => {
                    return Err(CliError::Config(
                        "env.x_split only applies to the synthetic environment".into(),
                    ))
                }
            }
        }
        let spec = env.spec().clone();
        let topology =
            NetworkTopology::new(spec.observation_dim, self.network.hidden, spec.action_dim)
                .map_err(|e| config("network.hidden", e))?;
        let t = &self.training;
        let training = MorphologyGrid::training(
            (t.origin[0], t.origin[1]),
            (t.step[0], t.step[1]),
            t.size,
            &spec.default_morphology,
        )
        .map_err(|e| config("training", e))?;
        let schedule = self.schedule_kind()?;
        let ev = &self.evolution;
        let budget = RunBudget {
            max_generations: ev.max_generations,
            stagnation_window: ev.stagnation_window,
            satisfaction_target: ev.satisfaction_target.unwrap_or(spec.satisfaction_target),
        };
        let global = self
            .metrics
            .global
            .grid()
            .map_err(|e| config("metrics.global", e))?;
        let sets = build_test_sets(
            &training,
            &global,
            &spec.default_morphology,
            self.metrics.local_distance,
        )
        .map_err(|e| config("metrics", e))?;
        if self.metrics.n_eval == 0 {
            return Err(CliError::Config("metrics.n_eval must be at least 1".into()));
        }
        let resolved = Resolved {
            env,
            topology,
            training,
            schedule,
            budget,
            sets,
        };
        resolved
            .settings(0, self)
            .validate()
            .map_err(|e| config("evolution", e))?;
        Ok(resolved)
    }

    /// Hex SHA-256 of the settings that influence results; output location,
    /// worker count, run count and checkpoint spacing are left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.experiment.output = String::new();
        canonical.experiment.jobs = 0;
        canonical.experiment.runs = 0;
        canonical.experiment.checkpoint_every = 0;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    /// Seed of run `index`; every other seed of the run derives from it.
    pub fn run_seed(&self, index: usize) -> u64 {
        seed::derive_path(self.experiment.base_seed, &[purpose::RUN, index as u64])
    }
}

impl Resolved {
    pub fn settings(&self, run_seed: u64, config: &ExperimentConfig) -> RunSettings {
        RunSettings {
            schedule: self.schedule,
            budget: self.budget,
            sigma0: config.evolution.sigma0,
            threshold_multiplier: config.evolution.threshold_multiplier,
            init_range: config.evolution.init_range,
            run_seed,
        }
    }
}

/// Seed for the test-set sweep of a run.
pub fn sweep_seed(run_seed: u64) -> u64 {
    seed::derive(run_seed, purpose::SWEEP)
}
