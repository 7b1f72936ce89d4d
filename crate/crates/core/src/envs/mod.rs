//! Morphology-parameterized episodic control tasks.

mod cartpole;
mod synthetic;

pub use cartpole::{CartPole, CartPolePhysics, CartPoleState};
pub use synthetic::Synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Controller;

/// A point in the two-dimensional morphology space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Morphology {
    pub x_param: f64,
    pub y_param: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_index: Option<(usize, usize)>,
}

impl Morphology {
    pub fn new(x_param: f64, y_param: f64) -> Result<Self> {
        let m = Self {
            x_param,
            y_param,
            grid_index: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_index(mut self, i: usize, j: usize) -> Self {
        self.grid_index = Some((i, j));
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.x_param > 0.0
            && self.y_param > 0.0
            && self.x_param.is_finite()
            && self.y_param.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Morphology {
                x: self.x_param,
                y: self.y_param,
            })
        }
    }

    /// Same physical parameters, ignoring lattice coordinates.
    pub fn same_params(&self, other: &Morphology) -> bool {
        (self.x_param - other.x_param).abs() < 1e-9 && (self.y_param - other.y_param).abs() < 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub reward_total: f64,
    pub steps: usize,
    pub terminated_early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub observation_dim: usize,
    pub action_dim: usize,
    pub episode_cap: usize,
    /// Highest reward one episode can earn.
    pub max_reward: f64,
    /// Raw reward at or above which a morphology counts as handled.
    pub sufficiency_threshold: f64,
    /// Mean fitness (negated reward) at or below which evolution stops.
    pub satisfaction_target: f64,
    pub default_morphology: Morphology,
}

/// An episodic task whose physics depend on a [`Morphology`].
pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Runs one full episode; deterministic in `seed`. Returns the raw reward.
    fn evaluate(
        &self,
        morphology: &Morphology,
        controller: &Controller,
        seed: u64,
    ) -> Result<EpisodeResult>;
}

pub(crate) fn check_controller(spec: &EnvSpec, controller: &Controller) -> Result<()> {
    let t = &controller.topology;
    if t.n_inputs != spec.observation_dim {
        return Err(Error::Dimension {
            what: "controller inputs",
            expected: spec.observation_dim,
            got: t.n_inputs,
        });
    }
    if t.n_outputs != spec.action_dim {
        return Err(Error::Dimension {
            what: "controller outputs",
            expected: spec.action_dim,
            got: t.n_outputs,
        });
    }
    if controller.params.len() != t.parameter_count() {
        return Err(Error::Dimension {
            what: "parameter vector",
            expected: t.parameter_count(),
            got: controller.params.len(),
        });
    }
    Ok(())
}

/// The concrete environments, selectable by name from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvKind {
    CartPole(CartPole),
    Synthetic(Synthetic),
}

impl EnvKind {
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "cartpole" | "cart_pole" => Some(Self::CartPole(CartPole::default())),
            "synthetic" => Some(Self::Synthetic(Synthetic::default())),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.spec().name
    }
}

impl Environment for EnvKind {
    fn spec(&self) -> &EnvSpec {
        match self {
            Self::CartPole(env) => env.spec(),
            Self::Synthetic(env) => env.spec(),
        }
    }

    fn evaluate(
        &self,
        morphology: &Morphology,
        controller: &Controller,
        seed: u64,
    ) -> Result<EpisodeResult> {
        match self {
            Self::CartPole(env) => env.evaluate(morphology, controller, seed),
            Self::Synthetic(env) => env.evaluate(morphology, controller, seed),
        }
    }
}
