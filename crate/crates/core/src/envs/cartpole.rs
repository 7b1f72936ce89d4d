use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_controller, EnvSpec, Environment, EpisodeResult, Morphology};
use crate::error::Result;
use crate::net::{forward_unchecked, Controller};
use crate::seed;

/// Cart position, cart velocity, pole angle, pole angular velocity.
pub type CartPoleState = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPolePhysics {
    pub gravity: f64,
    pub cart_mass: f64,
    pub force_mag: f64,
    pub tau: f64,
    pub theta_threshold: f64,
    pub x_threshold: f64,
    /// Half-width of the uniform initial-state distribution.
    pub init_range: f64,
}

impl Default for CartPolePhysics {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            force_mag: 10.0,
            tau: 0.02,
            theta_threshold: 0.2095,
            x_threshold: 2.4,
            init_range: 0.05,
        }
    }
}

impl CartPolePhysics {
    /// Second derivatives `(ẍ, θ̈)` at `state` under `force`.
    ///
    /// `morph.x_param` is the pole half-length, `morph.y_param` the pole mass.
    pub fn accelerations(
        &self,
        state: &CartPoleState,
        force: f64,
        morph: &Morphology,
    ) -> (f64, f64) {
        let [_, _, theta, theta_dot] = *state;
        let half_length = morph.x_param;
        let pole_mass = morph.y_param;
        let total_mass = self.cart_mass + pole_mass;
        let polemass_length = pole_mass * half_length;
        let (sin, cos) = theta.sin_cos();

        let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (half_length * (4.0 / 3.0 - pole_mass * cos * cos / total_mass));
        let x_acc = temp - polemass_length * theta_acc * cos / total_mass;
        (x_acc, theta_acc)
    }

    /// One explicit Euler step.
    pub fn step(&self, state: &CartPoleState, force: f64, morph: &Morphology) -> CartPoleState {
        let (x_acc, theta_acc) = self.accelerations(state, force, morph);
        let [x, x_dot, theta, theta_dot] = *state;
        [
            x + self.tau * x_dot,
            x_dot + self.tau * x_acc,
            theta + self.tau * theta_dot,
            theta_dot + self.tau * theta_acc,
        ]
    }

    pub fn out_of_bounds(&self, state: &CartPoleState) -> bool {
        state[0].abs() > self.x_threshold || state[2].abs() > self.theta_threshold
    }
}

/// Cart-pole balancing with continuous force; 1 reward per upright step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartPole {
    pub spec: EnvSpec,
    pub physics: CartPolePhysics,
    /// Replaces the random initial state; used to probe exact equilibria.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<CartPoleState>,
}

impl Default for CartPole {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "cartpole".into(),
                observation_dim: 4,
                action_dim: 1,
                episode_cap: 1000,
                max_reward: 1000.0,
                sufficiency_threshold: 800.0,
                satisfaction_target: -800.0,
                default_morphology: Morphology {
                    x_param: 0.5,
                    y_param: 0.1,
                    grid_index: None,
                },
            },
            physics: CartPolePhysics::default(),
            initial_state: None,
        }
    }
}

impl CartPole {
    pub fn with_initial_state(mut self, state: CartPoleState) -> Self {
        self.initial_state = Some(state);
        self
    }

    pub fn initial_state_for(&self, seed: u64) -> CartPoleState {
        if let Some(state) = self.initial_state {
            return state;
        }
        let mut rng = seed::rng(seed);
        let r = self.physics.init_range;
        std::array::from_fn(|_| rng.random_range(-r..=r))
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn evaluate(
        &self,
        morphology: &Morphology,
        controller: &Controller,
        seed: u64,
    ) -> Result<EpisodeResult> {
        morphology.validate()?;
        check_controller(&self.spec, controller)?;
        let topology = &controller.topology;
        let params = controller.params.as_slice();
        let mut hidden = vec![0.0; topology.n_hidden];
        let mut action = [0.0];

        let mut state = self.initial_state_for(seed);
        let mut steps = 0;
        let mut terminated_early = false;
        while steps < self.spec.episode_cap {
            forward_unchecked(topology, params, &state, &mut hidden, &mut action);
            let force = action[0] * self.physics.force_mag;
            state = self.physics.step(&state, force, morphology);
            if state.iter().any(|v| !v.is_finite()) || self.physics.out_of_bounds(&state) {
                terminated_early = true;
                break;
            }
            steps += 1;
        }
        Ok(EpisodeResult {
            reward_total: steps as f64,
            steps,
            terminated_early,
        })
    }
}
