//! A one-dimensional analytic task whose actuator sign flips across the
//! morphology space, so no single controller can serve both sides.
//!
//! Dynamics: `p ← p + Δt · F · g · u`, where `u ∈ (-1, 1)` is the controller
//! output, `F` the actuator scale and `g = +1` when `x_param < x_split`,
//! `-1` otherwise. The controller observes `[p]`; each step pays
//! `1 - min(1, p²)` measured after the move. Episodes run a fixed number of
//! steps from `p = 1`.

use serde::{Deserialize, Serialize};

use super::{check_controller, EnvSpec, Environment, EpisodeResult, Morphology};
use crate::error::Result;
use crate::net::{forward_unchecked, Controller};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthetic {
    pub spec: EnvSpec,
    pub x_split: f64,
    pub dt: f64,
    pub actuator_scale: f64,
    pub start: f64,
}

impl Default for Synthetic {
    fn default() -> Self {
        let steps = 200;
        Self {
            spec: EnvSpec {
                name: "synthetic".into(),
                observation_dim: 1,
                action_dim: 1,
                episode_cap: steps,
                max_reward: steps as f64,
                sufficiency_threshold: 0.8 * steps as f64,
                satisfaction_target: -0.8 * steps as f64,
                default_morphology: Morphology {
                    x_param: 0.1,
                    y_param: 0.1,
                    grid_index: None,
                },
            },
            // five columns of the 0.1..0.8 lattice on the positive side, three
            // on the negative side
            x_split: 0.55,
            dt: 0.05,
            actuator_scale: 40.0,
            start: 1.0,
        }
    }
}

impl Synthetic {
    pub fn with_split(mut self, x_split: f64) -> Self {
        self.x_split = x_split;
        self
    }

    pub fn gain(&self, morph: &Morphology) -> f64 {
        if morph.x_param < self.x_split {
            1.0
        } else {
            -1.0
        }
    }

    pub fn step(&self, position: f64, action: f64, morph: &Morphology) -> f64 {
        position + self.dt * self.actuator_scale * self.gain(morph) * action
    }

    pub fn step_reward(position: f64) -> f64 {
        1.0 - (position * position).min(1.0)
    }
}

impl Environment for Synthetic {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn evaluate(
        &self,
        morphology: &Morphology,
        controller: &Controller,
        _seed: u64,
    ) -> Result<EpisodeResult> {
        morphology.validate()?;
        check_controller(&self.spec, controller)?;
        let topology = &controller.topology;
        let params = controller.params.as_slice();
        let mut hidden = vec![0.0; topology.n_hidden];
        let mut action = [0.0];

        let mut position = self.start;
        let mut reward_total = 0.0;
        let mut steps = 0;
        let mut terminated_early = false;
        while steps < self.spec.episode_cap {
            forward_unchecked(topology, params, &[position], &mut hidden, &mut action);
            position = self.step(position, action[0], morphology);
            if !position.is_finite() {
                terminated_early = true;
                break;
            }
            reward_total += Self::step_reward(position);
            steps += 1;
        }
        Ok(EpisodeResult {
            reward_total,
            steps,
            terminated_early,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetworkTopology, ParamVector};

    /// Deadbeat controller for gain `sign`: with one tanh hidden unit of unit
    /// weight, the output at p = 1 is exactly -sign / (Δt F), which moves the
    /// mass to the origin in one step.
    fn deadbeat(env: &Synthetic, sign: f64) -> Controller {
        let target = -sign / (env.dt * env.actuator_scale);
        let w_out = target.atanh() / 1f64.tanh();
        Controller::new(
            NetworkTopology::new(1, 1, 1).unwrap(),
            ParamVector::new(vec![1.0, 0.0, w_out, 0.0]).unwrap(),
        )
        .unwrap()
    }

    fn morph(x: f64, y: f64) -> Morphology {
        Morphology::new(x, y).unwrap()
    }

    #[test]
    fn zero_controller_earns_nothing() {
        let env = Synthetic::default();
        let c = Controller::zeros(NetworkTopology::new(1, 3, 1).unwrap());
        let r = env.evaluate(&morph(0.2, 0.3), &c, 0).unwrap();
        assert_eq!(r.reward_total, 0.0);
        assert_eq!(r.steps, 200);
    }

    #[test]
    fn deadbeat_reaches_closed_form_optimum() {
        // Optimum: reward 1 on every one of the 200 steps.
        let env = Synthetic::default();
        let plus = deadbeat(&env, 1.0);
        let minus = deadbeat(&env, -1.0);
        for y in [0.1, 0.4, 0.8] {
            for x in [0.1, 0.3, 0.5] {
                let r = env.evaluate(&morph(x, y), &plus, 0).unwrap();
                assert!((r.reward_total - 200.0).abs() < 1e-9, "{}", r.reward_total);
            }
            for x in [0.6, 0.7, 0.8] {
                let r = env.evaluate(&morph(x, y), &minus, 0).unwrap();
                assert!((r.reward_total - 200.0).abs() < 1e-9, "{}", r.reward_total);
            }
        }
    }

    #[test]
    fn controller_fails_on_opposite_sign_class() {
        let env = Synthetic::default();
        let plus = deadbeat(&env, 1.0);
        let own = env
            .evaluate(&morph(0.2, 0.2), &plus, 0)
            .unwrap()
            .reward_total;
        let other = env
            .evaluate(&morph(0.7, 0.2), &plus, 0)
            .unwrap()
            .reward_total;
        assert!(other < 0.1 * own, "own {own} other {other}");
    }

    #[test]
    fn gain_classes() {
        let env = Synthetic::default();
        assert_eq!(env.gain(&morph(0.5, 0.1)), 1.0);
        assert_eq!(env.gain(&morph(0.6, 0.1)), -1.0);
        let balanced = Synthetic::default().with_split(0.45);
        assert_eq!(balanced.gain(&morph(0.5, 0.1)), -1.0);
    }
}
