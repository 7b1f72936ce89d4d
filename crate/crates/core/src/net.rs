//! Fixed-topology feedforward controllers.
//!
//! A controller is a single hidden layer network with tanh activations on
//! both the hidden and the output layer, fully described by a
//! [`NetworkTopology`] and a flat [`ParamVector`].
//!
//! Flat vector layout, frozen for serialization: all input→hidden weights
//! first, then all hidden→output weights. Within each block the weights are
//! grouped by destination neuron (row-major), and each destination lists its
//! source units in order followed by its bias. For the (4, 20, 1) cart-pole
//! controller indices `0..100` feed the hidden layer and `100..121` feed the
//! output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest representable value strictly below 1.
///
/// `tanh` rounds to exactly ±1 in f64 for pre-activations beyond ~19, so
/// outputs are clamped to keep actions inside the open interval.
pub const OUTPUT_LIMIT: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_outputs: usize,
}

impl NetworkTopology {
    pub fn new(n_inputs: usize, n_hidden: usize, n_outputs: usize) -> Result<Self> {
        let topology = Self {
            n_inputs,
            n_hidden,
            n_outputs,
        };
        topology.validate()?;
        Ok(topology)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 || self.n_hidden == 0 || self.n_outputs == 0 {
            return Err(Error::Topology(format!(
                "all layer sizes must be at least 1, got ({}, {}, {})",
                self.n_inputs, self.n_hidden, self.n_outputs
            )));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        (self.n_inputs + 1) * self.n_hidden + (self.n_hidden + 1) * self.n_outputs
    }

    /// Number of leading vector entries that feed the hidden layer.
    pub fn hidden_block_len(&self) -> usize {
        (self.n_inputs + 1) * self.n_hidden
    }

    /// Describes which connection every vector index drives, in index order.
    pub fn layout(&self) -> Vec<Connection> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for to in 0..self.n_hidden {
            for from in 0..self.n_inputs {
                out.push(Connection {
                    layer: Layer::InputToHidden,
                    from: Source::Unit(from),
                    to,
                });
            }
            out.push(Connection {
                layer: Layer::InputToHidden,
                from: Source::Bias,
                to,
            });
        }
        for to in 0..self.n_outputs {
            for from in 0..self.n_hidden {
                out.push(Connection {
                    layer: Layer::HiddenToOutput,
                    from: Source::Unit(from),
                    to,
                });
            }
            out.push(Connection {
                layer: Layer::HiddenToOutput,
                from: Source::Bias,
                to,
            });
        }
        out
    }

    /// Flat vector index of a connection. Inverse of [`layout`](Self::layout).
    pub fn index_of(&self, connection: &Connection) -> Option<usize> {
        let (fan_in, offset, n_dest) = match connection.layer {
            Layer::InputToHidden => (self.n_inputs, 0, self.n_hidden),
            Layer::HiddenToOutput => (self.n_hidden, self.hidden_block_len(), self.n_outputs),
        };
        if connection.to >= n_dest {
            return None;
        }
        let column = match connection.from {
            Source::Unit(i) if i < fan_in => i,
            Source::Unit(_) => return None,
            Source::Bias => fan_in,
        };
        Some(offset + connection.to * (fan_in + 1) + column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layer {
    InputToHidden,
    HiddenToOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Unit(usize),
    Bias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Connection {
    pub layer: Layer,
    pub from: Source,
    pub to: usize,
}

/// Flat genome holding every weight of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Per-layer weight matrices, the structured view of a [`ParamVector`].
///
/// Row `j` of `input_hidden` holds the weights into hidden unit `j` with the
/// bias in the last column; likewise for `hidden_output`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub input_hidden: Vec<Vec<f64>>,
    pub hidden_output: Vec<Vec<f64>>,
}

impl LayerWeights {
    pub fn decode(topology: &NetworkTopology, params: &ParamVector) -> Result<Self> {
        check_params(topology, params)?;
        let (hidden, output) = params.as_slice().split_at(topology.hidden_block_len());
        Ok(Self {
            input_hidden: hidden
                .chunks(topology.n_inputs + 1)
                .map(<[f64]>::to_vec)
                .collect(),
            hidden_output: output
                .chunks(topology.n_hidden + 1)
                .map(<[f64]>::to_vec)
                .collect(),
        })
    }

    pub fn encode(&self, topology: &NetworkTopology) -> Result<ParamVector> {
        let rows_ok = self.input_hidden.len() == topology.n_hidden
            && self.hidden_output.len() == topology.n_outputs
            && self
                .input_hidden
                .iter()
                .all(|r| r.len() == topology.n_inputs + 1)
            && self
                .hidden_output
                .iter()
                .all(|r| r.len() == topology.n_hidden + 1);
        if !rows_ok {
            return Err(Error::Topology(
                "layer weight shapes do not match the topology".into(),
            ));
        }
        ParamVector::new(
            self.input_hidden
                .iter()
                .chain(&self.hidden_output)
                .flatten()
                .copied()
                .collect(),
        )
    }
}

fn check_params(topology: &NetworkTopology, params: &ParamVector) -> Result<()> {
    topology.validate()?;
    if params.len() != topology.parameter_count() {
        return Err(Error::Dimension {
            what: "parameter vector",
            expected: topology.parameter_count(),
            got: params.len(),
        });
    }
    Ok(())
}

/// Runs the network on one observation.
pub fn forward(
    topology: &NetworkTopology,
    params: &ParamVector,
    observation: &[f64],
) -> Result<Vec<f64>> {
    check_params(topology, params)?;
    if observation.len() != topology.n_inputs {
        return Err(Error::Dimension {
            what: "observation",
            expected: topology.n_inputs,
            got: observation.len(),
        });
    }
    let mut hidden = vec![0.0; topology.n_hidden];
    let mut out = vec![0.0; topology.n_outputs];
    forward_unchecked(
        topology,
        params.as_slice(),
        observation,
        &mut hidden,
        &mut out,
    );
    Ok(out)
}

/// Forward pass without shape checks, writing into caller-owned buffers.
/// Used inside episode loops once shapes have been validated.
pub(crate) fn forward_unchecked(
    topology: &NetworkTopology,
    params: &[f64],
    observation: &[f64],
    hidden: &mut [f64],
    out: &mut [f64],
) {
    let fan_in = topology.n_inputs + 1;
    for (h, row) in hidden.iter_mut().zip(params.chunks_exact(fan_in)) {
        let (weights, bias) = row.split_at(topology.n_inputs);
        let z = weights
            .iter()
            .zip(observation)
            .fold(bias[0], |acc, (w, x)| acc + w * x);
        *h = z.tanh();
    }
    let fan_in = topology.n_hidden + 1;
    let output_block = &params[topology.hidden_block_len()..];
    for (o, row) in out.iter_mut().zip(output_block.chunks_exact(fan_in)) {
        let (weights, bias) = row.split_at(topology.n_hidden);
        let z = weights
            .iter()
            .zip(hidden.iter())
            .fold(bias[0], |acc, (w, x)| acc + w * x);
        *o = z.tanh().clamp(-OUTPUT_LIMIT, OUTPUT_LIMIT);
    }
}

/// A topology paired with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub topology: NetworkTopology,
    pub params: ParamVector,
}

impl Controller {
    pub fn new(topology: NetworkTopology, params: ParamVector) -> Result<Self> {
        check_params(&topology, &params)?;
        Ok(Self { topology, params })
    }

    pub fn zeros(topology: NetworkTopology) -> Self {
        Self {
            params: ParamVector::zeros(topology.parameter_count()),
            topology,
        }
    }

    pub fn forward(&self, observation: &[f64]) -> Result<Vec<f64>> {
        forward(&self.topology, &self.params, observation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cartpole() -> NetworkTopology {
        NetworkTopology::new(4, 20, 1).unwrap()
    }

    #[test]
    fn cartpole_parameter_count() {
        assert_eq!(cartpole().parameter_count(), 121);
        assert_eq!(NetworkTopology::new(1, 1, 1).unwrap().parameter_count(), 4);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let t = cartpole();
        let out = forward(&t, &ParamVector::zeros(121), &[0.3, -2.0, 0.1, 5.0]).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn hand_set_two_layer_composition() {
        let t = NetworkTopology::new(1, 1, 1).unwrap();
        // w_ih, b_h, w_ho, b_o
        let p = ParamVector::new(vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let out = forward(&t, &p, &[0.5]).unwrap();
        // tanh(tanh(0.5)) evaluated independently
        assert!((out[0] - 0.431_808_180_595_096_1).abs() < 1e-15);
    }

    #[test]
    fn dimension_errors() {
        let t = cartpole();
        assert!(matches!(
            forward(&t, &ParamVector::zeros(120), &[0.0; 4]),
            Err(Error::Dimension {
                expected: 121,
                got: 120,
                ..
            })
        ));
        assert!(matches!(
            forward(&t, &ParamVector::zeros(121), &[0.0; 3]),
            Err(Error::Dimension {
                expected: 4,
                got: 3,
                ..
            })
        ));
        assert!(NetworkTopology::new(0, 20, 1).is_err());
        assert!(ParamVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn cartpole_layout_blocks() {
        let t = cartpole();
        let layout = t.layout();
        assert_eq!(layout.len(), 121);
        assert!(layout[..100]
            .iter()
            .all(|c| c.layer == Layer::InputToHidden));
        assert!(layout[100..]
            .iter()
            .all(|c| c.layer == Layer::HiddenToOutput));
        assert_eq!(
            layout[4],
            Connection {
                layer: Layer::InputToHidden,
                from: Source::Bias,
                to: 0
            }
        );
        assert_eq!(layout[120].from, Source::Bias);
    }

    #[test]
    fn saturated_output_stays_open() {
        let t = NetworkTopology::new(1, 1, 1).unwrap();
        let p = ParamVector::new(vec![1e6, 0.0, 1e6, 0.0]).unwrap();
        let out = forward(&t, &p, &[1.0]).unwrap();
        assert!(out[0] < 1.0 && out[0] > 0.999);
    }

    fn topology_strategy() -> impl Strategy<Value = NetworkTopology> {
        (1usize..=64, 1usize..=64, 1usize..=64).prop_map(|(i, h, o)| NetworkTopology {
            n_inputs: i,
            n_hidden: h,
            n_outputs: o,
        })
    }

    proptest! {
        #[test]
        fn parameter_count_formula(t in topology_strategy()) {
            prop_assert_eq!(t.layout().len(), t.parameter_count());
            prop_assert_eq!(
                t.parameter_count(),
                (t.n_inputs + 1) * t.n_hidden + (t.n_hidden + 1) * t.n_outputs
            );
        }

        #[test]
        fn layout_is_a_bijection(t in topology_strategy()) {
            for (i, c) in t.layout().iter().enumerate() {
                prop_assert_eq!(t.index_of(c), Some(i));
            }
        }

        #[test]
        fn encode_decode_roundtrip(
            (t, values) in topology_strategy().prop_flat_map(|t| {
                (Just(t), prop::collection::vec(-1e6f64..1e6, t.parameter_count()))
            })
        ) {
            let p = ParamVector::new(values).unwrap();
            let w = LayerWeights::decode(&t, &p).unwrap();
            prop_assert_eq!(w.encode(&t).unwrap(), p);
        }

        #[test]
        fn outputs_bounded_and_deterministic(
            values in prop::collection::vec(-1e3f64..1e3, 121),
            obs in prop::collection::vec(-1e3f64..1e3, 4),
        ) {
            let t = cartpole();
            let p = ParamVector::new(values).unwrap();
            let a = forward(&t, &p, &obs).unwrap();
            let b = forward(&t, &p, &obs).unwrap();
            prop_assert!(a.iter().all(|v| *v > -1.0 && *v < 1.0));
            prop_assert_eq!(a, b);
        }
    }
}
