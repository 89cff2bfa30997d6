//! Trainable parameters: unconstrained storage, positive materialization.
//!
//! τ, synapse weights and reversal magnitudes must stay positive, so the
//! stored ("raw") values are unconstrained reals materialized through
//! softplus(u) + FLOOR. Reversal signs come from wiring polarity at
//! materialization time, so no training step can flip them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ltc::math::{softplus, softplus_inv};
use crate::wiring::NcpWiring;

/// Additive floor under every softplus-materialized quantity, keeping τ, w
/// and |A| strictly positive even for very negative raw values.
pub const POSITIVE_FLOOR: f64 = 1e-3;

/// All trainable scalars, in unconstrained storage form.
///
/// Vectors are aligned to the wiring: `tau_raw` to non-sensory neurons in id
/// order, the per-synapse vectors to `wiring.synapses` order, the input maps
/// to sensory neurons (= input features) in id order. Field order here is the
/// canonical serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtcParameters {
    /// τ_i = softplus(tau_raw_i) + FLOOR, per non-sensory neuron.
    pub tau_raw: Vec<f64>,
    /// w_ij = softplus(weight_raw_ij) + FLOOR, per synapse.
    pub weight_raw: Vec<f64>,
    /// Sigmoid slope γ_ij, stored directly.
    pub gamma: Vec<f64>,
    /// Sigmoid offset μ_ij, stored directly.
    pub mu: Vec<f64>,
    /// |A_ij| = softplus(reversal_raw_ij) + FLOOR; sign comes from polarity.
    pub reversal_raw: Vec<f64>,
    /// Per-feature input gain (identity-like at init).
    pub input_scale: Vec<f64>,
    /// Per-feature input offset.
    pub input_bias: Vec<f64>,
    /// Motor-state-to-logit gain.
    pub output_scale: f64,
    /// Motor-state-to-logit offset.
    pub output_bias: f64,
}

/// Where a synapse reads its presynaptic activation from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreSource {
    /// Affine-mapped input feature (sensory synapse).
    Feature(usize),
    /// State of a non-sensory neuron, by state index.
    State(usize),
}

/// One synapse with all quantities materialized for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatSynapse {
    pub source: PreSource,
    /// Target state index (non-sensory neurons only).
    pub target: usize,
    /// Nonnegative coupling weight w_ij.
    pub weight: f64,
    pub gamma: f64,
    pub mu: f64,
    /// Signed reversal target A_ij.
    pub reversal: f64,
}

/// Evaluation-ready cell: positive τ/w, signed reversals, resolved indices.
///
/// This is what the fused step consumes. Tests and callers may also build it
/// directly (e.g. with exactly-zero weights), bypassing the softplus floor.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub n_state: usize,
    /// State index whose final value feeds the output logit.
    pub motor_state: usize,
    pub tau: Vec<f64>,
    pub synapses: Vec<MatSynapse>,
    pub input_scale: Vec<f64>,
    pub input_bias: Vec<f64>,
    pub output_scale: f64,
    pub output_bias: f64,
}

/// Sizes that fix the flat parameter layout for a given wiring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamShape {
    pub states: usize,
    pub synapses: usize,
    pub features: usize,
}

impl ParamShape {
    pub fn of(wiring: &NcpWiring) -> ParamShape {
        ParamShape {
            states: wiring.counts.ode_units(),
            synapses: wiring.synapses.len(),
            features: wiring.counts.sensory,
        }
    }

    /// Total trainable scalar count — a pure function of the wiring shape.
    pub fn count(&self) -> usize {
        self.states + 4 * self.synapses + 2 * self.features + 2
    }

    /// Human-readable name of one flat coordinate, for gradient reports.
    pub fn label(&self, index: usize) -> String {
        let mut i = index;
        for (name, len) in [
            ("tau_raw", self.states),
            ("weight_raw", self.synapses),
            ("gamma", self.synapses),
            ("mu", self.synapses),
            ("reversal_raw", self.synapses),
            ("input_scale", self.features),
            ("input_bias", self.features),
        ] {
            if i < len {
                return format!("{name}[{i}]");
            }
            i -= len;
        }
        match i {
            0 => "output_scale".to_string(),
            1 => "output_bias".to_string(),
            _ => format!("out_of_range[{index}]"),
        }
    }
}

impl LtcParameters {
    pub fn shape(&self) -> ParamShape {
        ParamShape {
            states: self.tau_raw.len(),
            synapses: self.weight_raw.len(),
            features: self.input_scale.len(),
        }
    }

    /// Flatten to the canonical coordinate order:
    /// tau_raw | weight_raw | gamma | mu | reversal_raw | input_scale |
    /// input_bias | output_scale | output_bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.shape().count());
        flat.extend_from_slice(&self.tau_raw);
        flat.extend_from_slice(&self.weight_raw);
        flat.extend_from_slice(&self.gamma);
        flat.extend_from_slice(&self.mu);
        flat.extend_from_slice(&self.reversal_raw);
        flat.extend_from_slice(&self.input_scale);
        flat.extend_from_slice(&self.input_bias);
        flat.push(self.output_scale);
        flat.push(self.output_bias);
        flat
    }

    /// Rebuild from a flat coordinate vector in the canonical order.
    pub fn from_flat(shape: ParamShape, flat: &[f64]) -> Result<LtcParameters> {
        if flat.len() != shape.count() {
            return Err(Error::Config(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                shape.count()
            )));
        }
        let mut it = flat.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let tau_raw = take(shape.states);
        let weight_raw = take(shape.synapses);
        let gamma = take(shape.synapses);
        let mu = take(shape.synapses);
        let reversal_raw = take(shape.synapses);
        let input_scale = take(shape.features);
        let input_bias = take(shape.features);
        let output_scale = it.next().expect("length checked above");
        let output_bias = it.next().expect("length checked above");
        Ok(LtcParameters {
            tau_raw,
            weight_raw,
            gamma,
            mu,
            reversal_raw,
            input_scale,
            input_bias,
            output_scale,
            output_bias,
        })
    }

    /// Materialize positive τ/w/|A| and resolve synapse indices against the
    /// wiring. Fails if the parameter vectors don't match the wiring shape.
    pub fn materialize(&self, wiring: &NcpWiring) -> Result<CellParams> {
        let shape = ParamShape::of(wiring);
        if self.shape() != shape {
            return Err(Error::Config(format!(
                "parameter shape {:?} does not match wiring shape {:?}",
                self.shape(),
                shape
            )));
        }
        let n_sensory = wiring.counts.sensory;
        let synapses = wiring
            .synapses
            .iter()
            .enumerate()
            .map(|(s, syn)| MatSynapse {
                source: if syn.source < n_sensory {
                    PreSource::Feature(syn.source)
                } else {
                    PreSource::State(syn.source - n_sensory)
                },
                target: syn.target - n_sensory,
                weight: softplus(self.weight_raw[s]) + POSITIVE_FLOOR,
                gamma: self.gamma[s],
                mu: self.mu[s],
                reversal: f64::from(syn.polarity)
                    * (softplus(self.reversal_raw[s]) + POSITIVE_FLOOR),
            })
            .collect();
        Ok(CellParams {
            n_state: shape.states,
            motor_state: wiring.counts.motor_ids().start - n_sensory,
            tau: self
                .tau_raw
                .iter()
                .map(|&u| softplus(u) + POSITIVE_FLOOR)
                .collect(),
            synapses,
            input_scale: self.input_scale.clone(),
            input_bias: self.input_bias.clone(),
            output_scale: self.output_scale,
            output_bias: self.output_bias,
        })
    }
}

/// Seeded initialization: τ in [1,5] sample intervals, weights in [0.01,1],
/// γ in [3,8], μ in [0.3,0.8], |A| = 1 with the wiring's polarity sign,
/// identity-like input/output maps. Deterministic in (wiring, seed).
pub fn init_parameters(wiring: &NcpWiring, seed: u64) -> Result<LtcParameters> {
    let report = crate::wiring::validate_wiring(wiring);
    if !report.is_ok() {
        return Err(Error::InvalidWiring {
            violations: report.violations,
        });
    }
    let shape = ParamShape::of(wiring);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Field-major draw order is part of the determinism contract.
    let tau_raw = (0..shape.states)
        .map(|_| softplus_inv(rng.random_range(1.0..5.0) - POSITIVE_FLOOR))
        .collect();
    let weight_raw = (0..shape.synapses)
        .map(|_| softplus_inv(rng.random_range(0.01..1.0) - POSITIVE_FLOOR))
        .collect();
    let gamma = (0..shape.synapses)
        .map(|_| rng.random_range(3.0..8.0))
        .collect();
    let mu = (0..shape.synapses)
        .map(|_| rng.random_range(0.3..0.8))
        .collect();
    let reversal_raw = vec![softplus_inv(1.0 - POSITIVE_FLOOR); shape.synapses];
    Ok(LtcParameters {
        tau_raw,
        weight_raw,
        gamma,
        mu,
        reversal_raw,
        input_scale: vec![1.0; shape.features],
        input_bias: vec![0.0; shape.features],
        output_scale: 1.0,
        output_bias: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiring::{build_ncp, FanoutSpec, LayerCounts, Synapse};

    fn wiring(seed: u64) -> NcpWiring {
        build_ncp(LayerCounts::default(), FanoutSpec::default(), seed).unwrap()
    }

    #[test]
    fn init_respects_all_materialized_ranges() {
        let w = wiring(7);
        let params = init_parameters(&w, 7).unwrap();
        let cell = params.materialize(&w).unwrap();
        for &tau in &cell.tau {
            assert!((1.0 - 1e-9..=5.0 + 1e-9).contains(&tau), "tau {tau}");
        }
        for (syn, mat) in w.synapses.iter().zip(&cell.synapses) {
            assert!(mat.weight > 0.0 && mat.weight <= 1.0 + 1e-9);
            assert!(mat.weight >= 0.01 - 1e-9);
            assert!((3.0..8.0).contains(&mat.gamma));
            assert!((0.3..0.8).contains(&mat.mu));
            assert!((mat.reversal.abs() - 1.0).abs() < 1e-12);
            assert_eq!(mat.reversal.signum() as i8, syn.polarity);
        }
        assert!(cell.input_scale.iter().all(|&s| s == 1.0));
        assert!(cell.input_bias.iter().all(|&b| b == 0.0));
        assert_eq!((cell.output_scale, cell.output_bias), (1.0, 0.0));
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let w = wiring(7);
        let a = init_parameters(&w, 7).unwrap();
        let b = init_parameters(&w, 7).unwrap();
        assert_eq!(a, b, "same seed must give bit-identical parameters");
        let c = init_parameters(&w, 8).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap(),
            "different seeds must differ somewhere"
        );
    }

    #[test]
    fn init_rejects_invalid_wiring() {
        let mut w = wiring(1);
        let dup = w.synapses[0];
        w.synapses.push(dup);
        let err = init_parameters(&w, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidWiring { .. }), "got {err:?}");
    }

    #[test]
    fn parameter_count_is_a_pure_function_of_the_wiring() {
        let w = wiring(3);
        let shape = ParamShape::of(&w);
        let expected = shape.states + 4 * shape.synapses + 2 * shape.features + 2;
        assert_eq!(shape.count(), expected);
        let params = init_parameters(&w, 11).unwrap();
        assert_eq!(params.flatten().len(), shape.count());
    }

    #[test]
    fn flatten_round_trips_exactly() {
        let w = wiring(5);
        let params = init_parameters(&w, 5).unwrap();
        let flat = params.flatten();
        let back = LtcParameters::from_flat(params.shape(), &flat).unwrap();
        assert_eq!(params, back);
        let err = LtcParameters::from_flat(params.shape(), &flat[1..]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn canonical_order_places_output_bias_last() {
        let w = wiring(5);
        let mut params = init_parameters(&w, 5).unwrap();
        params.output_bias = 123.25;
        let flat = params.flatten();
        assert_eq!(*flat.last().unwrap(), 123.25);
        let shape = params.shape();
        assert_eq!(shape.label(0), "tau_raw[0]");
        assert_eq!(shape.label(shape.count() - 1), "output_bias");
        assert_eq!(shape.label(shape.states), "weight_raw[0]");
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let w = wiring(9);
        let params = init_parameters(&w, 9).unwrap();
        let json = serde_json::to_string(&params).unwrap();
        let back: LtcParameters = serde_json::from_str(&json).unwrap();
        assert_eq!(params, back);
        // Serializing again gives the same bytes: canonical field order plus
        // shortest-round-trip float formatting.
        assert_eq!(json, serde_json::to_string(&back).unwrap());
    }

    #[test]
    fn materialize_rejects_mismatched_shapes() {
        let w_small = wiring(2);
        let params = init_parameters(&w_small, 2).unwrap();
        let w_big = build_ncp(
            LayerCounts {
                sensory: 3,
                ..LayerCounts::default()
            },
            FanoutSpec::default(),
            2,
        )
        .unwrap();
        let err = params.materialize(&w_big).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn reversal_sign_always_tracks_polarity() {
        // Even with a very negative raw value the magnitude stays positive,
        // so the sign can only come from the wiring.
        let counts = LayerCounts {
            sensory: 1,
            inter: 1,
            command: 1,
            motor: 1,
        };
        let w = NcpWiring {
            counts,
            synapses: vec![
                Synapse {
                    source: 0,
                    target: 1,
                    polarity: -1,
                },
                Synapse {
                    source: 1,
                    target: 2,
                    polarity: 1,
                },
                Synapse {
                    source: 2,
                    target: 3,
                    polarity: -1,
                },
            ],
            seed: 0,
        };
        let mut params = init_parameters(&w, 0).unwrap();
        params.reversal_raw = vec![-40.0, 0.0, 40.0];
        let cell = params.materialize(&w).unwrap();
        let signs: Vec<i8> = cell
            .synapses
            .iter()
            .map(|s| s.reversal.signum() as i8)
            .collect();
        assert_eq!(signs, vec![-1, 1, -1]);
        assert!(cell.synapses[0].reversal.abs() >= POSITIVE_FLOOR);
    }
}
