//! Brute-force reference evaluator for the cell forward pass.
//!
//! This implementation is intentionally naive: it walks every (source,
//! target) neuron pair at every substep, looks synapses up by scanning the
//! wiring edge list, and rebuilds every materialized quantity on the fly.
//! It shares no code with the production kernel, so agreement between the
//! two is meaningful evidence that the fused step is implemented correctly.

use crate::error::Result;
use crate::ltc::cell::ObservationWindow;
use crate::ltc::math::{sigmoid, softplus};
use crate::ltc::params::{LtcParameters, POSITIVE_FLOOR};
use crate::wiring::NcpWiring;

/// Find the synapse index for a (source, target) global-id pair by scanning.
fn synapse_index(wiring: &NcpWiring, source: usize, target: usize) -> Option<usize> {
    wiring
        .synapses
        .iter()
        .position(|s| s.source == source && s.target == target)
}

/// Evaluate one window exactly like `forward_sequence`, the slow way.
pub fn forward_reference(
    window: &ObservationWindow,
    params: &LtcParameters,
    wiring: &NcpWiring,
    unfolds: usize,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let counts = &wiring.counts;
    let n_sensory = counts.sensory;
    let n_state = counts.ode_units();
    let dt = 1.0 / unfolds as f64;

    let mut state = vec![0.0; n_state];
    let mut trajectory = Vec::new();
    for row in window.rows() {
        for _ in 0..unfolds {
            let mut next = vec![0.0; n_state];
            // One target neuron at a time, scanning all possible sources.
            for target_id in n_sensory..counts.total_units() {
                let i = target_id - n_sensory;
                let tau = softplus(params.tau_raw[i]) + POSITIVE_FLOOR;
                let mut numerator = state[i];
                let mut denominator = 1.0 + dt / tau;
                for source_id in 0..counts.total_units() {
                    let Some(s) = synapse_index(wiring, source_id, target_id) else {
                        continue;
                    };
                    let pre = if source_id < n_sensory {
                        params.input_scale[source_id] * row[source_id]
                            + params.input_bias[source_id]
                    } else {
                        state[source_id - n_sensory]
                    };
                    let weight = softplus(params.weight_raw[s]) + POSITIVE_FLOOR;
                    let reversal = f64::from(wiring.synapses[s].polarity)
                        * (softplus(params.reversal_raw[s]) + POSITIVE_FLOOR);
                    let gate = weight * sigmoid(params.gamma[s] * pre + params.mu[s]);
                    numerator += dt * gate * reversal;
                    denominator += dt * gate;
                }
                next[i] = numerator / denominator;
            }
            state = next;
        }
        trajectory.push(state.clone());
    }
    let motor_state = counts.motor_ids().start - n_sensory;
    let logit = params.output_scale * state[motor_state] + params.output_bias;
    Ok((trajectory, sigmoid(logit)))
}
