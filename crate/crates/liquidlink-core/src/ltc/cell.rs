//! The fused semi-implicit cell step and window-level forward evaluation.
//!
//! One step advances every neuron simultaneously from the same pre-step
//! state:
//!
//! ```text
//! x_i' = ( x_i + dt·Σ_j w_ij·σ(γ_ij·pre_j + μ_ij)·A_ij )
//!        / ( 1 + dt·(1/τ_i + Σ_j w_ij·σ(γ_ij·pre_j + μ_ij)) )
//! ```
//!
//! where `pre_j` is the affine-mapped input feature for sensory synapses and
//! the presynaptic neuron state for recurrent ones. The update is a convex
//! combination of x_i, 0 (the leak) and the reversal targets A_ij, which is
//! what makes the state provably bounded by max|A| from a zero start.

use crate::error::{Error, Result};
use crate::ltc::math::sigmoid;
use crate::ltc::params::{CellParams, LtcParameters, PreSource};
use crate::wiring::NcpWiring;

/// A fixed-length window of per-timestep input features.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    rows: Vec<Vec<f64>>,
    t_end: usize,
}

impl ObservationWindow {
    /// Validates: at least one row, uniform row width ≥ 1, all entries
    /// finite and inside [−1, 1] (power-derived features are normalized).
    pub fn new(rows: Vec<Vec<f64>>, t_end: usize) -> Result<ObservationWindow> {
        if rows.is_empty() {
            return Err(Error::Config("observation window has no rows".into()));
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(Error::Config("observation window rows are empty".into()));
        }
        for (t, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Config(format!(
                    "window row {t} has {} features, expected {width}",
                    row.len()
                )));
            }
            for (f, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!(
                        "window feature [{t}][{f}] = {v} is outside [-1, 1]"
                    )));
                }
            }
        }
        Ok(ObservationWindow { rows, t_end })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.rows[0].len()
    }

    /// Trace index of the last row, the time the prediction is made at.
    pub fn t_end(&self) -> usize {
        self.t_end
    }
}

/// Gate value of one synapse: w·σ(γ·pre + μ). Monotone in `pre` when γ > 0.
pub fn synapse_gate(weight: f64, gamma: f64, mu: f64, pre: f64) -> f64 {
    weight * sigmoid(gamma * pre + mu)
}

/// One fused substep for all neurons. `sig` and `den` receive the per-synapse
/// sigmoid values and per-neuron denominators (the training tape needs both);
/// `out` receives the next state and must not alias `state_in`.
pub(crate) fn step_full(
    cell: &CellParams,
    state_in: &[f64],
    sensory_act: &[f64],
    dt: f64,
    sig: &mut [f64],
    den: &mut [f64],
    out: &mut [f64],
) {
    // `out` accumulates numerators until the final division.
    for i in 0..cell.n_state {
        out[i] = state_in[i];
        den[i] = 1.0 + dt / cell.tau[i];
    }
    for (s, syn) in cell.synapses.iter().enumerate() {
        let pre = match syn.source {
            PreSource::Feature(j) => sensory_act[j],
            PreSource::State(k) => state_in[k],
        };
        let sg = sigmoid(syn.gamma * pre + syn.mu);
        sig[s] = sg;
        let g = syn.weight * sg;
        out[syn.target] += dt * g * syn.reversal;
        den[syn.target] += dt * g;
    }
    for i in 0..cell.n_state {
        out[i] /= den[i];
    }
}

/// Affine input map: act_j = input_scale_j·feature_j + input_bias_j.
pub(crate) fn sensory_activation(cell: &CellParams, features: &[f64], act: &mut [f64]) {
    for j in 0..features.len() {
        act[j] = cell.input_scale[j] * features[j] + cell.input_bias[j];
    }
}

/// Advance the cell by one fused step of size `dt`.
///
/// Validates inputs; the hot loops below use the unchecked kernel directly.
pub fn fused_step(state: &[f64], input: &[f64], cell: &CellParams, dt: f64) -> Result<Vec<f64>> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::Config(format!(
            "step size dt = {dt} must be finite and > 0"
        )));
    }
    if state.len() != cell.n_state {
        return Err(Error::Config(format!(
            "state has {} entries, cell has {} neurons",
            state.len(),
            cell.n_state
        )));
    }
    if input.len() != cell.input_scale.len() {
        return Err(Error::Config(format!(
            "input has {} features, cell expects {}",
            input.len(),
            cell.input_scale.len()
        )));
    }
    if let Some(v) = state.iter().chain(input).find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "fused step got a non-finite input value {v}"
        )));
    }
    let mut act = vec![0.0; input.len()];
    sensory_activation(cell, input, &mut act);
    let mut sig = vec![0.0; cell.synapses.len()];
    let mut den = vec![0.0; cell.n_state];
    let mut out = vec![0.0; cell.n_state];
    step_full(cell, state, &act, dt, &mut sig, &mut den, &mut out);
    Ok(out)
}

/// Run a window through a materialized cell: `unfolds` fused substeps per
/// input row with dt = 1/unfolds, starting from the all-zero state.
///
/// Returns the state after each row and the blockage probability
/// σ(output_scale·x_motor(final) + output_bias).
pub fn forward_cell(
    window: &ObservationWindow,
    cell: &CellParams,
    unfolds: usize,
) -> Result<(Vec<Vec<f64>>, f64)> {
    if unfolds == 0 {
        return Err(Error::Config("ode_unfolds must be at least 1".into()));
    }
    if window.feature_count() != cell.input_scale.len() {
        return Err(Error::Config(format!(
            "window has {} features per row, cell expects {}",
            window.feature_count(),
            cell.input_scale.len()
        )));
    }
    let dt = 1.0 / unfolds as f64;
    let mut state = vec![0.0; cell.n_state];
    let mut next = vec![0.0; cell.n_state];
    let mut act = vec![0.0; cell.input_scale.len()];
    let mut sig = vec![0.0; cell.synapses.len()];
    let mut den = vec![0.0; cell.n_state];
    let mut trajectory = Vec::with_capacity(window.len());
    for (row_idx, row) in window.rows().iter().enumerate() {
        sensory_activation(cell, row, &mut act);
        for sub in 0..unfolds {
            step_full(cell, &state, &act, dt, &mut sig, &mut den, &mut next);
            std::mem::swap(&mut state, &mut next);
            if let Some(v) = state.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite neuron state {v} at fused step {} (row {row_idx}, substep {sub})",
                    row_idx * unfolds + sub
                )));
            }
        }
        trajectory.push(state.clone());
    }
    let logit = cell.output_scale * state[cell.motor_state] + cell.output_bias;
    Ok((trajectory, sigmoid(logit)))
}

/// [`forward_cell`] over stored (unconstrained) parameters: materializes
/// against the wiring, then evaluates.
pub fn forward_sequence(
    window: &ObservationWindow,
    params: &LtcParameters,
    wiring: &NcpWiring,
    unfolds: usize,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let cell = params.materialize(wiring)?;
    forward_cell(window, &cell, unfolds)
}

/// Threshold a probability at 0.5; ties count as blocked (conservative).
pub fn classify(probability: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&probability) {
        return Err(Error::Config(format!(
            "probability {probability} is outside [0, 1]"
        )));
    }
    Ok(u8::from(probability >= 0.5))
}
