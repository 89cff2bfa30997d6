//! Exact reverse-mode differentiation through the fused solver.
//!
//! The forward pass records, per fused substep, the entering state, every
//! synapse sigmoid, and every neuron denominator. The backward pass walks
//! the tape in reverse and applies the chain rule analytically through the
//! update x' = num/den, the synapse gates, the input affine map, the output
//! sigmoid/cross-entropy head, and finally the softplus reparametrizations
//! down to the unconstrained stored values. No numerical approximation is
//! involved anywhere — agreement with finite differences is the test.

use crate::error::{Error, Result};
use crate::ltc::cell::{sensory_activation, step_full, ObservationWindow};
use crate::ltc::math::{sigmoid, softplus_prime};
use crate::ltc::params::{CellParams, LtcParameters, PreSource};
use crate::wiring::NcpWiring;

/// Probabilities are clamped to [PROB_CLAMP, 1−PROB_CLAMP] inside the loss;
/// outside that band the loss is locally constant and gradients vanish.
pub const PROB_CLAMP: f64 = 1e-12;

/// Binary cross-entropy −[y·ln p + (1−y)·ln(1−p)] on the clamped p.
pub fn loss_bce(probability: f64, label: u8) -> f64 {
    let p = probability.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Forward pass trace: everything backward needs to avoid recomputation.
pub(crate) struct Tape {
    /// Per substep: state entering the step.
    state_in: Vec<Vec<f64>>,
    /// Per substep: sigmoid value of every synapse.
    sig: Vec<Vec<f64>>,
    /// Per substep: denominator of every neuron.
    den: Vec<Vec<f64>>,
    final_state: Vec<f64>,
    /// σ(output_scale·x_motor + output_bias).
    pub probability: f64,
}

/// Run the window forward, recording the tape. Mirrors `forward_cell` (and
/// uses the same kernel), plus bookkeeping.
pub(crate) fn forward_tape(
    window: &ObservationWindow,
    cell: &CellParams,
    unfolds: usize,
) -> Result<Tape> {
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
    let total = window.len() * unfolds;
    let mut tape = Tape {
        state_in: Vec::with_capacity(total),
        sig: Vec::with_capacity(total),
        den: Vec::with_capacity(total),
        final_state: Vec::new(),
        probability: 0.0,
    };
    let mut state = vec![0.0; cell.n_state];
    let mut next = vec![0.0; cell.n_state];
    let mut act = vec![0.0; cell.input_scale.len()];
    for (row_idx, row) in window.rows().iter().enumerate() {
        sensory_activation(cell, row, &mut act);
        for sub in 0..unfolds {
            let mut sig = vec![0.0; cell.synapses.len()];
            let mut den = vec![0.0; cell.n_state];
            step_full(cell, &state, &act, dt, &mut sig, &mut den, &mut next);
            if let Some(v) = next.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite neuron state {v} at fused step {} (row {row_idx}, substep {sub})",
                    row_idx * unfolds + sub
                )));
            }
            tape.state_in.push(state.clone());
            tape.sig.push(sig);
            tape.den.push(den);
            std::mem::swap(&mut state, &mut next);
        }
    }
    tape.probability = sigmoid(cell.output_scale * state[cell.motor_state] + cell.output_bias);
    tape.final_state = state;
    Ok(tape)
}

/// Loss of one (window, label) pair under stored parameters — the scalar
/// function the finite-difference oracle probes.
pub fn loss_for(
    window: &ObservationWindow,
    label: u8,
    params: &LtcParameters,
    wiring: &NcpWiring,
    unfolds: usize,
) -> Result<f64> {
    let cell = params.materialize(wiring)?;
    let tape = forward_tape(window, &cell, unfolds)?;
    Ok(loss_bce(tape.probability, label))
}

/// Everything the optimizer wants from one sample.
#[derive(Debug, Clone)]
pub struct SampleGrad {
    pub loss: f64,
    /// Forward prediction, handy for tracking training accuracy for free.
    pub probability: f64,
    /// Gradient in the canonical flat coordinate order.
    pub grad: Vec<f64>,
}

/// Exact loss and gradient of one sample with respect to every stored
/// (unconstrained) parameter, in the canonical flat order.
pub fn backward(
    window: &ObservationWindow,
    label: u8,
    params: &LtcParameters,
    wiring: &NcpWiring,
    unfolds: usize,
) -> Result<SampleGrad> {
    let cell = params.materialize(wiring)?;
    let tape = forward_tape(window, &cell, unfolds)?;
    let p = tape.probability;
    let loss = loss_bce(p, label);

    let n_state = cell.n_state;
    let n_syn = cell.synapses.len();
    let n_feat = cell.input_scale.len();
    let dt = 1.0 / unfolds as f64;

    // Gradients with respect to the *materialized* quantities.
    let mut g_tau = vec![0.0; n_state];
    let mut g_w = vec![0.0; n_syn];
    let mut g_gamma = vec![0.0; n_syn];
    let mut g_mu = vec![0.0; n_syn];
    let mut g_rev = vec![0.0; n_syn];
    let mut g_isc = vec![0.0; n_feat];
    let mut g_ibi = vec![0.0; n_feat];

    // Head: y = output_scale·x_motor + output_bias, p = σ(y), BCE on the
    // clamped p. Inside the clamp band dL/dy = p − label; outside, the loss
    // is flat in p and everything upstream gets an exact zero.
    let clamped = !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p);
    let dl_dy = if clamped { 0.0 } else { p - f64::from(label) };
    let g_osc = dl_dy * tape.final_state[cell.motor_state];
    let g_obi = dl_dy;

    let mut d_state = vec![0.0; n_state];
    d_state[cell.motor_state] = dl_dy * cell.output_scale;

    let mut act = vec![0.0; n_feat];
    let mut d_act = vec![0.0; n_feat];
    let mut gn = vec![0.0; n_state];
    let mut gd = vec![0.0; n_state];
    for idx in (0..tape.state_in.len()).rev() {
        let row = window.rows()[idx / unfolds].as_slice();
        sensory_activation(&cell, row, &mut act);
        let state_in = &tape.state_in[idx];
        let den = &tape.den[idx];
        let state_out = if idx + 1 < tape.state_in.len() {
            &tape.state_in[idx + 1]
        } else {
            &tape.final_state
        };

        // x_out = num/den ⇒ ∂num = d/den, ∂den = −d·x_out/den.
        for i in 0..n_state {
            gn[i] = d_state[i] / den[i];
            gd[i] = -d_state[i] * state_out[i] / den[i];
        }
        let mut d_in = gn.clone(); // ∂num/∂x_in[i] = 1
        d_act.fill(0.0);
        for i in 0..n_state {
            // den contains dt/τ_i: ∂den/∂τ = −dt/τ².
            g_tau[i] -= gd[i] * dt / (cell.tau[i] * cell.tau[i]);
        }
        for (s, syn) in cell.synapses.iter().enumerate() {
            let i = syn.target;
            let sg = tape.sig[idx][s];
            let pre = match syn.source {
                PreSource::Feature(j) => act[j],
                PreSource::State(k) => state_in[k],
            };
            // num += dt·g·A and den += dt·g with g = w·σ(z).
            let dg = gn[i] * dt * syn.reversal + gd[i] * dt;
            g_rev[s] += gn[i] * dt * syn.weight * sg;
            g_w[s] += dg * sg;
            let dz = dg * syn.weight * sg * (1.0 - sg);
            g_gamma[s] += dz * pre;
            g_mu[s] += dz;
            match syn.source {
                PreSource::Feature(j) => d_act[j] += dz * syn.gamma,
                PreSource::State(k) => d_in[k] += dz * syn.gamma,
            }
        }
        for j in 0..n_feat {
            g_isc[j] += d_act[j] * row[j];
            g_ibi[j] += d_act[j];
        }
        d_state = d_in;
    }

    // Chain through the positive reparametrizations to the stored values.
    let shape = params.shape();
    let mut flat = Vec::with_capacity(shape.count());
    flat.extend(
        g_tau
            .iter()
            .zip(&params.tau_raw)
            .map(|(&g, &u)| g * softplus_prime(u)),
    );
    flat.extend(
        g_w.iter()
            .zip(&params.weight_raw)
            .map(|(&g, &u)| g * softplus_prime(u)),
    );
    flat.extend_from_slice(&g_gamma);
    flat.extend_from_slice(&g_mu);
    flat.extend(
        g_rev
            .iter()
            .zip(&params.reversal_raw)
            .zip(&wiring.synapses)
            .map(|((&g, &u), syn)| g * f64::from(syn.polarity) * softplus_prime(u)),
    );
    flat.extend_from_slice(&g_isc);
    flat.extend_from_slice(&g_ibi);
    flat.push(g_osc);
    flat.push(g_obi);

    if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient for {}",
            shape.label(i)
        )));
    }
    Ok(SampleGrad {
        loss,
        probability: p,
        grad: flat,
    })
}
