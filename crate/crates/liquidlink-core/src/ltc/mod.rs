//! The liquid time-constant recurrent cell.
//!
//! State dynamics follow dx_i/dt = −x_i/τ_i + Σ_j w_ij·σ(γ_ij·pre_j + μ_ij)·(A_ij − x_i),
//! integrated with a fused semi-implicit step that is unconditionally stable
//! and keeps states inside the hull of {0, A_ij} (see [`cell::fused_step`]).
//!
//! Parameters are stored unconstrained and materialized through a softplus
//! map so gradient descent never has to respect positivity explicitly
//! ([`params::LtcParameters::materialize`]).

pub mod cell;
pub mod math;
pub mod params;

pub use cell::{classify, forward_cell, forward_sequence, fused_step, ObservationWindow};
pub use params::{init_parameters, CellParams, LtcParameters, MatSynapse, ParamShape, PreSource};
