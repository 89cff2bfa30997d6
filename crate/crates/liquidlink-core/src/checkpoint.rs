//! Serializable model snapshots.
//!
//! A checkpoint bundles everything needed to reproduce predictions exactly:
//! the wiring graph, the stored (unconstrained) parameters, and the framing
//! configuration the model was trained under. Serialization is canonical —
//! struct fields in declaration order, shortest round-trip float text — so
//! identical models produce byte-identical files.

use crate::error::{Error, Result};
use crate::ltc::cell::{forward_sequence, ObservationWindow};
use crate::ltc::params::LtcParameters;
use crate::wiring::{validate_wiring, NcpWiring};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Current on-disk format revision.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Names of the per-timestep input features, in column order.
pub fn feature_names() -> Vec<String> {
    vec!["power".to_string(), "power_delta".to_string()]
}

/// Framing and solver settings a model was trained with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Fused solver substeps per observation row.
    pub ode_unfolds: usize,
    /// Observation window length in samples.
    pub t_ob: usize,
    /// Prediction horizon: the label lives this many samples past the window.
    pub horizon: usize,
    /// Input feature names, one per sensory neuron.
    pub features: Vec<String>,
}

/// A complete trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub wiring: NcpWiring,
    pub parameters: LtcParameters,
    pub config: ModelConfig,
}

impl Checkpoint {
    /// Structural sanity: version, wiring validity, and parameter shapes.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let report = validate_wiring(&self.wiring);
        if !report.is_ok() {
            return Err(Error::InvalidWiring {
                violations: report.violations,
            });
        }
        let shape = self.parameters.shape();
        let expected = crate::ltc::params::ParamShape::of(&self.wiring);
        if shape != expected {
            return Err(Error::Config(format!(
                "checkpoint parameters do not fit the wiring: {shape:?} vs {expected:?}"
            )));
        }
        if self.config.ode_unfolds == 0 || self.config.t_ob < 2 || self.config.horizon == 0 {
            return Err(Error::Config(
                "checkpoint config must have ode_unfolds ≥ 1, t_ob ≥ 2, horizon ≥ 1".into(),
            ));
        }
        if self.config.features.len() != self.wiring.counts.sensory {
            return Err(Error::Config(format!(
                "checkpoint lists {} features but the wiring has {} sensory neurons",
                self.config.features.len(),
                self.wiring.counts.sensory
            )));
        }
        Ok(())
    }

    /// Blockage probability for one observation window.
    pub fn predict(&self, window: &ObservationWindow) -> Result<f64> {
        let (_, p) = forward_sequence(
            window,
            &self.parameters,
            &self.wiring,
            self.config.ode_unfolds,
        )?;
        Ok(p)
    }

    /// Canonical pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("checkpoint serialization failed: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        let ckpt: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("malformed checkpoint JSON: {e}")))?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    /// Write atomically (temp file + rename) so readers never see a torn file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
