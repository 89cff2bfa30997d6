//! Mini-batch training of the recurrent cell on windowed power traces.
//!
//! The loop is deliberately plain: balanced (or plain shuffled) epoch
//! orders, exact per-sample gradients averaged over each mini-batch, a
//! global L2 gradient clip, and Adam updates. Every source of randomness
//! is a seeded counter-based generator, so a (dataset, config, wiring)
//! triple always produces the same checkpoint, byte for byte, regardless
//! of the worker count.

pub mod adam;
pub mod bptt;
pub mod check;

pub use adam::{adam_step, AdamParams, AdamState};
pub use bptt::{backward, loss_bce, loss_for, SampleGrad, PROB_CLAMP};
pub use check::{
    compare_grads, finite_diff_grad, rel_err, run_gradcheck, GradInstance, GradcheckReport,
    DEFAULT_FD_EPS, DEFAULT_GRADCHECK_SEED, GRADCHECK_TOLERANCE,
};

use crate::checkpoint::{feature_names, Checkpoint, ModelConfig, CHECKPOINT_FORMAT_VERSION};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::ltc::cell::classify;
use crate::ltc::params::{init_parameters, LtcParameters};
use crate::parallel::map_ordered;
use crate::wiring::NcpWiring;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub adam: AdamParams,
    /// Prediction horizon the dataset was windowed for.
    pub horizon: usize,
    pub seed: u64,
    /// Resample the majority class each epoch so batches are class-balanced.
    pub balanced_sampling: bool,
    /// Fused solver substeps per observation row.
    pub ode_unfolds: usize,
    /// Global L2 norm ceiling applied to each averaged batch gradient.
    pub clip_norm: f64,
}

impl TrainConfig {
    /// Standard settings for a given horizon and seed.
    pub fn default_for(horizon: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 40,
            learning_rate: 0.02,
            batch_size: 32,
            adam: AdamParams::default(),
            horizon,
            seed,
            balanced_sampling: true,
            ode_unfolds: 6,
            clip_norm: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config(
                "training requires at least one epoch, got epochs = 0".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.ode_unfolds == 0 {
            return Err(Error::Config("ode_unfolds must be at least 1".into()));
        }
        if !self.clip_norm.is_finite() || self.clip_norm <= 0.0 {
            return Err(Error::Config(format!(
                "clip_norm must be positive and finite, got {}",
                self.clip_norm
            )));
        }
        self.adam.validate()
    }
}

/// Per-epoch summary over the samples the epoch actually visited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

/// Render the training history as CSV (`epoch,mean_loss,train_accuracy`).
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,mean_loss,train_accuracy\n");
    for s in history {
        out.push_str(&format!(
            "{},{},{}\n",
            s.epoch, s.mean_loss, s.train_accuracy
        ));
    }
    out
}

/// Alternate minority and freshly subsampled majority samples so that every
/// contiguous mini-batch contains the two classes in counts differing by at
/// most one.
fn balanced_epoch_order(
    rng: &mut ChaCha8Rng,
    positives: &[usize],
    negatives: &[usize],
) -> Vec<usize> {
    let (minority, majority) = if positives.len() <= negatives.len() {
        (positives, negatives)
    } else {
        (negatives, positives)
    };
    let mut minority_order = minority.to_vec();
    minority_order.shuffle(rng);
    let mut majority_order = majority.to_vec();
    majority_order.shuffle(rng);
    majority_order.truncate(minority_order.len());
    minority_order
        .iter()
        .zip(&majority_order)
        .flat_map(|(&a, &b)| [a, b])
        .collect()
}

fn check_dataset(dataset: &[Sample], config: &TrainConfig, wiring: &NcpWiring) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let t_ob = dataset[0].window.len();
    let features = dataset[0].window.feature_count();
    if features != wiring.counts.sensory {
        return Err(Error::Config(format!(
            "dataset has {features} features per timestep but the wiring has {} sensory neurons",
            wiring.counts.sensory
        )));
    }
    for (i, s) in dataset.iter().enumerate() {
        if s.window.len() != t_ob || s.window.feature_count() != features {
            return Err(Error::Config(format!(
                "sample {i} is {}x{}, expected {t_ob}x{features}",
                s.window.len(),
                s.window.feature_count()
            )));
        }
        if s.horizon != config.horizon {
            return Err(Error::Config(format!(
                "sample {i} was windowed for horizon {} but training is configured for horizon {}",
                s.horizon, config.horizon
            )));
        }
    }
    Ok(())
}

/// Train a model from scratch. Returns the final checkpoint and one stats
/// row per epoch.
pub fn train(
    dataset: &[Sample],
    config: &TrainConfig,
    wiring: &NcpWiring,
    workers: usize,
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    config.validate()?;
    check_dataset(dataset, config, wiring)?;

    let positives: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset[i].label == 1)
        .collect();
    let negatives: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset[i].label == 0)
        .collect();
    if config.balanced_sampling {
        if positives.is_empty() {
            return Err(Error::Config(
                "balanced sampling needs both classes, but the dataset contains no blocked (label 1) samples"
                    .into(),
            ));
        }
        if negatives.is_empty() {
            return Err(Error::Config(
                "balanced sampling needs both classes, but the dataset contains no clear (label 0) samples"
                    .into(),
            ));
        }
    }

    let mut params = init_parameters(wiring, config.seed)?;
    let shape = params.shape();
    // The epoch-order stream is separate from the init stream so reordering
    // one never perturbs the other.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut opt = AdamState::zeros(shape.count());
    let mut step: u64 = 0;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let order = if config.balanced_sampling {
            balanced_epoch_order(&mut rng, &positives, &negatives)
        } else {
            let mut all: Vec<usize> = (0..dataset.len()).collect();
            all.shuffle(&mut rng);
            all
        };
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let results = map_ordered(batch, workers, |&idx| {
                let s = &dataset[idx];
                backward(&s.window, s.label, &params, wiring, config.ode_unfolds)
            });
            // Reduce in batch order: the sum is independent of scheduling.
            let mut grad = vec![0.0; shape.count()];
            for (result, &idx) in results.into_iter().zip(batch) {
                let out = result?;
                loss_sum += out.loss;
                if classify(out.probability)? == dataset[idx].label {
                    correct += 1;
                }
                for (g, d) in grad.iter_mut().zip(&out.grad) {
                    *g += d;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grad {
                *g *= inv;
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > config.clip_norm {
                let scale = config.clip_norm / norm;
                for g in &mut grad {
                    *g *= scale;
                }
            }
            step += 1;
            let mut flat = params.flatten();
            adam_step(
                &mut flat,
                &grad,
                &mut opt,
                &config.adam,
                config.learning_rate,
                step,
            )?;
            params = LtcParameters::from_flat(shape, &flat)?;
        }
        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / order.len() as f64,
            train_accuracy: correct as f64 / order.len() as f64,
        });
    }

    let features = dataset[0].window.feature_count();
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        wiring: wiring.clone(),
        parameters: params,
        config: ModelConfig {
            ode_unfolds: config.ode_unfolds,
            t_ob: dataset[0].window.len(),
            horizon: config.horizon,
            features: if features == 2 {
                feature_names()
            } else {
                (0..features).map(|i| format!("f{i}")).collect()
            },
        },
    };
    checkpoint.validate()?;
    Ok((checkpoint, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltc::cell::ObservationWindow;
    use crate::wiring::{build_ncp, FanoutSpec, LayerCounts};
    use std::f64::consts::TAU;

    fn sample_from_power(power: &[f64], label: u8, horizon: usize) -> Sample {
        let rows: Vec<Vec<f64>> = power
            .iter()
            .enumerate()
            .map(|(i, &p)| vec![p, if i == 0 { 0.0 } else { p - power[i - 1] }])
            .collect();
        let t_end = rows.len() - 1;
        Sample {
            window: ObservationWindow::new(rows, t_end).unwrap(),
            horizon,
            label,
            beam_id: 0,
            scenario_id: "toy".to_string(),
        }
    }

    /// Oscillating windows (label 1) vs flat windows (label 0), cleanly
    /// separable by the delta feature.
    fn toy_dataset(per_class: usize) -> Vec<Sample> {
        let t_ob = 8;
        let mut out = Vec::new();
        for k in 0..per_class {
            let phase = k as f64 * 0.37;
            let wavy: Vec<f64> = (0..t_ob)
                .map(|t| 0.6 + 0.25 * (TAU * 0.3 * t as f64 + phase).sin())
                .collect();
            out.push(sample_from_power(&wavy, 1, 1));
            let level = 0.3 + 0.4 * (k as f64 / per_class as f64);
            out.push(sample_from_power(&vec![level; t_ob], 0, 1));
        }
        out
    }

    fn toy_wiring() -> NcpWiring {
        build_ncp(LayerCounts::default(), FanoutSpec::default(), 7).unwrap()
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let dataset = toy_dataset(24);
        let mut config = TrainConfig::default_for(1, 42);
        config.batch_size = 8;
        let (ckpt, history) = train(&dataset, &config, &toy_wiring(), 1).unwrap();
        assert_eq!(history.len(), 40);
        let first = &history[0];
        let last = &history[39];
        assert!(
            last.train_accuracy >= 0.99,
            "final accuracy {} too low",
            last.train_accuracy
        );
        assert!(
            last.mean_loss < 0.5 * first.mean_loss,
            "loss should at least halve: {} → {}",
            first.mean_loss,
            last.mean_loss
        );
        assert_eq!(ckpt.config.horizon, 1);
        assert_eq!(ckpt.config.t_ob, 8);
        assert_eq!(ckpt.config.features, vec!["power", "power_delta"]);
        ckpt.validate().unwrap();
    }

    #[test]
    fn same_seed_gives_byte_identical_checkpoints() {
        let dataset = toy_dataset(6);
        let mut config = TrainConfig::default_for(1, 5);
        config.epochs = 4;
        config.batch_size = 4;
        let wiring = toy_wiring();
        let (a, ha) = train(&dataset, &config, &wiring, 1).unwrap();
        let (b, hb) = train(&dataset, &config, &wiring, 1).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(ha, hb);

        config.seed = 6;
        let (c, _) = train(&dataset, &config, &wiring, 1).unwrap();
        assert_ne!(
            a.to_json().unwrap(),
            c.to_json().unwrap(),
            "a different seed must change the outcome"
        );
    }

    #[test]
    fn worker_count_does_not_change_the_result() {
        let dataset = toy_dataset(8);
        let mut config = TrainConfig::default_for(1, 3);
        config.epochs = 3;
        config.batch_size = 5; // odd size so chunks split unevenly
        let wiring = toy_wiring();
        let (serial, hs) = train(&dataset, &config, &wiring, 1).unwrap();
        let (threaded, ht) = train(&dataset, &config, &wiring, 4).unwrap();
        assert_eq!(serial.to_json().unwrap(), threaded.to_json().unwrap());
        assert_eq!(hs, ht);
    }

    #[test]
    fn balanced_batches_differ_by_at_most_one_sample_per_class() {
        let labels: Vec<u8> = (0..60).map(|i| u8::from(i % 11 == 0)).collect();
        let positives: Vec<usize> = (0..60).filter(|&i| labels[i] == 1).collect();
        let negatives: Vec<usize> = (0..60).filter(|&i| labels[i] == 0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for round in 0..20 {
            let order = balanced_epoch_order(&mut rng, &positives, &negatives);
            assert_eq!(order.len(), 2 * positives.len());
            for batch_size in [2usize, 3, 4, 32] {
                for batch in order.chunks(batch_size) {
                    let pos = batch.iter().filter(|&&i| labels[i] == 1).count();
                    let neg = batch.len() - pos;
                    assert!(
                        pos.abs_diff(neg) <= 1,
                        "round {round}, batch size {batch_size}: {pos} vs {neg}"
                    );
                }
            }
        }
    }

    #[test]
    fn balanced_epochs_resample_the_majority_class() {
        let dataset = toy_dataset(30);
        let positives: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset[i].label == 1)
            .take(5)
            .collect();
        let negatives: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset[i].label == 0)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let picks = |order: &[usize]| -> Vec<usize> {
            let mut majority: Vec<usize> = order
                .iter()
                .copied()
                .filter(|i| negatives.contains(i))
                .collect();
            majority.sort_unstable();
            majority
        };
        let first = picks(&balanced_epoch_order(&mut rng, &positives, &negatives));
        let second = picks(&balanced_epoch_order(&mut rng, &positives, &negatives));
        assert_eq!(first.len(), 5);
        assert_ne!(first, second, "majority subsample should vary per epoch");
    }

    #[test]
    fn zero_epochs_is_rejected() {
        let mut config = TrainConfig::default_for(1, 0);
        config.epochs = 0;
        let err = train(&toy_dataset(2), &config, &toy_wiring(), 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("epoch"));
    }

    #[test]
    fn single_class_dataset_with_balancing_names_the_missing_class() {
        let dataset: Vec<Sample> = toy_dataset(4)
            .into_iter()
            .filter(|s| s.label == 0)
            .collect();
        let config = TrainConfig::default_for(1, 0);
        let err = train(&dataset, &config, &toy_wiring(), 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(
            err.to_string().contains("label 1"),
            "error should name the missing class: {err}"
        );

        let mut unbalanced = TrainConfig::default_for(1, 0);
        unbalanced.balanced_sampling = false;
        unbalanced.epochs = 1;
        train(&dataset, &unbalanced, &toy_wiring(), 1)
            .expect("plain sampling accepts a single-class dataset");
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let mut dataset = toy_dataset(2);
        dataset[1].horizon = 5;
        let config = TrainConfig::default_for(1, 0);
        let err = train(&dataset, &config, &toy_wiring(), 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("horizon"));
    }

    #[test]
    fn history_csv_layout_is_stable() {
        let history = vec![
            EpochStats {
                epoch: 1,
                mean_loss: std::f64::consts::LN_2,
                train_accuracy: 0.5,
            },
            EpochStats {
                epoch: 2,
                mean_loss: 0.25,
                train_accuracy: 0.96875,
            },
        ];
        let csv = history_csv(&history);
        assert_eq!(
            csv,
            "epoch,mean_loss,train_accuracy\n1,0.6931471805599453,0.5\n2,0.25,0.96875\n"
        );
    }
}
