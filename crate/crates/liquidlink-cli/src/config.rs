//! Configuration resolution and run manifests.
//!
//! Every run is described by a [`RunConfig`]: the merge of built-in
//! defaults, an optional JSON config file, and command-line flag overrides,
//! in increasing precedence. Each command echoes its resolved configuration
//! into a manifest file alongside its outputs, together with the seeds it
//! used and a SHA-256 digest of every artifact it wrote. A manifest is
//! itself accepted wherever a config file is, so any past run can be
//! reproduced exactly from the files it left behind.
//!
//! The output directory and worker count are deliberately *not* part of
//! [`RunConfig`]: they are execution details that may differ between two
//! runs of the same experiment, and results are independent of both.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use liquidlink_core::error::{Error, Result};
use liquidlink_core::eval::DEFAULT_WEAK_BEAM_THRESHOLD;
use liquidlink_core::sim::{default_indoor_profile, default_outdoor_profiles, ScenarioProfile};
use liquidlink_core::train::{AdamParams, TrainConfig, DEFAULT_FD_EPS, DEFAULT_GRADCHECK_SEED};
use liquidlink_core::wiring::{FanoutSpec, LayerCounts};

/// Base seed used when neither the config file nor `--seed` provides one.
pub const DEFAULT_SEED: u64 = 7;

/// Offset separating the training seed from the wiring seed, so the two
/// random streams never coincide even though they share a base.
const TRAIN_SEED_OFFSET: u64 = 100;

pub const MANIFEST_VERSION: u32 = 1;

/// Optional overrides as they appear in a JSON config file. Unknown keys
/// are rejected so a typo fails loudly instead of silently falling back to
/// a default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub t_ob: Option<usize>,
    pub horizons: Option<Vec<usize>>,
    pub weak_beam_threshold: Option<f64>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub ode_unfolds: Option<usize>,
    pub clip_norm: Option<f64>,
    pub balanced_sampling: Option<bool>,
    pub layer_counts: Option<LayerCounts>,
    pub fanout: Option<FanoutSpec>,
    pub indoor: Option<ScenarioProfile>,
    pub outdoor: Option<Vec<ScenarioProfile>>,
    pub gradcheck_instances: Option<usize>,
    pub gradcheck_eps: Option<f64>,
    pub gradcheck_seed: Option<u64>,
}

/// Flag-level overrides; strongest precedence.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub t_ob: Option<usize>,
    pub horizons: Option<Vec<usize>>,
    pub threshold: Option<f64>,
    pub gradcheck_instances: Option<usize>,
    pub gradcheck_eps: Option<f64>,
}

/// The fully resolved experiment description. Serialized field order is the
/// declaration order below; reruns of the same experiment produce
/// byte-identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Observation-window length in samples.
    pub t_ob: usize,
    /// Prediction horizons; one model is trained and evaluated per entry.
    pub horizons: Vec<usize>,
    /// Beams whose mean unblocked normalized power falls below this are
    /// excluded from evaluation (training always uses every beam).
    pub weak_beam_threshold: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub ode_unfolds: usize,
    pub clip_norm: f64,
    pub balanced_sampling: bool,
    pub layer_counts: LayerCounts,
    pub fanout: FanoutSpec,
    /// Training scenario (controlled blocker).
    pub indoor: ScenarioProfile,
    /// Held-out test scenarios (uncontrolled blockers).
    pub outdoor: Vec<ScenarioProfile>,
    pub gradcheck_instances: usize,
    pub gradcheck_eps: f64,
    pub gradcheck_seed: u64,
}

impl RunConfig {
    pub fn wiring_seed(&self) -> u64 {
        self.seed
    }

    pub fn train_seed(&self) -> u64 {
        self.seed.wrapping_add(TRAIN_SEED_OFFSET)
    }

    /// Trainer settings for one prediction horizon.
    pub fn train_config(&self, horizon: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            adam: AdamParams::default(),
            horizon,
            seed: self.train_seed(),
            balanced_sampling: self.balanced_sampling,
            ode_unfolds: self.ode_unfolds,
            clip_norm: self.clip_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_ob < 2 {
            return Err(Error::Config(format!(
                "observation window length {} must be at least 2",
                self.t_ob
            )));
        }
        if self.horizons.is_empty() {
            return Err(Error::Config("at least one horizon is required".into()));
        }
        for (i, &k) in self.horizons.iter().enumerate() {
            if k == 0 {
                return Err(Error::Config("horizon 0 is not predictable".into()));
            }
            if self.horizons[..i].contains(&k) {
                return Err(Error::Config(format!(
                    "horizon {k} appears twice; each horizon trains one model"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.weak_beam_threshold) {
            return Err(Error::Config(format!(
                "weak-beam threshold {} must lie in [0, 1]",
                self.weak_beam_threshold
            )));
        }
        if !(self.gradcheck_eps.is_finite() && self.gradcheck_eps > 0.0) {
            return Err(Error::Config(format!(
                "finite-difference step {} must be positive",
                self.gradcheck_eps
            )));
        }
        if self.gradcheck_instances == 0 {
            return Err(Error::Config(
                "gradient check needs at least one instance".into(),
            ));
        }
        // Trainer knobs share the trainer's own validation.
        self.train_config(self.horizons[0]).validate()?;

        // Scenario names become file names; collisions would overwrite.
        let mut names = vec![self.indoor.name.as_str()];
        for profile in &self.outdoor {
            if names.contains(&profile.name.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate scenario name '{}'",
                    profile.name
                )));
            }
            names.push(profile.name.as_str());
        }
        // Every trace must fit at least one window per horizon.
        let max_horizon = *self.horizons.iter().max().expect("non-empty");
        for profile in std::iter::once(&self.indoor).chain(&self.outdoor) {
            profile.validate(self.t_ob + max_horizon)?;
        }
        Ok(())
    }
}

/// A manifest's distinguishing key; its presence tells a config loader the
/// file is a manifest rather than a plain config.
const MANIFEST_KEY: &str = "resolved_config";

impl From<RunConfig> for FileConfig {
    fn from(rc: RunConfig) -> FileConfig {
        FileConfig {
            seed: Some(rc.seed),
            t_ob: Some(rc.t_ob),
            horizons: Some(rc.horizons),
            weak_beam_threshold: Some(rc.weak_beam_threshold),
            epochs: Some(rc.epochs),
            learning_rate: Some(rc.learning_rate),
            batch_size: Some(rc.batch_size),
            ode_unfolds: Some(rc.ode_unfolds),
            clip_norm: Some(rc.clip_norm),
            balanced_sampling: Some(rc.balanced_sampling),
            layer_counts: Some(rc.layer_counts),
            fanout: Some(rc.fanout),
            indoor: Some(rc.indoor),
            outdoor: Some(rc.outdoor),
            gradcheck_instances: Some(rc.gradcheck_instances),
            gradcheck_eps: Some(rc.gradcheck_eps),
            gradcheck_seed: Some(rc.gradcheck_seed),
        }
    }
}

/// Read a config file, accepting either a plain [`FileConfig`] or a run
/// manifest written by an earlier command.
pub fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: not valid JSON: {e}", path.display())))?;
    if value.get(MANIFEST_KEY).is_some() {
        let manifest: RunManifest = serde_json::from_value(value).map_err(|e| {
            Error::Config(format!("{}: malformed run manifest: {e}", path.display()))
        })?;
        Ok(FileConfig::from(manifest.resolved_config))
    } else {
        serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Merge defaults, file values, and flags (flags win) into a validated
/// [`RunConfig`]. Default scenario profiles derive their seeds from the
/// resolved base seed; profiles given explicitly in the file are kept
/// as-is, seeds included.
pub fn resolve(file: FileConfig, flags: &CliOverrides) -> Result<RunConfig> {
    let seed = flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let config = RunConfig {
        seed,
        t_ob: flags.t_ob.or(file.t_ob).unwrap_or(32),
        horizons: flags
            .horizons
            .clone()
            .or(file.horizons)
            .unwrap_or_else(|| vec![1, 5, 10]),
        weak_beam_threshold: flags
            .threshold
            .or(file.weak_beam_threshold)
            .unwrap_or(DEFAULT_WEAK_BEAM_THRESHOLD),
        epochs: file.epochs.unwrap_or(40),
        learning_rate: file.learning_rate.unwrap_or(0.02),
        batch_size: file.batch_size.unwrap_or(32),
        ode_unfolds: file.ode_unfolds.unwrap_or(6),
        clip_norm: file.clip_norm.unwrap_or(10.0),
        balanced_sampling: file.balanced_sampling.unwrap_or(true),
        layer_counts: file.layer_counts.unwrap_or_default(),
        // The CLI default wires every sensory unit to every inter unit
        // (sensory_fanout = inter count). With only four inter units a sparse
        // sensory stage throws away most beams before the recurrent core sees
        // them, which measurably hurts transfer to the uncontrolled test
        // scenarios. The library's own `FanoutSpec::default()` stays sparser
        // on purpose — structural tests key off it.
        fanout: file.fanout.unwrap_or(FanoutSpec {
            sensory_fanout: 4,
            inter_fanout: 2,
            recurrent_command_synapses: 2,
            motor_fanin: 2,
        }),
        indoor: file.indoor.unwrap_or_else(|| default_indoor_profile(seed)),
        outdoor: file
            .outdoor
            .unwrap_or_else(|| default_outdoor_profiles(seed)),
        gradcheck_instances: flags
            .gradcheck_instances
            .or(file.gradcheck_instances)
            .unwrap_or(24),
        gradcheck_eps: flags
            .gradcheck_eps
            .or(file.gradcheck_eps)
            .unwrap_or(DEFAULT_FD_EPS),
        gradcheck_seed: file.gradcheck_seed.unwrap_or(DEFAULT_GRADCHECK_SEED),
    };
    config.validate()?;
    Ok(config)
}

/// One output file and the digest of its bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

/// Seeds derived from the base seed, recorded for the archaeologist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub base: u64,
    pub wiring: u64,
    pub training: u64,
}

/// Everything needed to describe — and re-run — one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    pub resolved_config: RunConfig,
    pub seeds: SeedPlan,
    pub artifacts: Vec<ArtifactRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Write `manifest_<command>.json` into `out_dir`, digesting the given
/// artifact files. Paths are stored relative to `out_dir`, sorted, so the
/// manifest bytes are a pure function of the run's outputs.
pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    config: &RunConfig,
    artifact_files: &[std::path::PathBuf],
) -> Result<std::path::PathBuf> {
    let mut artifacts = Vec::with_capacity(artifact_files.len());
    for file in artifact_files {
        let rel = file
            .strip_prefix(out_dir)
            .map_err(|_| {
                Error::Config(format!(
                    "artifact {} lies outside the output directory {}",
                    file.display(),
                    out_dir.display()
                ))
            })?
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        artifacts.push(ArtifactRecord {
            path: rel,
            sha256: sha256_file(file)?,
        });
    }
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        command: command.to_string(),
        resolved_config: config.clone(),
        seeds: SeedPlan {
            base: config.seed,
            wiring: config.wiring_seed(),
            training: config.train_seed(),
        },
        artifacts,
    };
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    json.push('\n');
    let path = out_dir.join(format!("manifest_{command}.json"));
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, &json).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_the_standard_protocol() {
        let config = resolve(FileConfig::default(), &CliOverrides::default()).unwrap();
        assert_eq!(config.seed, DEFAULT_SEED);
        assert_eq!(config.t_ob, 32);
        assert_eq!(config.horizons, vec![1, 5, 10]);
        assert_eq!(config.epochs, 40);
        assert_eq!(config.learning_rate, 0.02);
        assert_eq!(config.batch_size, 32);
        assert_eq!(config.weak_beam_threshold, DEFAULT_WEAK_BEAM_THRESHOLD);
        assert_eq!(config.outdoor.len(), 6);
        assert_eq!(config.indoor.name, "indoor");
        assert_eq!(config.layer_counts, LayerCounts::default());
        config.validate().unwrap();
    }

    #[test]
    fn flags_beat_file_values_beat_defaults() {
        let file = FileConfig {
            seed: Some(11),
            t_ob: Some(24),
            horizons: Some(vec![2, 4]),
            epochs: Some(5),
            ..FileConfig::default()
        };
        let flags = CliOverrides {
            seed: Some(99),
            horizons: Some(vec![3]),
            ..CliOverrides::default()
        };
        let config = resolve(file, &flags).unwrap();
        assert_eq!(config.seed, 99, "flag beats file");
        assert_eq!(config.horizons, vec![3]);
        assert_eq!(config.t_ob, 24, "file beats default");
        assert_eq!(config.epochs, 5);
        assert_eq!(config.batch_size, 32, "default fills the rest");
        assert_eq!(
            config.indoor.seed,
            default_indoor_profile(99).seed,
            "derived profiles follow the resolved seed"
        );
    }

    #[test]
    fn explicit_profiles_survive_a_seed_override() {
        let mut indoor = default_indoor_profile(5);
        indoor.n_beams = 3;
        indoor.trace_length = 200;
        let file = FileConfig {
            indoor: Some(indoor.clone()),
            ..FileConfig::default()
        };
        let flags = CliOverrides {
            seed: Some(77),
            ..CliOverrides::default()
        };
        let config = resolve(file, &flags).unwrap();
        assert_eq!(config.indoor, indoor, "pinned profile is kept verbatim");
        assert_eq!(config.outdoor[0].seed, default_outdoor_profiles(77)[0].seed);
    }

    #[test]
    fn bad_combinations_are_rejected() {
        let reject = |mutate: fn(&mut RunConfig)| {
            let mut config = resolve(FileConfig::default(), &CliOverrides::default()).unwrap();
            mutate(&mut config);
            config.validate().unwrap_err()
        };
        assert!(matches!(reject(|c| c.horizons.clear()), Error::Config(_)));
        assert!(matches!(
            reject(|c| c.horizons = vec![1, 1]),
            Error::Config(_)
        ));
        assert!(matches!(reject(|c| c.horizons = vec![0]), Error::Config(_)));
        assert!(matches!(reject(|c| c.t_ob = 1), Error::Config(_)));
        assert!(matches!(
            reject(|c| c.weak_beam_threshold = 1.5),
            Error::Config(_)
        ));
        assert!(matches!(reject(|c| c.epochs = 0), Error::Config(_)));
        assert!(matches!(
            reject(|c| c.outdoor[0].name = "indoor".into()),
            Error::Config(_)
        ));
        // A trace too short for one window at the largest horizon.
        assert!(matches!(
            reject(|c| c.indoor.trace_length = 42),
            Error::Config(_)
        ));
    }

    #[test]
    fn unknown_config_keys_fail_loudly() {
        let err = serde_json::from_str::<FileConfig>(r#"{"learning_rte": 0.02}"#).unwrap_err();
        assert!(err.to_string().contains("learning_rte"));
    }

    #[test]
    fn manifest_round_trips_through_file_config() {
        let config = resolve(FileConfig::default(), &CliOverrides::default()).unwrap();
        let back = resolve(FileConfig::from(config.clone()), &CliOverrides::default()).unwrap();
        assert_eq!(config, back, "a manifest reproduces its own config");
    }

    #[test]
    fn load_detects_manifests_and_plain_configs() {
        let dir = tempfile::tempdir().unwrap();
        let config = resolve(FileConfig::default(), &CliOverrides::default()).unwrap();

        let plain = dir.path().join("config.json");
        fs::write(&plain, r#"{"seed": 3, "epochs": 2}"#).unwrap();
        let file = load_file_config(&plain).unwrap();
        assert_eq!(file.seed, Some(3));
        assert_eq!(file.epochs, Some(2));
        assert_eq!(file.t_ob, None);

        let manifest_path = write_manifest(dir.path(), "simulate", &config, &[]).unwrap();
        assert_eq!(manifest_path.file_name().unwrap(), "manifest_simulate.json");
        let from_manifest = load_file_config(&manifest_path).unwrap();
        assert_eq!(from_manifest.seed, Some(config.seed));
        assert_eq!(from_manifest.indoor, Some(config.indoor.clone()));

        let missing = load_file_config(&dir.path().join("absent.json")).unwrap_err();
        assert!(matches!(missing, Error::Io { .. }));

        fs::write(&plain, "{not json").unwrap();
        assert!(matches!(load_file_config(&plain), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_records_sorted_relative_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("scenarios");
        fs::create_dir_all(&sub).unwrap();
        let b = sub.join("b.csv");
        let a = sub.join("a.csv");
        fs::write(&b, "beta").unwrap();
        fs::write(&a, "alpha").unwrap();
        let config = resolve(FileConfig::default(), &CliOverrides::default()).unwrap();
        let path = write_manifest(dir.path(), "simulate", &config, &[b, a]).unwrap();
        let manifest: RunManifest =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(manifest.manifest_version, MANIFEST_VERSION);
        assert_eq!(manifest.command, "simulate");
        assert_eq!(manifest.seeds.base, config.seed);
        assert_eq!(manifest.seeds.training, config.seed + 100);
        let paths: Vec<&str> = manifest.artifacts.iter().map(|a| a.path.as_str()).collect();
        assert_eq!(paths, vec!["scenarios/a.csv", "scenarios/b.csv"]);
        // Digest spot check: sha256("alpha").
        assert_eq!(
            manifest.artifacts[0].sha256,
            "8ed3f6ad685b959ead7022518e1af76cd816f8e8ec7ccdda1ed4018e8f2223f8"
        );
    }

    #[test]
    fn manifest_bytes_are_stable_across_writes() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("x.txt");
        fs::write(&file, "payload").unwrap();
        let config = resolve(FileConfig::default(), &CliOverrides::default()).unwrap();
        let p1 = write_manifest(dir.path(), "train", &config, std::slice::from_ref(&file)).unwrap();
        let first = fs::read(&p1).unwrap();
        let p2 = write_manifest(dir.path(), "train", &config, &[file]).unwrap();
        assert_eq!(first, fs::read(&p2).unwrap());
    }
}
