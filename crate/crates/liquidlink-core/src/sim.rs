//! Synthetic directional-link simulator.
//!
//! Each scenario draws a set of non-overlapping blockage events (Poisson
//! count, rejection placement) shared by all beams, then synthesizes one
//! power trace per beam: a per-beam baseline (strong or weak), a deep
//! multiplicative fade during each event, a damped sinusoidal ripple in the
//! samples leading up to each onset (the learnable pre-blockage signature),
//! and additive Gaussian noise, all clamped to [0, 1].
//!
//! Determinism: events come from stream 0 of the profile's seed, beam b's
//! baseline and noise from stream b+1, so every (profile, seed, beam) triple
//! regenerates byte-identically and beams are independent of one another.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{save_scenario, PowerTrace};
use crate::error::{Error, Result};

/// Inclusive [min, max] range for a per-event randomized quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span<T> {
    pub min: T,
    pub max: T,
}

impl<T: Copy + PartialOrd> Span<T> {
    pub fn fixed(value: T) -> Span<T> {
        Span {
            min: value,
            max: value,
        }
    }

    fn is_ordered(&self) -> bool {
        self.min <= self.max
    }
}

/// Shape of the pre-blockage power ripple.
///
/// `lead_time` and `ripple_frequency` are ranges: a controlled profile pins
/// them (min = max), an uncontrolled one redraws both per event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureSpec {
    /// Samples before onset that carry the ripple.
    pub lead_time: Span<usize>,
    /// Peak relative power modulation (multiplicative).
    pub ripple_amplitude: f64,
    /// Oscillation frequency in cycles per sample.
    pub ripple_frequency: Span<f64>,
    /// Envelope decay rate away from the onset (0 = constant amplitude).
    pub decay: f64,
}

/// Everything needed to synthesize one scenario deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProfile {
    pub name: String,
    pub n_beams: usize,
    pub trace_length: usize,
    /// Fraction of beams drawn as strong (baseline in [0.5, 1.0]); the rest
    /// are weak (baseline in [0.05, 0.35]).
    pub strong_beam_fraction: f64,
    /// Std of the additive Gaussian noise, in normalized power units.
    pub noise_std: f64,
    /// Expected blockage events per 1000 samples.
    pub blockage_rate: f64,
    /// Event length range in samples.
    pub blockage_duration: Span<usize>,
    /// Power multiplier during an event, near 0.
    pub blockage_depth: f64,
    pub signature: SignatureSpec,
    pub seed: u64,
}

/// One placed blockage event with its (possibly per-event random) signature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockageEvent {
    pub onset: usize,
    pub duration: usize,
    pub depth: f64,
    pub lead_time: usize,
    pub ripple_frequency: f64,
}

impl ScenarioProfile {
    /// Check internal consistency. `min_trace_len` lets the caller enforce
    /// the cross-module requirement trace_length > T_ob + max horizon.
    pub fn validate(&self, min_trace_len: usize) -> Result<()> {
        let mut problems = Vec::new();
        if self.name.is_empty() {
            problems.push("profile name is empty".to_string());
        }
        if self.n_beams == 0 {
            problems.push("n_beams must be at least 1".to_string());
        }
        if self.trace_length <= min_trace_len {
            problems.push(format!(
                "trace_length {} must exceed {min_trace_len} (observation window + horizon)",
                self.trace_length
            ));
        }
        if !(self.strong_beam_fraction > 0.0 && self.strong_beam_fraction <= 1.0) {
            problems.push(format!(
                "strong_beam_fraction {} must be in (0, 1]",
                self.strong_beam_fraction
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            problems.push(format!(
                "noise_std {} must be finite and ≥ 0",
                self.noise_std
            ));
        }
        if !(self.blockage_rate >= 0.0 && self.blockage_rate.is_finite()) {
            problems.push(format!(
                "blockage_rate {} must be finite and ≥ 0",
                self.blockage_rate
            ));
        }
        if self.blockage_duration.min == 0 || !self.blockage_duration.is_ordered() {
            problems.push(format!(
                "blockage_duration [{}, {}] must satisfy 1 ≤ min ≤ max",
                self.blockage_duration.min, self.blockage_duration.max
            ));
        }
        if !(0.0..1.0).contains(&self.blockage_depth) {
            problems.push(format!(
                "blockage_depth {} must be in [0, 1)",
                self.blockage_depth
            ));
        }
        let sig = &self.signature;
        if sig.lead_time.min == 0 || !sig.lead_time.is_ordered() {
            problems.push(format!(
                "signature lead_time [{}, {}] must satisfy 1 ≤ min ≤ max",
                sig.lead_time.min, sig.lead_time.max
            ));
        }
        if !(0.0..1.0).contains(&sig.ripple_amplitude) {
            problems.push(format!(
                "ripple_amplitude {} must be in [0, 1) to keep power in range",
                sig.ripple_amplitude
            ));
        }
        if !sig.ripple_frequency.is_ordered() || sig.ripple_frequency.min <= 0.0 {
            problems.push(format!(
                "ripple_frequency [{}, {}] must satisfy 0 < min ≤ max",
                sig.ripple_frequency.min, sig.ripple_frequency.max
            ));
        }
        if !(sig.decay >= 0.0 && sig.decay.is_finite()) {
            problems.push(format!("decay {} must be finite and ≥ 0", sig.decay));
        }
        if self.blockage_rate > 0.0
            && sig.lead_time.max + self.blockage_duration.max + 1 >= self.trace_length
        {
            problems.push(format!(
                "trace_length {} cannot fit one event (lead {} + duration {})",
                self.trace_length, sig.lead_time.max, self.blockage_duration.max
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "profile `{}`: {}",
                self.name,
                problems.join("; ")
            )))
        }
    }

    fn events_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(0);
        rng
    }

    fn beam_rng(&self, beam_id: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(beam_id as u64 + 1);
        rng
    }
}

fn draw_span_usize(rng: &mut ChaCha8Rng, span: Span<usize>) -> usize {
    rng.random_range(span.min..=span.max)
}

fn draw_span_f64(rng: &mut ChaCha8Rng, span: Span<f64>) -> f64 {
    if span.min == span.max {
        span.min
    } else {
        rng.random_range(span.min..span.max)
    }
}

/// Draw the scenario's blockage events: Poisson count at `blockage_rate` per
/// 1000 samples, uniform durations/signatures, rejection placement keeping
/// events (including their lead windows) disjoint. Sorted by onset.
pub fn generate_events(profile: &ScenarioProfile) -> Result<Vec<BlockageEvent>> {
    profile.validate(0)?;
    let len = profile.trace_length;
    let mut rng = profile.events_rng();
    let expected = profile.blockage_rate * len as f64 / 1000.0;
    let count = if expected > 0.0 {
        let poisson = Poisson::new(expected)
            .map_err(|e| Error::Generation(format!("invalid event rate {expected}: {e}")))?;
        poisson.sample(&mut rng) as usize
    } else {
        0
    };

    let mut events: Vec<BlockageEvent> = Vec::with_capacity(count);
    for k in 0..count {
        let duration = draw_span_usize(&mut rng, profile.blockage_duration);
        let lead_time = draw_span_usize(&mut rng, profile.signature.lead_time);
        let ripple_frequency = draw_span_f64(&mut rng, profile.signature.ripple_frequency);
        if lead_time + duration + 1 >= len {
            return Err(Error::Generation(format!(
                "event of duration {duration} with lead {lead_time} cannot fit in {len} samples"
            )));
        }
        const ATTEMPTS: usize = 200;
        let mut placed = false;
        for _ in 0..ATTEMPTS {
            let onset = rng.random_range(lead_time..len - duration);
            // Keep the event plus its lead window clear of every other
            // event's span, with one sample of slack.
            let lo = onset - lead_time;
            let hi = onset + duration + 1;
            let clashes = events.iter().any(|e| {
                let e_lo = e.onset - e.lead_time;
                let e_hi = e.onset + e.duration + 1;
                lo < e_hi && e_lo < hi
            });
            if !clashes {
                events.push(BlockageEvent {
                    onset,
                    duration,
                    depth: profile.blockage_depth,
                    lead_time,
                    ripple_frequency,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place event {} of {count} after {ATTEMPTS} attempts \
                 (trace length {len} is too crowded)",
                k + 1
            )));
        }
    }
    events.sort_by_key(|e| e.onset);
    Ok(events)
}

/// Synthesize one beam's trace over a fixed event list.
pub fn synthesize_beam(
    profile: &ScenarioProfile,
    events: &[BlockageEvent],
    beam_id: usize,
) -> Result<PowerTrace> {
    if beam_id >= profile.n_beams {
        return Err(Error::Config(format!(
            "beam {beam_id} out of range for {} beams",
            profile.n_beams
        )));
    }
    let len = profile.trace_length;
    let mut rng = profile.beam_rng(beam_id);
    let strong = rng.random_bool(profile.strong_beam_fraction);
    let baseline = if strong {
        rng.random_range(0.5..1.0)
    } else {
        rng.random_range(0.05..0.35)
    };
    let noise = if profile.noise_std > 0.0 {
        Some(
            Normal::new(0.0, profile.noise_std)
                .map_err(|e| Error::Generation(format!("invalid noise model: {e}"))),
        )
        .transpose()?
    } else {
        None
    };

    // Multiplicative channel state: 1 in the clear, `depth` inside an event,
    // a damped sinusoid whose envelope grows toward the onset in the lead
    // window (diffraction-style ripple as the blocker approaches).
    let mut multiplier = vec![1.0; len];
    let mut labels = vec![0u8; len];
    for e in events {
        for t in e.onset..e.onset + e.duration {
            multiplier[t] = e.depth;
            labels[t] = 1;
        }
        let amp = profile.signature.ripple_amplitude;
        let decay = profile.signature.decay;
        for s in 0..e.lead_time {
            let t = e.onset - e.lead_time + s;
            let distance_to_onset = (e.lead_time - 1 - s) as f64 / e.lead_time as f64;
            let envelope = (-decay * distance_to_onset).exp();
            multiplier[t] = 1.0 + amp * envelope * (TAU * e.ripple_frequency * s as f64).sin();
        }
    }

    let power = multiplier
        .iter()
        .map(|&m| {
            let n = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            (baseline * m + n).clamp(0.0, 1.0)
        })
        .collect();
    Ok(PowerTrace {
        beam_id,
        power,
        labels,
    })
}

/// Generate one beam's trace: shared events + per-beam synthesis.
pub fn generate_trace(profile: &ScenarioProfile, beam_id: usize) -> Result<PowerTrace> {
    let events = generate_events(profile)?;
    synthesize_beam(profile, &events, beam_id)
}

/// All beams of one scenario, plus the event list behind the labels.
pub fn generate_scenario(
    profile: &ScenarioProfile,
) -> Result<(Vec<PowerTrace>, Vec<BlockageEvent>)> {
    let events = generate_events(profile)?;
    let traces = (0..profile.n_beams)
        .map(|b| synthesize_beam(profile, &events, b))
        .collect::<Result<Vec<_>>>()?;
    Ok((traces, events))
}

/// Manifest describing one generated scenario set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub generator_version: u32,
    pub profiles: Vec<ScenarioProfile>,
    pub seeds: Vec<u64>,
    /// CSV file names relative to the manifest's directory, profile order.
    pub files: Vec<String>,
}

/// File name of the manifest inside the output directory.
pub const SIM_MANIFEST_FILE: &str = "scenario_manifest.json";

/// Generate the full indoor + outdoor scenario set into `out_dir`, one CSV
/// per profile plus a JSON manifest. Rerunning with the same profiles
/// produces byte-identical files.
pub fn generate_scenario_set(
    indoor: &ScenarioProfile,
    outdoor: &[ScenarioProfile],
    out_dir: &Path,
) -> Result<SimManifest> {
    if outdoor.is_empty() {
        return Err(Error::Config(
            "scenario set needs at least one outdoor profile".into(),
        ));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = SimManifest {
        generator_version: 1,
        profiles: Vec::new(),
        seeds: Vec::new(),
        files: Vec::new(),
    };
    for profile in std::iter::once(indoor).chain(outdoor) {
        let (traces, _events) = generate_scenario(profile)?;
        let file = format!("{}.csv", profile.name);
        save_scenario(&out_dir.join(&file), &traces)?;
        manifest.profiles.push(profile.clone());
        manifest.seeds.push(profile.seed);
        manifest.files.push(file);
    }
    let path = out_dir.join(SIM_MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Generation(format!("manifest serialization failed: {e}")))?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Path of a manifest's scenario file by profile name.
pub fn scenario_path(out_dir: &Path, manifest: &SimManifest, name: &str) -> Option<PathBuf> {
    manifest
        .profiles
        .iter()
        .position(|p| p.name == name)
        .map(|i| out_dir.join(&manifest.files[i]))
}

/// Default controlled-blocker training profile ("indoor"): fixed lead time
/// and ripple frequency, narrow durations, low noise.
pub fn default_indoor_profile(base_seed: u64) -> ScenarioProfile {
    ScenarioProfile {
        name: "indoor".to_string(),
        n_beams: 64,
        trace_length: 2000,
        strong_beam_fraction: 0.5,
        noise_std: 0.02,
        blockage_rate: 2.0,
        blockage_duration: Span { min: 8, max: 12 },
        blockage_depth: 0.05,
        signature: SignatureSpec {
            lead_time: Span::fixed(12),
            ripple_amplitude: 0.15,
            ripple_frequency: Span::fixed(0.25),
            decay: 1.0,
        },
        seed: base_seed + 10,
    }
}

/// Default uncontrolled test profiles ("outdoor" 17–22): per-event random
/// lead times and frequencies, wider durations, more noise — ordered from
/// closest-to-indoor (17) to hardest (22).
///
/// The spreads are calibrated: every profile stays within the conditions a
/// model trained on [`default_indoor_profile`] can plausibly generalize to
/// (the training signature is a single fixed lead/frequency, so test noise
/// above ~2× training noise or amplitudes far below training amplitude
/// collapse far-horizon accuracy to chance), while still widening every
/// randomized range from 17 to 22 so per-scenario difficulty visibly
/// spreads.
pub fn default_outdoor_profiles(base_seed: u64) -> Vec<ScenarioProfile> {
    struct Variant {
        number: u64,
        noise_std: f64,
        duration: Span<usize>,
        lead_time: Span<usize>,
        amplitude: f64,
        frequency: Span<f64>,
    }
    let variants = [
        Variant {
            number: 17,
            noise_std: 0.02,
            duration: Span { min: 8, max: 16 },
            lead_time: Span { min: 11, max: 14 },
            amplitude: 0.15,
            frequency: Span {
                min: 0.22,
                max: 0.28,
            },
        },
        Variant {
            number: 18,
            noise_std: 0.022,
            duration: Span { min: 6, max: 24 },
            lead_time: Span { min: 10, max: 15 },
            amplitude: 0.15,
            frequency: Span {
                min: 0.20,
                max: 0.30,
            },
        },
        Variant {
            number: 19,
            noise_std: 0.025,
            duration: Span { min: 6, max: 32 },
            lead_time: Span { min: 9, max: 16 },
            amplitude: 0.14,
            frequency: Span {
                min: 0.18,
                max: 0.33,
            },
        },
        Variant {
            number: 20,
            noise_std: 0.028,
            duration: Span { min: 4, max: 40 },
            lead_time: Span { min: 8, max: 16 },
            amplitude: 0.13,
            frequency: Span {
                min: 0.15,
                max: 0.35,
            },
        },
        Variant {
            number: 21,
            noise_std: 0.032,
            duration: Span { min: 4, max: 24 },
            lead_time: Span { min: 7, max: 17 },
            amplitude: 0.12,
            frequency: Span {
                min: 0.12,
                max: 0.38,
            },
        },
        Variant {
            number: 22,
            noise_std: 0.035,
            duration: Span { min: 4, max: 40 },
            lead_time: Span { min: 6, max: 18 },
            amplitude: 0.11,
            frequency: Span {
                min: 0.10,
                max: 0.40,
            },
        },
    ];
    variants
        .into_iter()
        .map(|v| ScenarioProfile {
            name: format!("outdoor_{}", v.number),
            n_beams: 64,
            trace_length: 1200,
            strong_beam_fraction: 0.5,
            noise_std: v.noise_std,
            blockage_rate: 2.0,
            blockage_duration: v.duration,
            blockage_depth: 0.05,
            signature: SignatureSpec {
                lead_time: v.lead_time,
                ripple_amplitude: v.amplitude,
                ripple_frequency: v.frequency,
                decay: 1.0,
            },
            seed: base_seed + v.number,
        })
        .collect()
}

/// Ripple template of one event, sample s = 0 .. lead_time−1.
fn ripple_template(profile: &ScenarioProfile, event: &BlockageEvent) -> Vec<f64> {
    let amp = profile.signature.ripple_amplitude;
    let decay = profile.signature.decay;
    (0..event.lead_time)
        .map(|s| {
            let distance = (event.lead_time - 1 - s) as f64 / event.lead_time as f64;
            amp * (-decay * distance).exp() * (TAU * event.ripple_frequency * s as f64).sin()
        })
        .collect()
}

/// Mean-removed correlation of one power window against a template.
fn correlate(window: &[f64], template: &[f64]) -> f64 {
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    window
        .iter()
        .zip(template)
        .map(|(&p, &r)| (p - mean) * r)
        .sum::<f64>()
        .abs()
}

/// Signature detectability statistic for one beam: mean template correlation
/// over the true pre-onset windows vs the same statistic over event-free
/// windows. A healthy profile yields signal ≫ background, which is what
/// makes proactive prediction learnable at all.
pub fn signature_match_statistic(
    profile: &ScenarioProfile,
    trace: &PowerTrace,
    events: &[BlockageEvent],
) -> Option<(f64, f64)> {
    if events.is_empty() {
        return None;
    }
    let len = trace.power.len();
    let occupied = |t: usize| {
        events
            .iter()
            .any(|e| t + e.lead_time >= e.onset && t < e.onset + e.duration + e.lead_time)
    };
    let mut signal = 0.0;
    let mut background = 0.0;
    let mut background_n = 0usize;
    for e in events {
        let template = ripple_template(profile, e);
        let window = &trace.power[e.onset - e.lead_time..e.onset];
        signal += correlate(window, &template);
        // Event-free windows for the same template, fixed grid.
        let mut t = 0;
        while t + e.lead_time < len {
            if (t..t + e.lead_time).all(|u| !occupied(u)) {
                background += correlate(&trace.power[t..t + e.lead_time], &template);
                background_n += 1;
            }
            t += e.lead_time;
        }
    }
    if background_n == 0 {
        return None;
    }
    Some((
        signal / events.len() as f64,
        background / background_n as f64,
    ))
}
