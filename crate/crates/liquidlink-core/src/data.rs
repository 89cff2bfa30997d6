//! Scenario ingestion and sample extraction.
//!
//! A scenario is a CSV matrix of per-beam normalized received power plus one
//! shared blockage-label column. This module loads and saves that format
//! (strict by design: fixed header, no quoting, numeric cells only — only
//! CRLF line endings and a trailing newline are tolerated), normalizes power
//! by the scenario-wide maximum, excludes persistently weak beams, and cuts
//! sliding windows into training/evaluation samples.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ltc::cell::ObservationWindow;

/// One beam's time series: normalized received power and blockage labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub beam_id: usize,
    pub power: Vec<f64>,
    /// 1 during a blockage event, 0 otherwise; shared across beams of a
    /// scenario (blockage is a property of the link, not of one beam).
    pub labels: Vec<u8>,
}

impl PowerTrace {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.power.len() != self.labels.len() {
            return Err(Error::Config(format!(
                "beam {}: {} power samples but {} labels",
                self.beam_id,
                self.power.len(),
                self.labels.len()
            )));
        }
        for (t, &p) in self.power.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "beam {} sample {t}: power {p} outside [0, 1]",
                    self.beam_id
                )));
            }
        }
        if let Some(t) = self.labels.iter().position(|&l| l > 1) {
            return Err(Error::Config(format!(
                "beam {} sample {t}: label {} is not 0/1",
                self.beam_id, self.labels[t]
            )));
        }
        Ok(())
    }
}

/// A loaded scenario: one trace per power column, labels shared.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    /// File stem, e.g. "indoor" or "outdoor_17".
    pub name: String,
    pub traces: Vec<PowerTrace>,
}

/// Zero-padded power column name: `p00` … `p63` (wider for > 100 beams).
fn power_column(beam: usize, n_beams: usize) -> String {
    let width = (n_beams.saturating_sub(1)).to_string().len().max(2);
    format!("p{beam:0width$}")
}

fn schema_err(
    path: &Path,
    row: usize,
    column: impl Into<String>,
    message: impl Into<String>,
) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        row,
        column: column.into(),
        message: message.into(),
    }
}

/// Serialize a scenario to the CSV schema `t,p00,…,blocked`.
///
/// All traces must have equal length and identical labels. Floats are
/// written in shortest round-trip form, so save→load is lossless.
pub fn scenario_to_csv(traces: &[PowerTrace]) -> Result<String> {
    if traces.is_empty() {
        return Err(Error::Config("scenario has no beams".into()));
    }
    let n_beams = traces.len();
    let len = traces[0].len();
    for (i, trace) in traces.iter().enumerate() {
        trace.validate()?;
        if trace.beam_id != i {
            return Err(Error::Config(format!(
                "trace at position {i} has beam_id {}; save order must match ids",
                trace.beam_id
            )));
        }
        if trace.len() != len {
            return Err(Error::Config(format!(
                "beam {i} has {} samples, beam 0 has {len}",
                trace.len()
            )));
        }
        if trace.labels != traces[0].labels {
            return Err(Error::Config(format!(
                "beam {i} labels differ from beam 0; labels are link-level"
            )));
        }
    }
    let mut out = String::from("t");
    for b in 0..n_beams {
        let _ = write!(out, ",{}", power_column(b, n_beams));
    }
    out.push_str(",blocked\n");
    for t in 0..len {
        let _ = write!(out, "{t}");
        for trace in traces {
            let _ = write!(out, ",{}", trace.power[t]);
        }
        let _ = writeln!(out, ",{}", traces[0].labels[t]);
    }
    Ok(out)
}

/// Write a scenario CSV atomically (temp file + rename).
pub fn save_scenario(path: &Path, traces: &[PowerTrace]) -> Result<()> {
    let csv = scenario_to_csv(traces)?;
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, csv).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parse a scenario CSV. Errors carry the 1-based line and column name of
/// the first offending cell.
pub fn parse_scenario(path: &Path, text: &str) -> Result<ScenarioData> {
    // Tolerated deviations: CRLF endings and one trailing newline. Anything
    // else must match the schema byte for byte.
    let mut lines = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header = lines
        .next()
        .ok_or_else(|| schema_err(path, 1, "header", "file is empty"))?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() < 3 || fields[0] != "t" || *fields.last().unwrap() != "blocked" {
        return Err(schema_err(
            path,
            1,
            "header",
            format!("expected `t,p00,…,blocked`, got `{header}`"),
        ));
    }
    let n_beams = fields.len() - 2;
    for (b, &name) in fields[1..=n_beams].iter().enumerate() {
        let expected = power_column(b, n_beams);
        if name != expected {
            return Err(schema_err(
                path,
                1,
                "header",
                format!("power column {b} is named `{name}`, expected `{expected}`"),
            ));
        }
    }

    let mut power: Vec<Vec<f64>> = vec![Vec::new(); n_beams];
    let mut labels: Vec<u8> = Vec::new();
    let mut last_t: Option<i64> = None;
    for (idx, line) in lines.enumerate() {
        let row = idx + 2; // 1-based, after the header
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_beams + 2 {
            return Err(schema_err(
                path,
                row,
                "row",
                format!("{} fields, expected {}", cells.len(), n_beams + 2),
            ));
        }
        let t: i64 = cells[0]
            .parse()
            .map_err(|_| schema_err(path, row, "t", format!("`{}` is not an integer", cells[0])))?;
        if let Some(prev) = last_t {
            if t <= prev {
                return Err(schema_err(
                    path,
                    row,
                    "t",
                    format!("time {t} does not increase over {prev}"),
                ));
            }
        }
        last_t = Some(t);
        for b in 0..n_beams {
            let column = power_column(b, n_beams);
            let cell = cells[1 + b];
            let value: f64 = cell
                .parse()
                .map_err(|_| schema_err(path, row, &column, format!("`{cell}` is not a number")))?;
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(schema_err(
                    path,
                    row,
                    &column,
                    format!("power {value} outside [0, 1]"),
                ));
            }
            power[b].push(value);
        }
        labels.push(match *cells.last().unwrap() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(schema_err(
                    path,
                    row,
                    "blocked",
                    format!("`{other}` is not 0 or 1"),
                ))
            }
        });
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    Ok(ScenarioData {
        name,
        traces: power
            .into_iter()
            .enumerate()
            .map(|(beam_id, p)| PowerTrace {
                beam_id,
                power: p,
                labels: labels.clone(),
            })
            .collect(),
    })
}

/// Load a scenario CSV from disk.
pub fn load_scenario(path: &Path) -> Result<ScenarioData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(path, &text)
}

/// Divide by the maximum so the output peaks at exactly 1.
pub fn normalize_power(raw: &[f64]) -> Result<Vec<f64>> {
    let mut max = 0.0_f64;
    for &v in raw {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Config(format!(
                "power values must be finite and nonnegative, got {v}"
            )));
        }
        max = max.max(v);
    }
    if max <= 0.0 {
        return Err(Error::Config(
            "normalization needs at least one positive power value".into(),
        ));
    }
    Ok(raw.iter().map(|&v| v / max).collect())
}

/// Normalize every beam by the scenario-wide maximum (not per beam, so
/// relative beam strength — and the weak-beam rule — stays meaningful).
/// Returns the maximum that was divided out.
pub fn normalize_scenario(traces: &mut [PowerTrace]) -> Result<f64> {
    let max = traces
        .iter()
        .flat_map(|t| t.power.iter().copied())
        .fold(0.0_f64, f64::max);
    if max <= 0.0 || !max.is_finite() {
        return Err(Error::Config(
            "scenario has no positive power values to normalize by".into(),
        ));
    }
    for trace in traces.iter_mut() {
        for v in &mut trace.power {
            *v /= max;
        }
    }
    Ok(max)
}

/// Per-beam inclusion mask: a beam stays iff its mean power over unblocked
/// samples reaches `threshold`. Blockage dips never disqualify a beam.
pub fn filter_weak_beams(traces: &[PowerTrace], threshold: f64) -> Vec<bool> {
    traces
        .iter()
        .map(|trace| {
            let (mut sum, mut count) = (0.0, 0usize);
            for (&p, &l) in trace.power.iter().zip(&trace.labels) {
                if l == 0 {
                    sum += p;
                    count += 1;
                }
            }
            count > 0 && sum / count as f64 >= threshold
        })
        .collect()
}

/// Sliding-window geometry: window length, prediction horizon, step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub t_ob: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t_ob < 2 {
            return Err(Error::Config(format!(
                "observation window length {} must be at least 2",
                self.t_ob
            )));
        }
        if self.horizon < 1 {
            return Err(Error::Config(
                "prediction horizon must be at least 1".into(),
            ));
        }
        if self.stride < 1 {
            return Err(Error::Config("window stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// One supervised instance: an observation window, the horizon, and the
/// label observed `horizon` steps after the window's last sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: ObservationWindow,
    pub horizon: usize,
    pub label: u8,
    pub beam_id: usize,
    pub scenario_id: String,
}

/// Windowing output; traces too short for one window produce a warning
/// record instead of an error.
#[derive(Debug, Clone, Default)]
pub struct WindowedSamples {
    pub samples: Vec<Sample>,
    pub warnings: Vec<String>,
}

/// Per-timestep features for one window: [power, first difference]. The
/// difference at the window's first row is defined as 0.
fn window_features(power: &[f64], start: usize, t_ob: usize) -> Vec<Vec<f64>> {
    (0..t_ob)
        .map(|i| {
            let t = start + i;
            let diff = if i == 0 { 0.0 } else { power[t] - power[t - 1] };
            vec![power[t], diff]
        })
        .collect()
}

fn window_one_trace(
    trace: &PowerTrace,
    spec: WindowSpec,
    scenario_id: &str,
    keep: impl Fn(usize) -> bool,
    out: &mut WindowedSamples,
) -> Result<()> {
    let len = trace.len();
    if len < spec.t_ob + spec.horizon {
        out.warnings.push(format!(
            "{scenario_id} beam {}: trace length {len} is shorter than window {} + horizon {}; no samples",
            trace.beam_id, spec.t_ob, spec.horizon
        ));
        return Ok(());
    }
    let mut t_end = spec.t_ob - 1;
    while t_end + spec.horizon < len {
        if keep(t_end) {
            let start = t_end + 1 - spec.t_ob;
            let window =
                ObservationWindow::new(window_features(&trace.power, start, spec.t_ob), t_end)?;
            out.samples.push(Sample {
                window,
                horizon: spec.horizon,
                label: trace.labels[t_end + spec.horizon],
                beam_id: trace.beam_id,
                scenario_id: scenario_id.to_string(),
            });
        }
        t_end += spec.stride;
    }
    Ok(())
}

/// Cut samples from every beam the mask includes. Emits, per included beam,
/// one sample for every stride-aligned t_end with a full window and a valid
/// t_end + horizon: n_included · floor((L − T_ob − K)/stride + 1) samples.
pub fn window_dataset(
    traces: &[PowerTrace],
    spec: WindowSpec,
    mask: &[bool],
    scenario_id: &str,
) -> Result<WindowedSamples> {
    spec.validate()?;
    if mask.len() != traces.len() {
        return Err(Error::Config(format!(
            "beam mask has {} entries for {} beams",
            mask.len(),
            traces.len()
        )));
    }
    let mut out = WindowedSamples::default();
    for (trace, &included) in traces.iter().zip(mask) {
        if !included {
            continue;
        }
        trace.validate()?;
        window_one_trace(trace, spec, scenario_id, |_| true, &mut out)?;
    }
    Ok(out)
}

/// Sensitivity variant of the exclusion rule: keep every beam but drop the
/// individual samples whose power at the prediction time t_end is below the
/// threshold (per-prediction instead of per-beam exclusion).
pub fn window_dataset_per_sample(
    traces: &[PowerTrace],
    spec: WindowSpec,
    threshold: f64,
    scenario_id: &str,
) -> Result<WindowedSamples> {
    spec.validate()?;
    let mut out = WindowedSamples::default();
    for trace in traces {
        trace.validate()?;
        window_one_trace(
            trace,
            spec,
            scenario_id,
            |t_end| trace.power[t_end] >= threshold,
            &mut out,
        )?;
    }
    Ok(out)
}
