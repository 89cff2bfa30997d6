//! The six subcommands, each a thin orchestration over the library.
//!
//! Output layout under the chosen directory:
//!
//! ```text
//! out/
//! ├── scenarios/            one CSV per scenario + scenario_manifest.json
//! ├── models/               checkpoint_k<K>.json + history_k<K>.csv
//! ├── reports/              metrics.csv, comparison.txt, gradcheck.txt
//! ├── wiring/               wiring.json + wiring.dot
//! └── manifest_<command>.json
//! ```
//!
//! Every command finishes by writing a run manifest; each returns the list
//! of artifact paths it produced so `pipeline` can aggregate them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use liquidlink_core::checkpoint::Checkpoint;
use liquidlink_core::data::{
    load_scenario, normalize_scenario, window_dataset, ScenarioData, WindowSpec,
};
use liquidlink_core::error::{Error, Result};
use liquidlink_core::eval::{comparison_table, evaluate, metrics_to_csv, Metrics};
use liquidlink_core::sim::{generate_scenario_set, scenario_path, SimManifest, SIM_MANIFEST_FILE};
use liquidlink_core::train::{history_csv, run_gradcheck, train, GradcheckReport};
use liquidlink_core::wiring::{build_ncp, to_dot, validate_wiring, wiring_stats, NcpWiring};

use crate::config::{write_manifest, RunConfig};

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn checkpoint_file(out_dir: &Path, horizon: usize) -> PathBuf {
    out_dir
        .join("models")
        .join(format!("checkpoint_k{horizon}.json"))
}

fn history_file(out_dir: &Path, horizon: usize) -> PathBuf {
    out_dir
        .join("models")
        .join(format!("history_k{horizon}.csv"))
}

/// Load the scenario-set manifest a previous `simulate` left behind.
fn load_sim_manifest(out_dir: &Path) -> Result<(PathBuf, SimManifest)> {
    let dir = out_dir.join("scenarios");
    let path = dir.join(SIM_MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: SimManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: malformed manifest: {e}", path.display())))?;
    Ok((dir, manifest))
}

fn load_named_scenario(dir: &Path, manifest: &SimManifest, name: &str) -> Result<ScenarioData> {
    let path = scenario_path(dir, manifest, name).ok_or_else(|| {
        Error::Config(format!(
            "scenario '{name}' is not in {}; re-run `liquidlink simulate`",
            dir.join(SIM_MANIFEST_FILE).display()
        ))
    })?;
    load_scenario(&path)
}

fn build_wiring(config: &RunConfig) -> Result<NcpWiring> {
    let wiring = build_ncp(config.layer_counts, config.fanout, config.wiring_seed())?;
    let report = validate_wiring(&wiring);
    if !report.is_ok() {
        return Err(Error::InvalidWiring {
            violations: report.violations,
        });
    }
    Ok(wiring)
}

/// Generate the scenario set.
pub fn simulate(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out_dir)?;
    let scen_dir = out_dir.join("scenarios");
    let manifest = generate_scenario_set(&config.indoor, &config.outdoor, &scen_dir)?;
    let mut artifacts = vec![scen_dir.join(SIM_MANIFEST_FILE)];
    for file in &manifest.files {
        artifacts.push(scen_dir.join(file));
    }
    println!(
        "simulate: wrote {} scenarios (1 train + {} test) to {}",
        manifest.files.len(),
        config.outdoor.len(),
        scen_dir.display()
    );
    write_manifest(out_dir, "simulate", config, &artifacts)?;
    Ok(artifacts)
}

/// Train one model per horizon on the full training scenario.
pub fn train_models(config: &RunConfig, out_dir: &Path, workers: usize) -> Result<Vec<PathBuf>> {
    let (scen_dir, sim_manifest) = load_sim_manifest(out_dir)?;
    let scenario = load_named_scenario(&scen_dir, &sim_manifest, &config.indoor.name)?;
    let mut traces = scenario.traces;
    normalize_scenario(&mut traces)?;
    // Training uses every beam; the weak-beam rule is an evaluation filter.
    let mask = vec![true; traces.len()];
    let wiring = build_wiring(config)?;

    ensure_dir(&out_dir.join("models"))?;
    let mut artifacts = Vec::new();
    for &horizon in &config.horizons {
        let spec = WindowSpec {
            t_ob: config.t_ob,
            horizon,
            stride: 1,
        };
        let windowed = window_dataset(&traces, spec, &mask, &scenario.name)?;
        for warning in &windowed.warnings {
            eprintln!("warning: {warning}");
        }
        let blocked = windowed.samples.iter().filter(|s| s.label == 1).count();
        let (checkpoint, history) = train(
            &windowed.samples,
            &config.train_config(horizon),
            &wiring,
            workers,
        )?;

        let model_path = checkpoint_file(out_dir, horizon);
        checkpoint.save(&model_path)?;
        let history_path = history_file(out_dir, horizon);
        write_atomic(&history_path, &history_csv(&history))?;

        let last = history.last().expect("at least one epoch");
        println!(
            "train: K={horizon} on {} windows ({blocked} blocked) → loss {:.4}, accuracy {:.4} after {} epochs",
            windowed.samples.len(),
            last.mean_loss,
            last.train_accuracy,
            history.len()
        );
        artifacts.push(model_path);
        artifacts.push(history_path);
    }
    write_manifest(out_dir, "train", config, &artifacts)?;
    Ok(artifacts)
}

/// Score every checkpoint on every test scenario.
pub fn eval_models(config: &RunConfig, out_dir: &Path, workers: usize) -> Result<Vec<PathBuf>> {
    let (scen_dir, sim_manifest) = load_sim_manifest(out_dir)?;
    let checkpoints: Vec<(usize, Checkpoint)> = config
        .horizons
        .iter()
        .map(|&horizon| {
            Ok((
                horizon,
                Checkpoint::load(&checkpoint_file(out_dir, horizon))?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<Metrics> = Vec::new();
    for profile in &config.outdoor {
        let scenario = load_named_scenario(&scen_dir, &sim_manifest, &profile.name)?;
        for (horizon, checkpoint) in &checkpoints {
            rows.push(evaluate(
                checkpoint,
                &scenario,
                *horizon,
                config.weak_beam_threshold,
                workers,
            )?);
        }
    }

    let report_dir = out_dir.join("reports");
    ensure_dir(&report_dir)?;
    let metrics_path = report_dir.join("metrics.csv");
    write_atomic(&metrics_path, &metrics_to_csv(&rows)?)?;
    let table = comparison_table(&rows)?;
    let table_path = report_dir.join("comparison.txt");
    write_atomic(&table_path, &table)?;
    print!("{table}");
    println!(
        "eval: {} scenario/horizon pairs → {}",
        rows.len(),
        metrics_path.display()
    );
    let artifacts = vec![metrics_path, table_path];
    write_manifest(out_dir, "eval", config, &artifacts)?;
    Ok(artifacts)
}

/// simulate → train → eval with one shared configuration.
pub fn pipeline(config: &RunConfig, out_dir: &Path, workers: usize) -> Result<()> {
    let mut artifacts = simulate(config, out_dir)?;
    artifacts.extend(train_models(config, out_dir, workers)?);
    artifacts.extend(eval_models(config, out_dir, workers)?);
    write_manifest(out_dir, "pipeline", config, &artifacts)?;
    println!("pipeline: done ({} artifacts)", artifacts.len());
    Ok(())
}

fn render_gradcheck(report: &GradcheckReport) -> String {
    let mut text = String::new();
    for (i, instance) in report.instances.iter().enumerate() {
        writeln!(
            text,
            "instance {i:2} (seed {:4}): loss {:.6}  max rel err {:.3e}  max abs diff {:.3e}",
            instance.seed, instance.loss, instance.max_rel_err, instance.max_abs_diff
        )
        .expect("string write");
    }
    let mut offenders: Vec<_> = report
        .instances
        .iter()
        .enumerate()
        .flat_map(|(i, inst)| inst.worst.iter().map(move |c| (i, c)))
        .collect();
    offenders.sort_by(|a, b| b.1.rel_err.total_cmp(&a.1.rel_err));
    text.push_str("worst coordinates:\n");
    for (instance, coord) in offenders.iter().take(5) {
        writeln!(
            text,
            "  instance {instance:2} {:<16} analytic {:+.9e}  numeric {:+.9e}  rel err {:.3e}",
            coord.label, coord.analytic, coord.numeric, coord.rel_err
        )
        .expect("string write");
    }
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    writeln!(
        text,
        "gradcheck: {verdict} — max rel err {:.3e} (tolerance {:.0e}), max abs diff {:.3e}, {} instances, eps {:.0e}",
        report.max_rel_err,
        report.tolerance,
        report.max_abs_diff,
        report.instances.len(),
        report.eps
    )
    .expect("string write");
    text
}

/// Compare exact gradients against the finite-difference probe.
///
/// `inject_bug` corrupts one analytic coordinate of the first instance — a
/// negative control proving the comparison can actually fail.
pub fn gradcheck(
    config: &RunConfig,
    out_dir: &Path,
    workers: usize,
    inject_bug: bool,
) -> Result<()> {
    let _ = workers; // instance count is small; the sweep runs serially
    let corrupt = inject_bug.then_some(3);
    let report = run_gradcheck(
        config.gradcheck_instances,
        config.gradcheck_seed,
        config.gradcheck_eps,
        config.ode_unfolds,
        corrupt,
    )?;
    let text = render_gradcheck(&report);
    print!("{text}");

    let report_dir = out_dir.join("reports");
    ensure_dir(&report_dir)?;
    let report_path = report_dir.join("gradcheck.txt");
    write_atomic(&report_path, &text)?;
    write_manifest(out_dir, "gradcheck", config, &[report_path])?;

    if report.passed {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check failed: max rel err {:.3e} exceeds {:.0e}",
            report.max_rel_err, report.tolerance
        )))
    }
}

/// Emit the generated wiring as JSON and Graphviz DOT.
pub fn wiring(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let wiring = build_wiring(config)?;
    let stats = wiring_stats(&wiring);

    let dir = out_dir.join("wiring");
    ensure_dir(&dir)?;
    let json_path = dir.join("wiring.json");
    let mut json = serde_json::to_string_pretty(&wiring)
        .map_err(|e| Error::Config(format!("wiring serialization failed: {e}")))?;
    json.push('\n');
    write_atomic(&json_path, &json)?;
    let dot_path = dir.join("wiring.dot");
    write_atomic(&dot_path, &to_dot(&wiring))?;

    let inhibitory = wiring.synapses.iter().filter(|s| s.polarity < 0).count();
    println!(
        "wiring: {} units ({} sensory, {} inter, {} command, {} motor), {} synapses ({} inhibitory), density {:.2}",
        stats.total_units,
        wiring.counts.sensory,
        wiring.counts.inter,
        wiring.counts.command,
        wiring.counts.motor,
        stats.synapse_count,
        inhibitory,
        stats.density
    );
    println!(
        "wiring: wrote {} and {}",
        json_path.display(),
        dot_path.display()
    );
    write_manifest(out_dir, "wiring", config, &[json_path, dot_path])?;
    Ok(())
}
