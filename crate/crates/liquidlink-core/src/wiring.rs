//! Sparse four-layer neural-circuit wiring: sensory → inter → command → motor.
//!
//! Neurons get consecutive global ids, layer by layer: sensory first, then
//! inter, command, motor. Only four edge kinds are legal — sensory→inter,
//! inter→command, command→command (the recurrent core, self-loops allowed),
//! and command→motor — and every synapse carries a ±1 polarity that later
//! fixes the sign of its reversal target.
//!
//! Construction is seeded and deterministic: random fanout assignment
//! followed by a lowest-id-first repair pass that adds the minimum edges
//! needed for full coverage, so every seed yields a valid graph.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neuron population sizes per layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounts {
    pub sensory: usize,
    pub inter: usize,
    pub command: usize,
    pub motor: usize,
}

impl Default for LayerCounts {
    fn default() -> Self {
        LayerCounts {
            sensory: 2,
            inter: 4,
            command: 2,
            motor: 1,
        }
    }
}

/// The four wiring layers, in id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Sensory,
    Inter,
    Command,
    Motor,
}

impl LayerCounts {
    /// Total neuron count including the (non-recurrent) sensory inputs.
    pub fn total_units(&self) -> usize {
        self.sensory + self.inter + self.command + self.motor
    }

    /// Neurons governed by the cell dynamics (everything but sensory).
    pub fn ode_units(&self) -> usize {
        self.inter + self.command + self.motor
    }

    pub fn sensory_ids(&self) -> std::ops::Range<usize> {
        0..self.sensory
    }

    pub fn inter_ids(&self) -> std::ops::Range<usize> {
        self.sensory..self.sensory + self.inter
    }

    pub fn command_ids(&self) -> std::ops::Range<usize> {
        self.sensory + self.inter..self.sensory + self.inter + self.command
    }

    pub fn motor_ids(&self) -> std::ops::Range<usize> {
        self.sensory + self.inter + self.command..self.total_units()
    }

    /// Layer of a global neuron id; `None` when out of range.
    pub fn layer_of(&self, id: usize) -> Option<Layer> {
        if self.sensory_ids().contains(&id) {
            Some(Layer::Sensory)
        } else if self.inter_ids().contains(&id) {
            Some(Layer::Inter)
        } else if self.command_ids().contains(&id) {
            Some(Layer::Command)
        } else if self.motor_ids().contains(&id) {
            Some(Layer::Motor)
        } else {
            None
        }
    }

    /// Short display name such as `s0`, `i2`, `c1`, `m0`.
    pub fn unit_name(&self, id: usize) -> String {
        match self.layer_of(id) {
            Some(Layer::Sensory) => format!("s{}", id),
            Some(Layer::Inter) => format!("i{}", id - self.sensory),
            Some(Layer::Command) => format!("c{}", id - self.sensory - self.inter),
            Some(Layer::Motor) => {
                format!("m{}", id - self.sensory - self.inter - self.command)
            }
            None => format!("?{}", id),
        }
    }

    /// Count of (source, target) pairs the layer discipline permits.
    pub fn legal_pairs(&self) -> usize {
        self.sensory * self.inter
            + self.inter * self.command
            + self.command * self.command
            + self.command * self.motor
    }
}

/// One directed synapse; polarity fixes the sign of its reversal target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synapse {
    pub source: usize,
    pub target: usize,
    pub polarity: i8,
}

/// How many random edges each construction phase draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FanoutSpec {
    /// Outgoing edges per sensory neuron into the inter layer.
    pub sensory_fanout: usize,
    /// Outgoing edges per inter neuron into the command layer.
    pub inter_fanout: usize,
    /// Random command→command edges (self-loops allowed).
    pub recurrent_command_synapses: usize,
    /// Incoming command edges per motor neuron.
    pub motor_fanin: usize,
}

impl Default for FanoutSpec {
    fn default() -> Self {
        FanoutSpec {
            sensory_fanout: 2,
            inter_fanout: 2,
            recurrent_command_synapses: 2,
            motor_fanin: 2,
        }
    }
}

/// The generated sparse graph, with the seed that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NcpWiring {
    pub counts: LayerCounts,
    /// Sorted by (source, target); no duplicates.
    pub synapses: Vec<Synapse>,
    pub seed: u64,
}

impl NcpWiring {
    /// Incoming synapse indices for a target neuron.
    pub fn incoming(&self, target: usize) -> impl Iterator<Item = &Synapse> {
        self.synapses.iter().filter(move |s| s.target == target)
    }
}

/// Outcome of [`validate_wiring`]: empty `violations` means the graph is ok.
#[derive(Debug, Clone, Default)]
pub struct WiringReport {
    pub violations: Vec<String>,
}

impl WiringReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Pick `k` distinct values from `pool` via a partial Fisher-Yates shuffle.
fn pick_distinct(rng: &mut ChaCha8Rng, pool: std::ops::Range<usize>, k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = pool.collect();
    for i in 0..k.min(ids.len()) {
        let j = rng.random_range(i..ids.len());
        ids.swap(i, j);
    }
    ids.truncate(k);
    ids
}

fn draw_polarity(rng: &mut ChaCha8Rng) -> i8 {
    if rng.random_bool(0.5) {
        1
    } else {
        -1
    }
}

fn check_feasible(counts: &LayerCounts, fanout: &FanoutSpec) -> Result<()> {
    let mut problems = Vec::new();
    if counts.sensory == 0 || counts.inter == 0 || counts.command == 0 || counts.motor == 0 {
        problems.push(format!(
            "every layer needs at least one neuron (got {}/{}/{}/{})",
            counts.sensory, counts.inter, counts.command, counts.motor
        ));
    }
    if fanout.sensory_fanout == 0
        || fanout.inter_fanout == 0
        || fanout.motor_fanin == 0
        || fanout.recurrent_command_synapses == 0
    {
        problems.push("all fanout settings must be at least 1".to_string());
    }
    if fanout.sensory_fanout > counts.inter {
        problems.push(format!(
            "sensory fanout {} exceeds inter layer size {}",
            fanout.sensory_fanout, counts.inter
        ));
    }
    if fanout.inter_fanout > counts.command {
        problems.push(format!(
            "inter fanout {} exceeds command layer size {}",
            fanout.inter_fanout, counts.command
        ));
    }
    if fanout.motor_fanin > counts.command {
        problems.push(format!(
            "motor fan-in {} exceeds command layer size {}",
            fanout.motor_fanin, counts.command
        ));
    }
    if fanout.recurrent_command_synapses > counts.command * counts.command {
        problems.push(format!(
            "{} recurrent synapses requested but only {} command pairs exist",
            fanout.recurrent_command_synapses,
            counts.command * counts.command
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems.join("; ")))
    }
}

/// Generate a wiring deterministically from (counts, fanout, seed).
///
/// Phases: random sensory→inter fanout, random inter→command fanout, random
/// command recurrence, random command→motor fan-in, then a repair pass that
/// adds lowest-id-first edges until every coverage rule holds. The result
/// always passes [`validate_wiring`].
pub fn build_ncp(counts: LayerCounts, fanout: FanoutSpec, seed: u64) -> Result<NcpWiring> {
    check_feasible(&counts, &fanout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: BTreeMap<(usize, usize), i8> = BTreeMap::new();

    for s in counts.sensory_ids() {
        for t in pick_distinct(&mut rng, counts.inter_ids(), fanout.sensory_fanout) {
            edges.insert((s, t), draw_polarity(&mut rng));
        }
    }
    for i in counts.inter_ids() {
        for t in pick_distinct(&mut rng, counts.command_ids(), fanout.inter_fanout) {
            edges.insert((i, t), draw_polarity(&mut rng));
        }
    }
    // Recurrent core: draw distinct (source, target) command pairs.
    let command: Vec<usize> = counts.command_ids().collect();
    let mut pairs: Vec<(usize, usize)> = command
        .iter()
        .flat_map(|&a| command.iter().map(move |&b| (a, b)))
        .collect();
    for i in 0..fanout.recurrent_command_synapses.min(pairs.len()) {
        let j = rng.random_range(i..pairs.len());
        pairs.swap(i, j);
        edges.insert(pairs[i], draw_polarity(&mut rng));
    }
    for m in counts.motor_ids() {
        for c in pick_distinct(&mut rng, counts.command_ids(), fanout.motor_fanin) {
            edges.insert((c, m), draw_polarity(&mut rng));
        }
    }

    // Repair pass, lowest-id-first: the random fanout above can miss whole
    // target neurons; give every uncovered inter/command neuron one incoming
    // edge from the lowest-id legal source not already wired to it.
    for i in counts.inter_ids() {
        if !edges.keys().any(|&(_, t)| t == i) {
            let s = counts
                .sensory_ids()
                .find(|&s| !edges.contains_key(&(s, i)))
                .expect("uncovered inter neuron has a free sensory source");
            edges.insert((s, i), draw_polarity(&mut rng));
        }
    }
    for c in counts.command_ids() {
        if !edges.keys().any(|&(_, t)| t == c) {
            let s = counts
                .inter_ids()
                .find(|&s| !edges.contains_key(&(s, c)))
                .expect("uncovered command neuron has a free inter source");
            edges.insert((s, c), draw_polarity(&mut rng));
        }
    }

    let wiring = NcpWiring {
        counts,
        synapses: edges
            .into_iter()
            .map(|((source, target), polarity)| Synapse {
                source,
                target,
                polarity,
            })
            .collect(),
        seed,
    };
    let report = validate_wiring(&wiring);
    if report.is_ok() {
        Ok(wiring)
    } else {
        Err(Error::InvalidWiring {
            violations: report.violations,
        })
    }
}

/// Check every structural invariant and return all violations found.
pub fn validate_wiring(wiring: &NcpWiring) -> WiringReport {
    let counts = &wiring.counts;
    let mut violations = Vec::new();

    if counts.sensory == 0 || counts.inter == 0 || counts.command == 0 || counts.motor == 0 {
        violations.push(format!(
            "every layer needs at least one neuron (got {}/{}/{}/{})",
            counts.sensory, counts.inter, counts.command, counts.motor
        ));
    }

    let mut seen = std::collections::BTreeSet::new();
    for syn in &wiring.synapses {
        let name = |id| counts.unit_name(id);
        if syn.polarity != 1 && syn.polarity != -1 {
            violations.push(format!(
                "synapse {}→{} has polarity {} (must be +1 or -1)",
                name(syn.source),
                name(syn.target),
                syn.polarity
            ));
        }
        if !seen.insert((syn.source, syn.target)) {
            violations.push(format!(
                "duplicate synapse {}→{}",
                name(syn.source),
                name(syn.target)
            ));
        }
        let (src, dst) = (counts.layer_of(syn.source), counts.layer_of(syn.target));
        match (src, dst) {
            (None, _) | (_, None) => violations.push(format!(
                "synapse {}→{} references a neuron id out of range",
                syn.source, syn.target
            )),
            (Some(Layer::Sensory), Some(Layer::Inter))
            | (Some(Layer::Inter), Some(Layer::Command))
            | (Some(Layer::Command), Some(Layer::Motor)) => {}
            (Some(Layer::Command), Some(Layer::Command)) => {} // recurrent core
            (Some(a), Some(b)) => {
                let kind = if syn.source == syn.target {
                    "self-loop outside the command layer"
                } else if matches!(
                    (a, b),
                    (Layer::Sensory, Layer::Command)
                        | (Layer::Sensory, Layer::Motor)
                        | (Layer::Inter, Layer::Motor)
                ) {
                    "layer-skipping edge"
                } else {
                    "edge violates layer discipline"
                };
                violations.push(format!(
                    "{} {}→{}",
                    kind,
                    name(syn.source),
                    name(syn.target)
                ));
            }
        }
    }

    let has_outgoing = |id| wiring.synapses.iter().any(|s| s.source == id);
    let has_incoming = |id| wiring.synapses.iter().any(|s| s.target == id);
    for s in counts.sensory_ids() {
        if !has_outgoing(s) {
            violations.push(format!("{}: no outgoing synapse", counts.unit_name(s)));
        }
    }
    for i in counts.inter_ids() {
        if !has_incoming(i) {
            violations.push(format!("{}: no incoming synapse", counts.unit_name(i)));
        }
        if !has_outgoing(i) {
            violations.push(format!("{}: no outgoing synapse", counts.unit_name(i)));
        }
    }
    for c in counts.command_ids() {
        if !has_incoming(c) {
            violations.push(format!("{}: no incoming synapse", counts.unit_name(c)));
        }
    }
    for m in counts.motor_ids() {
        if !has_incoming(m) {
            violations.push(format!("{}: no incoming synapse", counts.unit_name(m)));
        }
    }

    WiringReport { violations }
}

/// Min/mean/max of a fan-in or fan-out distribution over one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

fn fan_stats(degrees: impl Iterator<Item = usize>) -> FanStats {
    let values: Vec<usize> = degrees.collect();
    if values.is_empty() {
        return FanStats {
            min: 0,
            max: 0,
            mean: 0.0,
        };
    }
    FanStats {
        min: *values.iter().min().unwrap(),
        max: *values.iter().max().unwrap(),
        mean: values.iter().sum::<usize>() as f64 / values.len() as f64,
    }
}

/// Shape summary of a wiring, serializable for dumps and reports.
///
/// Both unit counts are surfaced on purpose: `total_units` includes the
/// sensory inputs, `ode_units` counts only the neurons with cell dynamics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WiringStats {
    pub total_units: usize,
    pub ode_units: usize,
    pub synapse_count: usize,
    pub legal_pairs: usize,
    /// synapse_count / legal_pairs.
    pub density: f64,
    pub sensory_fan_out: FanStats,
    pub inter_fan_in: FanStats,
    pub inter_fan_out: FanStats,
    pub command_fan_in: FanStats,
    pub command_fan_out: FanStats,
    pub motor_fan_in: FanStats,
}

pub fn wiring_stats(wiring: &NcpWiring) -> WiringStats {
    let counts = &wiring.counts;
    let out_deg = |id: usize| wiring.synapses.iter().filter(|s| s.source == id).count();
    let in_deg = |id: usize| wiring.synapses.iter().filter(|s| s.target == id).count();
    WiringStats {
        total_units: counts.total_units(),
        ode_units: counts.ode_units(),
        synapse_count: wiring.synapses.len(),
        legal_pairs: counts.legal_pairs(),
        density: wiring.synapses.len() as f64 / counts.legal_pairs() as f64,
        sensory_fan_out: fan_stats(counts.sensory_ids().map(out_deg)),
        inter_fan_in: fan_stats(counts.inter_ids().map(in_deg)),
        inter_fan_out: fan_stats(counts.inter_ids().map(out_deg)),
        command_fan_in: fan_stats(counts.command_ids().map(in_deg)),
        command_fan_out: fan_stats(counts.command_ids().map(out_deg)),
        motor_fan_in: fan_stats(counts.motor_ids().map(in_deg)),
    }
}

/// Render the wiring as Graphviz DOT, one cluster per layer; excitatory
/// synapses are solid `+` edges, inhibitory ones dashed `-`.
pub fn to_dot(wiring: &NcpWiring) -> String {
    let counts = &wiring.counts;
    let mut dot = String::from("digraph wiring {\n  rankdir=LR;\n");
    let clusters: [(&str, std::ops::Range<usize>); 4] = [
        ("sensory", counts.sensory_ids()),
        ("inter", counts.inter_ids()),
        ("command", counts.command_ids()),
        ("motor", counts.motor_ids()),
    ];
    for (label, ids) in clusters {
        let _ = writeln!(dot, "  subgraph cluster_{label} {{");
        let _ = writeln!(dot, "    label=\"{label}\";");
        for id in ids {
            let _ = writeln!(dot, "    {};", counts.unit_name(id));
        }
        dot.push_str("  }\n");
    }
    for syn in &wiring.synapses {
        let (mark, style) = if syn.polarity > 0 {
            ("+", "solid")
        } else {
            ("-", "dashed")
        };
        let _ = writeln!(
            dot,
            "  {} -> {} [label=\"{}\", style={}];",
            counts.unit_name(syn.source),
            counts.unit_name(syn.target),
            mark,
            style
        );
    }
    dot.push_str("}\n");
    dot
}
