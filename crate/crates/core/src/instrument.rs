//! Virtual measurement setup: gate routing per row, sweep engine and record files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SampleInstance;
use crate::num::linspace;
use crate::rng::{tag, Stream};
use crate::transport::{dot_current, BiasPoint, TransportConfig};

/// A control or readout line of the array. Indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Gate {
    /// Confinement gate between columns.
    C(usize),
    /// Plunger of a row.
    P(usize),
    /// Barrier between rows.
    B(usize),
    /// Source contact of a column.
    S(usize),
    /// Common drain.
    Drain,
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::C(i) => write!(f, "C{i}"),
            Gate::P(i) => write!(f, "P{i}"),
            Gate::B(i) => write!(f, "B{i}"),
            Gate::S(i) => write!(f, "S{i}"),
            Gate::Drain => f.write_str("D"),
        }
    }
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "D" {
            return Ok(Gate::Drain);
        }
        let bad = || Error::InvalidInput(format!("unknown gate {s:?}"));
        let (head, idx) = s.split_at(s.len().min(1));
        let idx: usize = idx.parse().map_err(|_| bad())?;
        if idx == 0 {
            return Err(bad());
        }
        match head {
            "C" => Ok(Gate::C(idx)),
            "P" => Ok(Gate::P(idx)),
            "B" => Ok(Gate::B(idx)),
            "S" => Ok(Gate::S(idx)),
            _ => Err(bad()),
        }
    }
}

impl From<Gate> for String {
    fn from(g: Gate) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for Gate {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Something a sweep can step: a gate voltage or the source-drain bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Target {
    Gate(Gate),
    Vsd,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Gate(g) => g.fmt(f),
            Target::Vsd => f.write_str("VSD"),
        }
    }
}

impl From<Target> for String {
    fn from(t: Target) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for Target {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if s == "VSD" {
            Ok(Target::Vsd)
        } else {
            s.parse().map(Target::Gate)
        }
    }
}

/// Control and readout lines needed for an `n x n` array: `n + 1` confinement
/// gates, `n` plungers, `n + 1` barriers, `n` sources and one drain.
pub fn line_budget(n: usize) -> usize {
    (n + 1) + n + (n + 1) + n + 1
}

/// Gate roles for measuring one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingPlan {
    pub row: usize,
    pub n: usize,
    pub plunger: Gate,
    pub source_barrier: Gate,
    pub drain_barrier: Gate,
    /// All other plungers and barriers, biased to extend the 2DEG.
    pub extenders: Vec<Gate>,
    pub confinement_bias: f64,
    pub accumulation_bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingDefaults {
    /// Volts on the confinement gates.
    pub confinement_bias: f64,
    /// Volts on extender gates.
    pub accumulation_bias: f64,
}

impl Default for RoutingDefaults {
    fn default() -> Self {
        RoutingDefaults {
            confinement_bias: -0.5,
            accumulation_bias: 2.0,
        }
    }
}

impl RoutingPlan {
    /// The three gates swept or held by measurements of this row.
    pub fn row_gates(&self) -> [Gate; 3] {
        [self.plunger, self.source_barrier, self.drain_barrier]
    }

    /// Bias held on any gate of the array while this row is measured.
    pub fn static_bias(&self, gate: Gate) -> Option<f64> {
        match gate {
            Gate::C(_) => Some(self.confinement_bias),
            g if self.extenders.contains(&g) => Some(self.accumulation_bias),
            _ => None,
        }
    }
}

pub fn configure_row<T>(sample: &SampleInstance<T>, row: usize) -> Result<RoutingPlan> {
    configure_row_with(sample.geometry.n, row, &RoutingDefaults::default())
}

pub fn configure_row_with(n: usize, row: usize, defaults: &RoutingDefaults) -> Result<RoutingPlan> {
    if row == 0 || row > n {
        return Err(Error::Addressing(format!("row {row} outside 1..={n}")));
    }
    let extenders = (1..=n)
        .filter(|&i| i != row)
        .map(Gate::P)
        .chain((1..=n + 1).filter(|&k| k != row && k != row + 1).map(Gate::B))
        .collect();
    Ok(RoutingPlan {
        row,
        n,
        plunger: Gate::P(row),
        source_barrier: Gate::B(row),
        drain_barrier: Gate::B(row + 1),
        extenders,
        confinement_bias: defaults.confinement_bias,
        accumulation_bias: defaults.accumulation_bias,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub target: Target,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(target: Target, start: f64, stop: f64, points: usize) -> Self {
        Axis {
            target,
            start,
            stop,
            points,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.points)
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.points - 1) as f64
    }
}

/// A 1-D or 2-D sweep. The grid is row-major: the last axis runs fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    /// Held voltages of the row gates that are not swept.
    pub fixed: BTreeMap<Gate, f64>,
    /// Source-drain bias (V) when not swept; also the noise reference.
    pub v_sd: f64,
    /// Columns read out (1-based).
    pub channels: Vec<usize>,
    /// Electron temperature (K).
    pub temperature: f64,
    /// Gates wired together, which must carry equal bias.
    #[serde(default)]
    pub shared_groups: Vec<Vec<Gate>>,
}

impl SweepSpec {
    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    fn validate_shape(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::InvalidInput(format!(
                "a sweep has 1 or 2 axes, got {}",
                self.axes.len()
            )));
        }
        for a in &self.axes {
            if a.points < 2 || a.start == a.stop || !a.start.is_finite() || !a.stop.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "axis {} needs >= 2 points and distinct finite endpoints",
                    a.target
                )));
            }
        }
        if self.axes.len() == 2 && self.axes[0].target == self.axes[1].target {
            return Err(Error::InvalidInput("both axes sweep the same target".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidInput("temperature must be positive".into()));
        }
        Ok(())
    }

    /// Checks the spec against a routing plan of an `n`-column array.
    pub fn validate(&self, plan: &RoutingPlan) -> Result<()> {
        self.validate_shape()?;
        let row_gates = plan.row_gates();
        for a in &self.axes {
            if let Target::Gate(g) = a.target {
                if !row_gates.contains(&g) {
                    return Err(Error::Routing(format!(
                        "gate {g} is not routed to row {} (sweepable: {}, {}, {})",
                        plan.row, row_gates[0], row_gates[1], row_gates[2]
                    )));
                }
            }
        }
        for g in self.fixed.keys() {
            if !row_gates.contains(g) {
                return Err(Error::Routing(format!(
                    "gate {g} is held by the routing plan of row {}",
                    plan.row
                )));
            }
        }
        for g in row_gates {
            let swept = self.axes.iter().any(|a| a.target == Target::Gate(g));
            if !swept && !self.fixed.contains_key(&g) {
                return Err(Error::Routing(format!("no bias given for {g}")));
            }
        }
        if self.channels.is_empty() {
            return Err(Error::InvalidInput("a sweep needs at least one channel".into()));
        }
        let mut seen = vec![false; plan.n + 1];
        for &c in &self.channels {
            if c == 0 || c > plan.n {
                return Err(Error::Addressing(format!("channel {c} outside 1..={}", plan.n)));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidInput(format!("channel {c} listed twice")));
            }
        }
        for group in &self.shared_groups {
            self.check_group(plan, group)?;
        }
        Ok(())
    }

    fn check_group(&self, plan: &RoutingPlan, group: &[Gate]) -> Result<()> {
        #[derive(PartialEq)]
        enum Drive {
            Fixed(f64),
            Swept(Axis),
        }
        let drive = |g: Gate| -> Option<Drive> {
            if let Some(a) = self.axes.iter().find(|a| a.target == Target::Gate(g)) {
                return Some(Drive::Swept(*a));
            }
            self.fixed
                .get(&g)
                .copied()
                .or_else(|| plan.static_bias(g))
                .map(Drive::Fixed)
        };
        let mut first: Option<(Gate, Drive)> = None;
        for &g in group {
            let Some(d) = drive(g) else { continue };
            match &first {
                None => first = Some((g, d)),
                Some((g0, d0)) if *d0 != d => {
                    return Err(Error::Routing(format!(
                        "{g0} and {g} share a line but are driven differently"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Bias applied at grid point `idx` (row-major).
    fn bias_at(&self, plan: &RoutingPlan, axis_values: &[Vec<f64>], idx: usize) -> BiasPoint {
        let mut b = BiasPoint {
            v_plunger: self.fixed.get(&plan.plunger).copied().unwrap_or(0.0),
            v_bs: self.fixed.get(&plan.source_barrier).copied().unwrap_or(0.0),
            v_bd: self.fixed.get(&plan.drain_barrier).copied().unwrap_or(0.0),
            v_sd: self.v_sd,
            temperature: self.temperature,
        };
        let mut rem = idx;
        for (k, a) in self.axes.iter().enumerate().rev() {
            let i = rem % a.points;
            rem /= a.points;
            let v = axis_values[k][i];
            match a.target {
                Target::Vsd => b.v_sd = v,
                Target::Gate(g) if g == plan.plunger => b.v_plunger = v,
                Target::Gate(g) if g == plan.source_barrier => b.v_bs = v,
                Target::Gate(_) => b.v_bd = v,
            }
        }
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    TurnOnPlunger,
    TurnOnSource,
    TurnOnDrain,
    BarrierMap,
    Coulomb,
    Diamond,
    Custom,
}

impl RecordKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordKind::TurnOnPlunger => "turn-on-plunger",
            RecordKind::TurnOnSource => "turn-on-source",
            RecordKind::TurnOnDrain => "turn-on-drain",
            RecordKind::BarrierMap => "barrier-map",
            RecordKind::Coulomb => "coulomb",
            RecordKind::Diamond => "diamond",
            RecordKind::Custom => "custom",
        }
    }
}

impl FromStr for RecordKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidInput(format!("unknown record kind {s:?}")))
    }
}

/// A persisted sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub kind: RecordKind,
    pub spec: SweepSpec,
    pub routing: RoutingPlan,
    /// `currents[k][i]`: channel `spec.channels[k]`, grid point `i` (row-major).
    pub currents: Vec<Vec<f64>>,
    pub sample_label: String,
    /// Logical position in the measurement sequence; never wall-clock time.
    pub timestamp: String,
    /// Noise seed.
    pub seed: u64,
}

impl MeasurementRecord {
    pub fn ndim(&self) -> usize {
        self.spec.axes.len()
    }

    pub fn axis_values(&self, k: usize) -> Vec<f64> {
        self.spec.axes[k].values()
    }

    pub fn channel_index(&self, col: usize) -> Option<usize> {
        self.spec.channels.iter().position(|&c| c == col)
    }

    pub fn channel(&self, col: usize) -> Option<&[f64]> {
        self.channel_index(col).map(|k| self.currents[k].as_slice())
    }
}

/// Rounds to 9 significant digits, the precision of record files.
pub fn quantize(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Runs a sweep on the row selected by `plan`. Every channel sees the same gate
/// voltages. Noise is keyed by `(seed, column, point)` so results do not depend
/// on evaluation order or on which other channels are read out.
pub fn run_sweep(
    sample: &SampleInstance<f64>,
    plan: &RoutingPlan,
    spec: &SweepSpec,
    transport: &TransportConfig<f64>,
    seed: u64,
) -> Result<MeasurementRecord> {
    if plan.n != sample.geometry.n {
        return Err(Error::Routing(format!(
            "plan is for a {0}x{0} array, sample is {1}x{1}",
            plan.n, sample.geometry.n
        )));
    }
    spec.validate(plan)?;
    let axis_values: Vec<Vec<f64>> = spec.axes.iter().map(Axis::values).collect();
    let total = spec.n_points();
    let currents = spec
        .channels
        .par_iter()
        .map(|&col| {
            let dot = sample.dot(plan.row, col).expect("validated address");
            let spurious = sample.spurious_for(plan.row, col);
            let dead = sample.is_dead_column(col);
            let sigma = transport.noise_sigma(dot, spec.v_sd);
            (0..total)
                .into_par_iter()
                .map(|i| {
                    let clean = if dead {
                        0.0
                    } else {
                        let b = spec.bias_at(plan, &axis_values, i);
                        dot_current(dot, &spurious, &b, transport)
                    };
                    let noise = if sigma > 0.0 {
                        sigma * Stream::new(seed, tag::NOISE, col as u64, i as u64).normal()
                    } else {
                        0.0
                    };
                    quantize(clean + noise)
                })
                .collect()
        })
        .collect();
    Ok(MeasurementRecord {
        kind: RecordKind::Custom,
        spec: spec.clone(),
        routing: plan.clone(),
        currents,
        sample_label: sample.label.clone(),
        timestamp: String::new(),
        seed,
    })
}

pub const RECORD_FORMAT: &str = "qdarray-record";
pub const RECORD_VERSION: u32 = 1;

fn fmt_num(x: f64) -> String {
    format!("{x:>16.8e}")
}

pub fn record_to_string(record: &MeasurementRecord) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {RECORD_FORMAT} {RECORD_VERSION}\n"));
    out.push_str(&format!("# kind: {}\n", record.kind.as_str()));
    out.push_str(&format!("# sample: {}\n", record.sample_label));
    out.push_str(&format!("# seed: {}\n", record.seed));
    out.push_str(&format!("# timestamp: {}\n", record.timestamp));
    out.push_str(&format!(
        "# routing: {}\n",
        serde_json::to_string(&record.routing).expect("plan serializes")
    ));
    out.push_str(&format!(
        "# spec: {}\n",
        serde_json::to_string(&record.spec).expect("spec serializes")
    ));
    let mut cols: Vec<String> = record.spec.axes.iter().map(|a| a.target.to_string()).collect();
    cols.push("channel".into());
    cols.push("current_A".into());
    out.push_str(&format!("# columns: {}\n", cols.join(" ")));
    let axis_values: Vec<Vec<f64>> = record.spec.axes.iter().map(Axis::values).collect();
    let dims = record.spec.dims();
    for (k, &col) in record.spec.channels.iter().enumerate() {
        for (i, &current) in record.currents[k].iter().enumerate() {
            let mut rem = i;
            let mut idx = vec![0; dims.len()];
            for d in (0..dims.len()).rev() {
                idx[d] = rem % dims[d];
                rem /= dims[d];
            }
            for (d, &j) in idx.iter().enumerate() {
                out.push_str(&fmt_num(axis_values[d][j]));
                out.push(' ');
            }
            out.push_str(&format!("{col:>3} {}\n", fmt_num(current)));
        }
    }
    out
}

pub fn record_from_str(text: &str, path: &Path) -> Result<MeasurementRecord> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let mut header: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    let mut lines = text.lines().enumerate().peekable();
    let (_, first) = lines.next().ok_or_else(|| perr(1, "empty record file".into()))?;
    let version = first
        .strip_prefix("# ")
        .and_then(|s| s.strip_prefix(RECORD_FORMAT))
        .and_then(|s| s.trim().parse::<u32>().ok())
        .ok_or_else(|| perr(1, "missing record header".into()))?;
    if version != RECORD_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "record",
            found: version,
            supported: RECORD_VERSION,
        });
    }
    while let Some(&(i, line)) = lines.peek() {
        let Some(rest) = line.strip_prefix('#') else { break };
        let (key, value) = rest
            .trim_start()
            .split_once(':')
            .ok_or_else(|| perr(i + 1, "malformed header line".into()))?;
        header.insert(key.trim(), (i + 1, value.trim()));
        lines.next();
    }
    let get = |key: &str| {
        header
            .get(key)
            .copied()
            .ok_or_else(|| perr(1, format!("header field {key:?} missing")))
    };
    let (line, kind) = get("kind")?;
    let kind: RecordKind = kind.parse().map_err(|e: Error| perr(line, e.to_string()))?;
    let (line, seed) = get("seed")?;
    let seed: u64 = seed.parse().map_err(|_| perr(line, "bad seed".into()))?;
    let (line, v) = get("routing")?;
    let routing: RoutingPlan = serde_json::from_str(v).map_err(|e| perr(line, e.to_string()))?;
    let (line, v) = get("spec")?;
    let spec: SweepSpec = serde_json::from_str(v).map_err(|e| perr(line, e.to_string()))?;
    spec.validate(&routing).map_err(|e| perr(line, e.to_string()))?;

    let n_axes = spec.axes.len();
    let total = spec.n_points();
    let mut currents = vec![Vec::with_capacity(total); spec.channels.len()];
    let mut count = 0usize;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != n_axes + 2 {
            return Err(perr(i + 1, format!("expected {} columns", n_axes + 2)));
        }
        let k = count / total;
        if k >= spec.channels.len() {
            return Err(perr(i + 1, "more data rows than the spec describes".into()));
        }
        let col: usize = fields[n_axes].parse().map_err(|_| perr(i + 1, "bad channel".into()))?;
        if col != spec.channels[k] {
            return Err(perr(i + 1, format!("expected channel {}", spec.channels[k])));
        }
        let current: f64 = fields[n_axes + 1]
            .parse()
            .map_err(|_| perr(i + 1, "bad current".into()))?;
        currents[k].push(current);
        count += 1;
    }
    let expected = total * spec.channels.len();
    if count != expected {
        return Err(perr(
            text.lines().count(),
            format!("truncated record: {count} of {expected} data rows"),
        ));
    }
    Ok(MeasurementRecord {
        kind,
        spec,
        routing,
        currents,
        sample_label: get("sample")?.1.to_string(),
        timestamp: get("timestamp")?.1.to_string(),
        seed,
    })
}

pub fn save_record(record: &MeasurementRecord, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(record_to_string(record).as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_record(path: &Path) -> Result<MeasurementRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    record_from_str(&text, path)
}
