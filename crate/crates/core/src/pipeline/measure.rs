use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExtractConfig, MeasureConfig, Protocol};
use crate::error::{Error, Result};
use crate::extraction::{
    analyze_barrier_map, first_spacing, fit_threshold, select_common_bias, CandidateSet, CommonBiasDecision,
    PeakSpacing,
};
use crate::instrument::{
    configure_row, load_record, run_sweep, save_record, Axis, Gate, MeasurementRecord, RecordKind, RoutingPlan,
    SweepSpec, Target,
};
use crate::model::OxideStack;
use crate::num::median;
use crate::rng::{mix, tag};
use crate::transport::TransportConfig;
use crate::Sample;

pub const MANIFEST_FORMAT: &str = "qdarray-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub kind: RecordKind,
    pub row: usize,
    pub channels: Vec<usize>,
    pub seed: u64,
}

/// A dot left out of the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDot {
    pub row: usize,
    pub col: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSummary {
    pub row: usize,
    pub decision: Option<CommonBiasDecision>,
    /// Plunger window and bias half-range of each dot's diamond scan.
    pub diamond_windows: BTreeMap<usize, (f64, f64, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub sample_label: String,
    pub measure_seed: u64,
    pub n: usize,
    pub stack: OxideStack<f64>,
    pub protocol: Protocol,
    pub records: Vec<ManifestEntry>,
    pub rows: Vec<RowSummary>,
    pub skipped: Vec<SkippedDot>,
}

impl Manifest {
    pub fn is_skipped(&self, row: usize, col: usize) -> bool {
        self.skipped.iter().any(|s| s.row == row && s.col == col)
    }

    pub fn count(&self, kind: RecordKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }
}

/// Records of one sample, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub manifest: Manifest,
    pub records: Vec<MeasurementRecord>,
}

fn kind_code(kind: RecordKind) -> u64 {
    match kind {
        RecordKind::TurnOnPlunger => 1,
        RecordKind::TurnOnSource => 2,
        RecordKind::TurnOnDrain => 3,
        RecordKind::BarrierMap => 4,
        RecordKind::Coulomb => 5,
        RecordKind::Diamond => 6,
        RecordKind::Custom => 7,
    }
}

fn file_name(row: usize, kind: RecordKind, col: Option<usize>) -> String {
    match col {
        Some(c) => format!("r{row:02}_{}_c{c:02}.dat", kind.as_str()),
        None => format!("r{row:02}_{}.dat", kind.as_str()),
    }
}

struct RowRun<'a> {
    sample: &'a Sample,
    plan: RoutingPlan,
    mcfg: &'a MeasureConfig,
    transport: &'a TransportConfig<f64>,
    seed: u64,
    out: Vec<(ManifestEntry, MeasurementRecord)>,
}

impl RowRun<'_> {
    fn sweep(
        &mut self,
        kind: RecordKind,
        col: Option<usize>,
        axes: Vec<Axis>,
        fixed: BTreeMap<Gate, f64>,
        channels: Vec<usize>,
    ) -> Result<&MeasurementRecord> {
        let row = self.plan.row;
        let seed = mix(&[
            self.seed,
            tag::RECORD,
            row as u64,
            kind_code(kind),
            col.unwrap_or(0) as u64,
        ]);
        let spec = SweepSpec {
            axes,
            fixed,
            v_sd: self.mcfg.v_sd,
            channels: channels.clone(),
            temperature: self.mcfg.temperature,
            shared_groups: Vec::new(),
        };
        let mut rec = run_sweep(self.sample, &self.plan, &spec, self.transport, seed)?;
        rec.kind = kind;
        rec.timestamp = format!("row{row:02}-step{:02}", self.out.len() + 1);
        let entry = ManifestEntry {
            file: file_name(row, kind, col),
            kind,
            row,
            channels,
            seed,
        };
        self.out.push((entry, rec));
        Ok(&self.out.last().unwrap().1)
    }
}

/// Threshold of each channel of a turn-on record, `None` where no converged turn-on.
pub(crate) fn turn_on_thresholds(rec: &MeasurementRecord) -> BTreeMap<usize, Option<f64>> {
    let v = rec.axis_values(0);
    rec.spec
        .channels
        .iter()
        .map(|&c| {
            let fit = fit_threshold(&v, rec.channel(c).unwrap()).ok();
            (c, fit.filter(|f| f.converged).map(|f| f.v_t))
        })
        .collect()
}

struct RowResult {
    out: Vec<(ManifestEntry, MeasurementRecord)>,
    summary: RowSummary,
    skipped: Vec<SkippedDot>,
}

fn measure_row(
    sample: &Sample,
    row: usize,
    protocol: Protocol,
    mcfg: &MeasureConfig,
    ecfg: &ExtractConfig,
    transport: &TransportConfig<f64>,
    seed: u64,
) -> Result<RowResult> {
    let n = sample.n();
    let plan = configure_row(sample, row)?;
    let (p, bs, bd) = (plan.plunger, plan.source_barrier, plan.drain_barrier);
    let mut run = RowRun {
        sample,
        plan,
        mcfg,
        transport,
        seed,
        out: Vec::new(),
    };
    let all: Vec<usize> = (1..=n).collect();
    let open = mcfg.open_bias;
    let mut summary = RowSummary {
        row,
        decision: None,
        diamond_windows: BTreeMap::new(),
        notes: Vec::new(),
    };

    // turn-on of each row gate with the other two held open
    let mut vts = Vec::new();
    for (kind, gate, range) in [
        (RecordKind::TurnOnPlunger, p, mcfg.plunger_range),
        (RecordKind::TurnOnSource, bs, mcfg.barrier_range),
        (RecordKind::TurnOnDrain, bd, mcfg.barrier_range),
    ] {
        let fixed = [p, bs, bd]
            .into_iter()
            .filter(|&g| g != gate)
            .map(|g| (g, open))
            .collect();
        let axis = Axis::new(Target::Gate(gate), range.0, range.1, mcfg.turn_on_points);
        let rec = run.sweep(kind, None, vec![axis], fixed, all.clone())?;
        vts.push(turn_on_thresholds(rec));
    }
    let mut skipped = Vec::new();
    let mut live = Vec::new();
    for &c in &all {
        let missing: Vec<&str> = ["plunger", "source barrier", "drain barrier"]
            .iter()
            .zip(&vts)
            .filter(|(_, m)| m[&c].is_none())
            .map(|(name, _)| *name)
            .collect();
        if missing.is_empty() {
            live.push(c);
        } else {
            skipped.push(SkippedDot {
                row,
                col: c,
                reason: format!("no turn-on of {}", missing.join(", ")),
            });
        }
    }
    if protocol == Protocol::TurnOn || live.is_empty() {
        return Ok(RowResult {
            out: run.out,
            summary,
            skipped,
        });
    }
    let vt_p = |c: usize| vts[0][&c].unwrap();
    let vt_p_max = live.iter().map(|&c| vt_p(c)).fold(f64::NEG_INFINITY, f64::max);
    let vt_p_min = live.iter().map(|&c| vt_p(c)).fold(f64::INFINITY, f64::min);

    // barrier map around the row's median barrier threshold
    let barrier_vts: Vec<f64> = live
        .iter()
        .flat_map(|&c| [vts[1][&c].unwrap(), vts[2][&c].unwrap()])
        .collect();
    let center = median(&barrier_vts).unwrap();
    let h = mcfg.map_half_span;
    let axes = vec![
        Axis::new(Target::Gate(bs), center - h, center + h, mcfg.map_points),
        Axis::new(Target::Gate(bd), center - h, center + h, mcfg.map_points),
    ];
    let fixed = BTreeMap::from([(p, vt_p_max + mcfg.map_plunger_margin)]);
    let map = run.sweep(RecordKind::BarrierMap, None, axes, fixed, live.clone())?;
    let sets: Vec<CandidateSet> = live
        .iter()
        .map(|&c| analyze_barrier_map(map, c, &ecfg.barrier_map).map(|a| CandidateSet::from(&a)))
        .collect::<Result<_>>()?;
    let decision = select_common_bias(&sets);

    // Coulomb traces: one for the shared bias, one per individually biased dot
    let mut biased: Vec<(usize, (f64, f64))> = Vec::new();
    // first full peak spacing above threshold; the bias reach follows from the
    // tip height alpha * spacing, with alpha from the thermal peak width
    let window = |ps: &PeakSpacing| {
        let d = ps.spacing();
        let reach = ps.thermal_alpha(mcfg.temperature).map_or(mcfg.diamond_vsd, |a| {
            (mcfg.diamond_reach * a.min(1.0) * d).clamp(mcfg.diamond_vsd_min, mcfg.diamond_vsd)
        });
        (ps.first - 0.5 * d, ps.second + 0.5 * d, reach)
    };
    let trace_points =
        |lo: f64, hi: f64| (((hi - lo) / mcfg.coulomb_step).ceil() as usize + 1).clamp(10, mcfg.coulomb_max_points);
    if let (Some(point), false) = (decision.shared_point, decision.shared_ok.is_empty()) {
        let (lo, hi) = (vt_p_min, vt_p_max + mcfg.coulomb_span);
        let axis = Axis::new(Target::Gate(p), lo, hi, trace_points(lo, hi));
        let fixed = BTreeMap::from([(bs, point.0), (bd, point.1)]);
        let rec = run.sweep(RecordKind::Coulomb, None, vec![axis], fixed, decision.shared_ok.clone())?;
        let v = rec.axis_values(0);
        for &c in &decision.shared_ok {
            match first_spacing(&v, rec.channel(c).unwrap(), vt_p(c)) {
                Some(ps) => {
                    summary.diamond_windows.insert(c, window(&ps));
                    biased.push((c, point));
                }
                None => summary.notes.push(format!("column {c}: fewer than two Coulomb peaks")),
            }
        }
    }
    for (&c, &point) in &decision.individual_points {
        let (lo, hi) = (vt_p(c), vt_p(c) + mcfg.coulomb_span);
        let axis = Axis::new(Target::Gate(p), lo, hi, trace_points(lo, hi));
        let fixed = BTreeMap::from([(bs, point.0), (bd, point.1)]);
        let rec = run.sweep(RecordKind::Coulomb, Some(c), vec![axis], fixed, vec![c])?;
        let v = rec.axis_values(0);
        match first_spacing(&v, rec.channel(c).unwrap(), vt_p(c)) {
            Some(ps) => {
                summary.diamond_windows.insert(c, window(&ps));
                biased.push((c, point));
            }
            None => summary.notes.push(format!("column {c}: fewer than two Coulomb peaks")),
        }
    }
    biased.sort_by_key(|b| b.0);

    for (c, point) in biased {
        let (lo, hi, reach) = summary.diamond_windows[&c];
        let axes = vec![
            Axis::new(Target::Gate(p), lo, hi, mcfg.diamond_points),
            Axis::new(Target::Vsd, -reach, reach, mcfg.diamond_points),
        ];
        let fixed = BTreeMap::from([(bs, point.0), (bd, point.1)]);
        run.sweep(RecordKind::Diamond, Some(c), axes, fixed, vec![c])?;
    }
    summary.decision = Some(decision);
    Ok(RowResult {
        out: run.out,
        summary,
        skipped,
    })
}

/// Runs the measurement protocol on every row. Rows are independent and run
/// in parallel; the result does not depend on scheduling.
pub fn measure_sample(
    sample: &Sample,
    protocol: Protocol,
    mcfg: &MeasureConfig,
    ecfg: &ExtractConfig,
    transport: &TransportConfig<f64>,
    seed: u64,
) -> Result<Campaign> {
    mcfg.validate()?;
    let rows: Vec<RowResult> = (1..=sample.n())
        .into_par_iter()
        .map(|row| measure_row(sample, row, protocol, mcfg, ecfg, transport, seed))
        .collect::<Result<_>>()?;
    let mut manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        sample_label: sample.label.clone(),
        measure_seed: seed,
        n: sample.n(),
        stack: sample.stack,
        protocol,
        records: Vec::new(),
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    let mut records = Vec::new();
    for r in rows {
        for (entry, rec) in r.out {
            manifest.records.push(entry);
            records.push(rec);
        }
        manifest.rows.push(r.summary);
        manifest.skipped.extend(r.skipped);
    }
    Ok(Campaign { manifest, records })
}

pub fn manifest_to_string(m: &Manifest) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn manifest_from_str(text: &str, path: &Path) -> Result<Manifest> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let h: Header = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
    if h.format != MANIFEST_FORMAT {
        return Err(Error::InvalidInput(format!(
            "{}: not a campaign manifest (format {:?})",
            path.display(),
            h.format
        )));
    }
    if h.version != MANIFEST_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "manifest",
            found: h.version,
            supported: MANIFEST_VERSION,
        });
    }
    serde_json::from_str(text).map_err(|e| Error::json(path, e))
}

/// Writes the manifest and every record into `dir`.
pub fn save_campaign(c: &Campaign, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (entry, rec) in c.manifest.records.iter().zip(&c.records) {
        save_record(rec, &dir.join(&entry.file))?;
    }
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest_to_string(&c.manifest)).map_err(|e| Error::io(&path, e))
}

pub fn load_campaign(dir: &Path) -> Result<Campaign> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = manifest_from_str(&text, &path)?;
    let records = manifest
        .records
        .par_iter()
        .map(|e| load_record(&dir.join(&e.file)))
        .collect::<Result<_>>()?;
    Ok(Campaign { manifest, records })
}
