use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::StatsConfig;
use crate::error::{Error, Result};
use crate::extraction::ExtractionReport;
use crate::model::BarrierSide;
use crate::statistics::{
    fit_parallel_plate, gaussian_sigma_filtered, outcomes, probit_transform, variability_curve, yield_metrics,
    CapFitResult, GateFamily, SigmaMethod, ThresholdSet, VariabilityTable, YieldReport,
};

pub const STUDY_FORMAT: &str = "qdarray-study";
pub const STUDY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSummary {
    pub count: usize,
    pub mean: f64,
    pub sigma: f64,
    pub sigma_tilde: f64,
    pub mu_filtered: f64,
}

impl SigmaSummary {
    fn of(values: &[f64], method: SigmaMethod) -> Option<Self> {
        let r = gaussian_sigma_filtered(values, method).ok()?;
        Some(SigmaSummary {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            sigma: r.sigma_raw?,
            sigma_tilde: r.sigma_filtered?,
            mu_filtered: r.mu_filtered?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub label: String,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub yields: YieldReport,
    pub plunger: Option<SigmaSummary>,
    pub barrier: Option<SigmaSummary>,
    /// Mean plunger capacitance of dots passing the thermal gate (aF).
    pub mean_c_p: Option<f64>,
    pub c_p_count: usize,
    /// Fitted diamonds left out by the thermal gate.
    pub c_p_excluded: usize,
    /// Dots with at least one spurious-dot detection.
    pub spurious: usize,
}

/// Pooled mean plunger capacitance of all samples sharing a t1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapPoint {
    pub t1: f64,
    pub mean_c_p: f64,
    pub count: usize,
}

/// Probit coordinates of one sample's thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSeries {
    pub sample: String,
    pub family: GateFamily,
    pub values: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub format: String,
    pub version: u32,
    pub sigma_method: SigmaMethod,
    pub central_only: bool,
    pub min_thermal_ratio: f64,
    pub samples: Vec<SampleStats>,
    pub capacitance_points: Vec<CapPoint>,
    pub capacitance: Option<CapFitResult>,
    pub variability: Option<VariabilityTable>,
    pub cdfs: Vec<CdfSeries>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Plunger and barrier thresholds of one sample.
///
/// A barrier segment B_k is seen from both neighbouring rows (as the drain of
/// row k-1 and the source of row k); the two readings are averaged. With
/// `central_only`, edge rows and columns are dropped and only inner barriers
/// are kept.
pub fn threshold_set(report: &ExtractionReport, central_only: bool) -> ThresholdSet {
    let n = report.n;
    let inner = |i: usize| !central_only || (i > 1 && i < n);
    let plunger = report
        .dots
        .iter()
        .filter(|d| inner(d.row) && inner(d.col))
        .filter_map(|d| d.vt_plunger)
        .collect();

    let mut segments: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for d in report.dots.iter().filter(|d| inner(d.col)) {
        for (side, vt) in [(BarrierSide::Source, d.vt_bs), (BarrierSide::Drain, d.vt_bd)] {
            let k = match side {
                BarrierSide::Source => d.row,
                BarrierSide::Drain => d.row + 1,
            };
            if central_only && (k < 2 || k > n) {
                continue;
            }
            if let Some(v) = vt {
                segments.entry((k, d.col)).or_default().push(v);
            }
        }
    }
    let barrier = segments
        .values()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    ThresholdSet {
        label: report.sample_label.clone(),
        stack: report.stack,
        plunger,
        barrier,
    }
}

/// Plunger capacitances that pass the thermal gate, and the number rejected.
pub fn gated_capacitances(report: &ExtractionReport, min_thermal_ratio: f64) -> (Vec<f64>, usize) {
    let mut kept = Vec::new();
    let mut excluded = 0;
    for d in &report.dots {
        let Some(c) = d.c_p() else { continue };
        if min_thermal_ratio <= 0.0 || d.thermal_ratio.is_some_and(|r| r >= min_thermal_ratio) {
            kept.push(c);
        } else {
            excluded += 1;
        }
    }
    (kept, excluded)
}

/// Array-level statistics across samples. Sections that need more data than
/// is available are left empty with a note rather than failing the study.
/// Samples are ordered by t1 and label, so the input order does not matter.
pub fn summarize(reports: &[ExtractionReport], cfg: &StatsConfig) -> Result<StudyReport> {
    if reports.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut reports: Vec<&ExtractionReport> = reports.iter().collect();
    reports.sort_by(|a, b| {
        a.stack
            .t1
            .total_cmp(&b.stack.t1)
            .then(a.sample_label.cmp(&b.sample_label))
    });
    let method = cfg.sigma_method;
    let mut notes = Vec::new();
    let mut samples = Vec::new();
    let mut sets = Vec::new();
    let mut cdfs = Vec::new();
    let mut pooled: Vec<(f64, f64, usize)> = Vec::new();

    for r in reports {
        let set = threshold_set(r, cfg.central_only);
        let (c_p, c_p_excluded) = gated_capacitances(r, cfg.min_thermal_ratio);
        let mean_c_p = (!c_p.is_empty()).then(|| c_p.iter().sum::<f64>() / c_p.len() as f64);
        if !c_p.is_empty() {
            let t1 = r.stack.t1;
            match pooled.iter_mut().find(|p| (p.0 - t1).abs() <= 1e-9 * t1) {
                Some(p) => {
                    p.1 += c_p.iter().sum::<f64>();
                    p.2 += c_p.len();
                }
                None => pooled.push((t1, c_p.iter().sum(), c_p.len())),
            }
        }
        for (family, values) in [(GateFamily::Plunger, &set.plunger), (GateFamily::Barrier, &set.barrier)] {
            if let Ok(p) = probit_transform(values) {
                cdfs.push(CdfSeries {
                    sample: r.sample_label.clone(),
                    family,
                    values: p.sorted_values,
                    z: p.z_scores,
                });
            }
        }
        samples.push(SampleStats {
            label: r.sample_label.clone(),
            t1: r.stack.t1,
            t2: r.stack.t2(),
            t3: r.stack.t3(),
            yields: yield_metrics(&outcomes(r)),
            plunger: SigmaSummary::of(&set.plunger, method),
            barrier: SigmaSummary::of(&set.barrier, method),
            mean_c_p,
            c_p_count: c_p.len(),
            c_p_excluded,
            spurious: r.dots.iter().filter(|d| !d.spurious.is_empty()).count(),
        });
        sets.push(set);
    }

    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let capacitance_points: Vec<CapPoint> = pooled
        .iter()
        .map(|&(t1, sum, count)| CapPoint {
            t1,
            mean_c_p: sum / count as f64,
            count,
        })
        .collect();
    let capacitance = if capacitance_points.len() < 2 {
        notes.push("capacitance fit needs samples with at least two distinct t1".into());
        None
    } else {
        let pts: Vec<(f64, f64)> = capacitance_points.iter().map(|p| (p.t1, p.mean_c_p)).collect();
        match fit_parallel_plate(&pts) {
            Ok(fit) => Some(fit),
            Err(e) => {
                notes.push(format!("capacitance fit: {e}"));
                None
            }
        }
    };

    let variability = if sets.len() < 2 {
        notes.push("variability curve needs at least two samples".into());
        None
    } else {
        match variability_curve(&sets, method) {
            Ok(t) => Some(t),
            Err(e) => {
                notes.push(format!("variability curve: {e}"));
                None
            }
        }
    };

    Ok(StudyReport {
        format: STUDY_FORMAT.into(),
        version: STUDY_VERSION,
        sigma_method: method,
        central_only: cfg.central_only,
        min_thermal_ratio: cfg.min_thermal_ratio,
        samples,
        capacitance_points,
        capacitance,
        variability,
        cdfs,
        notes,
    })
}

pub fn study_to_string(report: &StudyReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("study serializes");
    s.push('\n');
    s
}

fn family_name(f: GateFamily) -> &'static str {
    match f {
        GateFamily::Plunger => "plunger",
        GateFamily::Barrier => "barrier",
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `study.json` and the CSV tables into `dir`.
pub fn write_tables(report: &StudyReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("study.json");
    std::fs::write(&path, study_to_string(report)).map_err(|e| Error::io(&path, e))?;

    let rows = report
        .samples
        .iter()
        .map(|s| {
            let sig = |x: &Option<SigmaSummary>| {
                [
                    x.map_or(0, |x| x.count).to_string(),
                    opt(x.map(|x| x.sigma)),
                    opt(x.map(|x| x.sigma_tilde)),
                ]
            };
            let mut r = vec![
                s.label.clone(),
                s.t1.to_string(),
                s.t2.to_string(),
                s.t3.to_string(),
                s.yields.measured.to_string(),
                s.yields.shared_ok.to_string(),
                s.yields.individual_ok.to_string(),
                s.yields.row_shared_yield.to_string(),
                s.yields.total_yield.to_string(),
            ];
            r.extend(sig(&s.plunger));
            r.extend(sig(&s.barrier));
            r.extend([
                opt(s.mean_c_p),
                s.c_p_count.to_string(),
                s.c_p_excluded.to_string(),
                s.spurious.to_string(),
            ]);
            r
        })
        .collect();
    write_csv(
        &dir.join("samples.csv"),
        &[
            "sample",
            "t1",
            "t2",
            "t3",
            "measured",
            "shared_ok",
            "individual_ok",
            "row_shared_yield",
            "total_yield",
            "plunger_count",
            "plunger_sigma",
            "plunger_sigma_tilde",
            "barrier_count",
            "barrier_sigma",
            "barrier_sigma_tilde",
            "mean_c_p",
            "c_p_count",
            "c_p_excluded",
            "spurious",
        ],
        rows,
    )?;

    let rows = report
        .cdfs
        .iter()
        .flat_map(|c| {
            c.values.iter().zip(&c.z).map(|(v, z)| {
                vec![
                    c.sample.clone(),
                    family_name(c.family).into(),
                    v.to_string(),
                    z.to_string(),
                ]
            })
        })
        .collect();
    write_csv(&dir.join("cdf.csv"), &["sample", "family", "vt", "z"], rows)?;

    let rows = report
        .capacitance_points
        .iter()
        .map(|p| vec![p.t1.to_string(), p.mean_c_p.to_string(), p.count.to_string()])
        .collect();
    write_csv(&dir.join("capacitance.csv"), &["t1", "mean_c_p", "count"], rows)?;

    let path = dir.join("variability.csv");
    let Some(v) = &report.variability else {
        // a table left over from an earlier study would no longer match study.json
        return match std::fs::remove_file(&path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(&path, e)),
            _ => Ok(()),
        };
    };
    let rows = v
        .points
        .iter()
        .map(|p| {
            vec![
                family_name(p.family).into(),
                p.t_gate.to_string(),
                p.sigma.to_string(),
                p.sigma_tilde.to_string(),
                p.count.to_string(),
                p.samples.join(";"),
            ]
        })
        .collect();
    write_csv(
        &path,
        &["family", "t_gate", "sigma", "sigma_tilde", "count", "samples"],
        rows,
    )?;
    Ok(())
}
