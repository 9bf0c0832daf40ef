use std::collections::BTreeMap;

use super::config::ExtractConfig;
use super::measure::{turn_on_thresholds, Campaign};
use crate::error::Result;
use crate::extraction::{
    analyze_barrier_map, detect_spurious, first_spacing, fit_diamond, select_common_bias, BiasMode, CandidateSet,
    DotExtraction, ExtractionReport, RowDecision,
};
use crate::instrument::{MeasurementRecord, RecordKind};

/// Re-derives every per-dot quantity from the records of a campaign. Uses only
/// the records and the manifest, never the sample ground truth.
pub fn extract_campaign(campaign: &Campaign, cfg: &ExtractConfig) -> Result<ExtractionReport> {
    let m = &campaign.manifest;
    let mut report = ExtractionReport::new(m.sample_label.clone(), m.n, m.stack);
    for row in 1..=m.n {
        let recs: Vec<(&super::measure::ManifestEntry, &MeasurementRecord)> = m
            .records
            .iter()
            .zip(&campaign.records)
            .filter(|(e, _)| e.row == row)
            .collect();
        let find = |kind: RecordKind| recs.iter().find(|(e, _)| e.kind == kind).map(|(_, r)| *r);
        let thresholds = |kind| find(kind).map(turn_on_thresholds).unwrap_or_default();
        let (tp, ts, td) = (
            thresholds(RecordKind::TurnOnPlunger),
            thresholds(RecordKind::TurnOnSource),
            thresholds(RecordKind::TurnOnDrain),
        );

        let mut dots: BTreeMap<usize, DotExtraction> = (1..=m.n)
            .map(|c| {
                let mut d = DotExtraction::unmeasured(row, c);
                d.measured = !m.is_skipped(row, c);
                d.vt_plunger = tp.get(&c).copied().flatten();
                d.vt_bs = ts.get(&c).copied().flatten();
                d.vt_bd = td.get(&c).copied().flatten();
                (c, d)
            })
            .collect();

        if let Some(map) = find(RecordKind::BarrierMap) {
            let mut sets = Vec::new();
            for &c in &map.spec.channels {
                let a = analyze_barrier_map(map, c, &cfg.barrier_map)?;
                sets.push(CandidateSet::from(&a));
                dots.get_mut(&c).unwrap().spurious = detect_spurious(map, c, &cfg.spurious)?;
            }
            let decision = select_common_bias(&sets);
            for (&c, d) in dots.iter_mut().filter(|(_, d)| d.measured) {
                if decision.shared_ok.contains(&c) {
                    d.bias_mode = BiasMode::Shared;
                    d.bias_point = decision.shared_point;
                } else if let Some(&p) = decision.individual_points.get(&c) {
                    d.bias_mode = BiasMode::Individual;
                    d.bias_point = Some(p);
                }
            }
            report.rows.push(RowDecision { row, decision });
        }

        for (_, rec) in recs.iter().filter(|(e, _)| e.kind == RecordKind::Coulomb) {
            let v = rec.axis_values(0);
            for &c in &rec.spec.channels {
                let d = dots.get_mut(&c).unwrap();
                let above = d.vt_plunger.unwrap_or(f64::NEG_INFINITY);
                d.thermal_ratio = first_spacing(&v, rec.channel(c).unwrap(), above).and_then(|p| p.thermal_ratio());
            }
        }
        for (e, rec) in recs.iter().filter(|(e, _)| e.kind == RecordKind::Diamond) {
            for &c in &e.channels {
                let d = dots.get_mut(&c).unwrap();
                match fit_diamond(rec, c, &cfg.diamond) {
                    Ok(fit) => d.diamond = Some(fit),
                    Err(err) => d.notes.push(format!("diamond: {err}")),
                }
            }
        }
        for d in dots.values_mut().filter(|d| d.measured) {
            if d.bias_mode != BiasMode::Failed && d.diamond.is_none() && d.notes.is_empty() {
                d.notes.push("no diamond record".into());
            }
        }
        if let Some(s) = m.rows.iter().find(|s| s.row == row) {
            for note in &s.notes {
                if let Some(c) = note
                    .strip_prefix("column ")
                    .and_then(|r| r.split(':').next())
                    .and_then(|c| c.parse::<usize>().ok())
                {
                    if let Some(d) = dots.get_mut(&c) {
                        d.notes.retain(|n| n != "no diamond record");
                        d.notes.push(note.clone());
                    }
                }
            }
        }
        for s in m.skipped.iter().filter(|s| s.row == row) {
            dots.get_mut(&s.col).unwrap().notes.push(s.reason.clone());
        }
        report.dots.extend(dots.into_values());
    }
    Ok(report)
}
