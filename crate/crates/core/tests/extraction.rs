mod common;

use qdarray::extraction::{
    analyze_barrier_map, detect_spurious, select_common_bias, BarrierMapParams, CandidateSet, SpuriousParams,
};
use qdarray::model::{synthesize_sample, BarrierSide, OxideStack, SampleSpec, SpuriousDotSpec};
use qdarray::pipeline::{extract_campaign, measure_sample, ExtractConfig, MeasureConfig, Protocol};
use qdarray::transport::TransportConfig;

use common::{barrier_map, noiseless, uniform_sample};

#[test]
fn uniform_row_shares_one_bias_point() {
    let s = uniform_sample();
    let d = s.dot(4, 4).unwrap();
    let rec = barrier_map(
        &s,
        4,
        d.vt_bs,
        0.35,
        121,
        d.vt_plunger + 0.2,
        &TransportConfig::default(),
        5,
    );
    let sets: Vec<CandidateSet> = (1..=7)
        .map(|c| CandidateSet::from(&analyze_barrier_map(&rec, c, &BarrierMapParams::default()).unwrap()))
        .collect();
    assert!(sets.iter().all(|s| !s.points.is_empty()));
    let decision = select_common_bias(&sets);
    assert_eq!(decision.shared_ok, (1..=7).collect::<Vec<_>>());
    let (bs, bd) = decision.shared_point.unwrap();
    // the operating point sits in the blockade window, below the point where the dot dissolves
    let open = TransportConfig::<f64>::default().open_offset;
    assert!(bs < d.vt_bs + open && bd < d.vt_bd + open, "({bs}, {bd})");
}

#[test]
fn spurious_modulation_is_reported_on_its_own_axis_only() {
    for (k, side, depth, period) in [
        (3, BarrierSide::Source, 0.3, 0.05),
        (4, BarrierSide::Drain, 0.5, 0.03),
        (3, BarrierSide::Source, 0.9, 0.08),
    ] {
        let mut s = uniform_sample();
        s.inject_spurious(SpuriousDotSpec {
            barrier_index: k,
            col: 2,
            coupling_lever: 0.1,
            period,
            depth,
        })
        .unwrap();
        let d = s.dot(3, 2).unwrap();
        // 0.7 V span: at least 4 periods for every case
        let rec = barrier_map(
            &s,
            3,
            d.vt_bs,
            0.35,
            201,
            d.vt_plunger + 0.2,
            &TransportConfig::default(),
            17,
        );
        let found = detect_spurious(&rec, 2, &SpuriousParams::default()).unwrap();
        assert_eq!(found.len(), 1, "{found:?}");
        assert_eq!(found[0].axis, side, "B_{k} period {period}: {found:?}");
        assert!(
            (found[0].period / period - 1.0).abs() < 0.1,
            "{} vs {period}",
            found[0].period
        );
        for c in [1, 3, 7] {
            assert!(
                detect_spurious(&rec, c, &SpuriousParams::default()).unwrap().is_empty(),
                "column {c}"
            );
        }
    }
}

#[test]
fn campaign_recovers_ground_truth() {
    let spec = SampleSpec::new("t", OxideStack::new(15.0, 4.5, 0.8).unwrap());
    let s = synthesize_sample(&spec, 21).unwrap();
    let ecfg = ExtractConfig::default();
    let c = measure_sample(
        &s,
        Protocol::Full,
        &MeasureConfig::default(),
        &ecfg,
        &TransportConfig::default(),
        4,
    )
    .unwrap();
    let r = extract_campaign(&c, &ecfg).unwrap();

    let mut worst: f64 = 0.0;
    let mut cp_err = Vec::new();
    for d in r.dots.iter().filter(|d| d.measured) {
        let g = s.dot(d.row, d.col).unwrap();
        for (got, want) in [(d.vt_plunger, g.vt_plunger), (d.vt_bs, g.vt_bs), (d.vt_bd, g.vt_bd)] {
            worst = worst.max((got.expect("threshold fitted") - want).abs());
        }
        if let (Some(cp), Some(ratio)) = (d.c_p(), d.thermal_ratio) {
            if ratio >= 16.0 {
                cp_err.push(cp / g.c_p - 1.0);
            }
        }
    }
    assert!(worst < 5e-3, "worst threshold error {worst} V");
    assert!(cp_err.len() >= 30, "{} diamonds", cp_err.len());
    let mean = cp_err.iter().sum::<f64>() / cp_err.len() as f64;
    assert!(mean.abs() < 0.01, "mean C_P error {mean}");
    assert!(cp_err.iter().all(|e| e.abs() < 0.1), "{cp_err:?}");
}

#[test]
fn noiseless_turn_on_protocol_is_exact() {
    let spec = SampleSpec::new("t", OxideStack::new(12.0, 4.5, 0.8).unwrap());
    let s = synthesize_sample(&spec, 2).unwrap();
    let ecfg = ExtractConfig::default();
    let c = measure_sample(&s, Protocol::TurnOn, &MeasureConfig::default(), &ecfg, &noiseless(), 0).unwrap();
    assert_eq!(c.records.len(), 3 * 7);
    let r = extract_campaign(&c, &ecfg).unwrap();
    for d in &r.dots {
        let g = s.dot(d.row, d.col).unwrap();
        assert!(
            (d.vt_plunger.unwrap() - g.vt_plunger).abs() < 1e-3,
            "{:?}",
            (d.row, d.col)
        );
    }
}
