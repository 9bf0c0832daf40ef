use qdarray::model::{
    plunger_capacitance, sample_from_str, sample_to_string, synthesize_sample, ArrayGeometry, DisorderConfig,
    OxideStack, PhysicalConstants, SampleSpec,
};

fn big_spec(t1: f64) -> SampleSpec {
    let mut spec = SampleSpec::new("big", OxideStack::new(t1, 4.5, 0.8).unwrap());
    spec.geometry = ArrayGeometry {
        n: 100,
        ..ArrayGeometry::default()
    };
    spec.disorder = DisorderConfig {
        outlier_prob: 0.0,
        ..DisorderConfig::default()
    };
    spec
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[test]
fn threshold_spread_matches_the_variability_law() {
    for t1 in [8.0, 15.0, 20.0] {
        let spec = big_spec(t1);
        let s = synthesize_sample(&spec, 99).unwrap();
        let n = s.dots.len();
        assert_eq!(n, 10_000);

        let vt: Vec<f64> = s.dots.iter().map(|d| d.vt_plunger).collect();
        let want = spec.disorder.plunger.sigma_vt(t1, spec.stack.t2()).unwrap() * 1e-3;
        // standard error of a sample standard deviation
        let se = want / (2.0 * (n as f64 - 1.0)).sqrt();
        let got = std_dev(&vt);
        assert!((got - want).abs() < 3.0 * se, "t1 {t1}: plunger {got} vs {want}");

        let vb: Vec<f64> = s.barrier_vts.iter().flatten().copied().collect();
        let want = spec.disorder.barrier_law().sigma_vt(t1, spec.stack.t3()).unwrap() * 1e-3;
        let se = want / (2.0 * (vb.len() as f64 - 1.0)).sqrt();
        let got = std_dev(&vb);
        assert!((got - want).abs() < 3.0 * se, "t1 {t1}: barrier {got} vs {want}");
    }
}

#[test]
fn mean_plunger_capacitance_is_parallel_plate() {
    let spec = big_spec(12.0);
    let s = synthesize_sample(&spec, 5).unwrap();
    let k = PhysicalConstants::si();
    let want = plunger_capacitance(spec.geometry.dot_area(), spec.stack.t2(), &k).unwrap();
    let mean = s.dots.iter().map(|d| d.c_p).sum::<f64>() / s.dots.len() as f64;
    let rel = spec.population.cp_rel_spread / (s.dots.len() as f64).sqrt();
    assert!((mean / want - 1.0).abs() < 4.0 * rel, "{mean} vs {want}");
    // ε0 3.9 A / t2 with A = 3500 nm², t2 = 16.5 nm
    assert!((want - 7.325).abs() < 0.01, "{want}");
}

#[test]
fn synthesis_is_deterministic_and_serializes_exactly() {
    let spec = SampleSpec::new("d", OxideStack::new(15.0, 4.5, 0.8).unwrap());
    let a = synthesize_sample(&spec, 42).unwrap();
    let b = synthesize_sample(&spec, 42).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, synthesize_sample(&spec, 43).unwrap());
    let text = sample_to_string(&a);
    assert_eq!(sample_from_str(&text, "d.json".as_ref()).unwrap(), a);
    assert_eq!(text, sample_to_string(&b));
}

#[test]
fn neighbouring_dots_share_barrier_segments() {
    let spec = SampleSpec::new("s", OxideStack::new(12.0, 4.5, 0.8).unwrap());
    let s = synthesize_sample(&spec, 8).unwrap();
    for row in 1..s.n() {
        for col in 1..=s.n() {
            let above = s.dot(row, col).unwrap();
            let below = s.dot(row + 1, col).unwrap();
            assert_eq!(above.vt_bd, below.vt_bs);
            assert_eq!(Some(above.vt_bd), s.barrier_vt(row + 1, col));
        }
    }
}
