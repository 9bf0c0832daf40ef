//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any of them fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use qdarray::extraction::{detect_spurious, fit_diamond, fit_threshold, BiasMode, DiamondParams, SpuriousParams};
use qdarray::instrument::{configure_row, line_budget, run_sweep, Axis, Gate, RecordKind, SweepSpec, Target};
use qdarray::model::{
    plunger_capacitance, synthesize_sample, BarrierSide, DisorderConfig, OxideStack, PhysicalConstants, SampleSpec,
    SpuriousDotSpec,
};
use qdarray::num::median;
use qdarray::pipeline::{
    extract_campaign, measure_configured, measure_sample, parse_pipeline_config, save_campaign, summarize,
    synth_samples, ExtractConfig, MeasureConfig, PipelineConfig, Protocol,
};
use qdarray::statistics::{
    electron_temperature, fit_electron_temperature, fit_parallel_plate, gaussian_sigma_filtered, yield_metrics,
    DotOutcome, ETempConfig, GateFamily, PeakTrace, SigmaMethod,
};
use qdarray::transport::{peak_position, TransportConfig};

use common::{blockade_barriers, diamond_scan, noiseless, uniform_sample};

type Outcome = (bool, String);

const T1S: [f64; 4] = [8.0, 12.0, 15.0, 20.0];

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn diamond_round_trip() -> Outcome {
    let start = Instant::now();
    let e = PhysicalConstants::<f64>::si().e_af_volts();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dots: Vec<(f64, f64)> = (0..50)
        .map(|_| (rng.random_range(0.05..=0.5), rng.random_range(1.0..=8.0)))
        .collect();
    let errs: Vec<Result<(f64, f64, f64), String>> = dots
        .par_iter()
        .enumerate()
        .map(|(i, &(alpha, e_c))| {
            let mut s = uniform_sample();
            let d = s.dot_mut(4, 2).unwrap();
            d.c_sigma = e / (e_c * 1e-3);
            d.c_p = alpha * d.c_sigma;
            let truth = *s.dot(4, 2).unwrap();
            let (rec, _) = diamond_scan(&s, 4, 2, 0, 101, 2.0, 0.1, &noiseless(), i as u64);
            let fit = fit_diamond(&rec, 2, &DiamondParams::default()).map_err(|err| format!("dot {i}: {err}"))?;
            let identity = rel(fit.alpha, fit.c_p / fit.c_sigma).max(rel(fit.e_c, 1e3 * e / fit.c_sigma));
            Ok((rel(fit.c_p, truth.c_p), rel(fit.c_sigma, truth.c_sigma), identity))
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for r in errs {
        match r {
            Ok((a, b, c)) => worst = (worst.0.max(a), worst.1.max(b), worst.2.max(c)),
            Err(msg) => return (false, msg),
        }
    }
    let ok = worst.0 < 0.02 && worst.1 < 0.02 && worst.2 < 1e-9 && secs < 60.0;
    (
        ok,
        format!(
            "50 dots, worst C_P {:.2}%, C_sigma {:.2}%, identities {:.1e}, {secs:.1} s",
            100.0 * worst.0,
            100.0 * worst.1,
            worst.2
        ),
    )
}

fn sigmoid(v: f64, vt: f64, k: f64, imax: f64) -> f64 {
    imax / (1.0 + (-k * (v - vt)).exp())
}

fn threshold_round_trip() -> Outcome {
    let v: Vec<f64> = (0..201).map(|j| -1.0 + 3.5 * j as f64 / 200.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut errs = Vec::new();
    for _ in 0..100 {
        let vt = rng.random_range(0.3..1.2);
        let k = rng.random_range(10.0..40.0);
        let imax = rng.random_range(0.5e-9..5e-9);
        let noise = Normal::new(0.0, 0.02 * imax).unwrap();
        let i: Vec<f64> = v
            .iter()
            .map(|&x| sigmoid(x, vt, k, imax) + noise.sample(&mut rng))
            .collect();
        match fit_threshold(&v, &i) {
            Ok(f) => errs.push((f.v_t - vt).abs()),
            Err(_) => errs.push(f64::INFINITY),
        }
    }
    errs.sort_by(f64::total_cmp);
    let p95 = errs[94];
    let clean: Vec<f64> = v.iter().map(|&x| sigmoid(x, 0.64, 20.0, 1e-9)).collect();
    let vt = fit_threshold(&v, &clean).map_or(f64::NAN, |f| f.v_t);
    let ok = p95 < 5e-3 && (vt - 0.64).abs() <= 1e-3;
    (
        ok,
        format!("95th percentile error {:.2} mV, noiseless V_t {vt:.4} V", 1e3 * p95),
    )
}

fn probit_estimator() -> Outcome {
    let sigma = 0.063;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let core = Normal::new(0.0, sigma).unwrap();
    let wide = Normal::new(0.0, 8.0 * sigma).unwrap();
    let clean: Vec<f64> = (0..10_000).map(|_| core.sample(&mut rng)).collect();
    let dirty: Vec<f64> = (0..10_000)
        .map(|_| {
            if rng.random_bool(0.1) {
                wide.sample(&mut rng)
            } else {
                core.sample(&mut rng)
            }
        })
        .collect();
    let c = gaussian_sigma_filtered(&clean, SigmaMethod::Slope).unwrap();
    let d = gaussian_sigma_filtered(&dirty, SigmaMethod::Slope).unwrap();
    let (cf, df, dr) = (
        c.sigma_filtered.unwrap(),
        d.sigma_filtered.unwrap(),
        d.sigma_raw.unwrap(),
    );
    let ok = rel(cf, sigma) <= 0.03 && rel(df, sigma) <= 0.10 && dr >= 1.5 * sigma;
    (
        ok,
        format!(
            "clean {:.1} mV; contaminated filtered {:.1} mV ({:+.1}%), raw {:.1} mV",
            1e3 * cf,
            1e3 * df,
            100.0 * (df / sigma - 1.0),
            1e3 * dr
        ),
    )
}

fn study_toml(seed: u64, protocol: &str, samples_per_t1: usize, extra: &str) -> String {
    let mut text = format!("seed = {seed}\nprotocol = \"{protocol}\"\n");
    for t1 in T1S {
        for k in 0..samples_per_t1 {
            text += &format!("\n[[samples]]\nlabel = \"S{t1}{k}\"\nstack = {{ t1 = {t1} }}\n{extra}");
        }
    }
    text
}

fn run_study(
    cfg: &PipelineConfig,
) -> qdarray::Result<(Vec<qdarray::pipeline::Campaign>, qdarray::pipeline::StudyReport)> {
    let samples = synth_samples(cfg)?;
    let campaigns: Vec<_> = samples
        .par_iter()
        .map(|s| measure_configured(cfg, s))
        .collect::<qdarray::Result<_>>()?;
    let reports: Vec<_> = campaigns
        .par_iter()
        .map(|c| extract_campaign(c, &cfg.extraction))
        .collect::<qdarray::Result<_>>()?;
    let study = summarize(&reports, &cfg.statistics)?;
    Ok((campaigns, study))
}

fn non_monotonic_variability() -> Outcome {
    let seeds = 20u64;
    let minima: Vec<Option<f64>> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let cfg = parse_pipeline_config(&study_toml(seed, "turn-on", 2, ""), Path::new("c4.toml")).ok()?;
            let (_, study) = run_study(&cfg).ok()?;
            let table = study.variability?;
            let counts_ok = table.family(GateFamily::Plunger).all(|p| p.count >= 25);
            counts_ok.then(|| table.minimum(GateFamily::Plunger).map(|p| p.t_gate))?
        })
        .collect();
    let hits = minima
        .iter()
        .filter(|m| m.is_some_and(|t| (t - 19.5).abs() < 1e-9))
        .count();
    let mut where_ = BTreeMap::new();
    for m in &minima {
        *where_
            .entry(m.map_or("none".to_string(), |t| format!("{t}")))
            .or_insert(0) += 1;
    }
    let frac = hits as f64 / seeds as f64;
    (
        frac >= 0.9,
        format!("minimum at t2 = 19.5 nm in {hits}/{seeds} seeds; minima by t2: {where_:?}"),
    )
}

fn capacitance_calibration() -> Outcome {
    let (area, delta2) = (3733.0, 4.5);
    let k = PhysicalConstants::si();
    let exact: Vec<(f64, f64)> = T1S
        .iter()
        .map(|&t1| (t1, plunger_capacitance(area, t1 + delta2, &k).unwrap()))
        .collect();
    let clean = fit_parallel_plate(&exact).unwrap();
    let exact_ok = rel(clean.area, area) < 1e-9 && (clean.delta2 - delta2).abs() < 1e-9;

    let geometry = format!("geometry = {{ dot_width = {}, dot_length = 70.0 }}\n", area / 70.0);
    let cfg = match parse_pipeline_config(&study_toml(5, "full", 1, &geometry), Path::new("c5.toml")) {
        Ok(c) => c,
        Err(e) => return (false, format!("config: {e}")),
    };
    let fit = match run_study(&cfg) {
        Ok((_, study)) => study.capacitance,
        Err(e) => return (false, format!("pipeline: {e}")),
    };
    let Some(fit) = fit else {
        return (false, "no capacitance fit".into());
    };
    let ok = exact_ok && rel(fit.area, area) <= 0.05 && rel(fit.delta2, delta2) <= 0.05;
    (
        ok,
        format!(
            "pipeline A = {:.0} nm2, delta2 = {:.3} nm (configured 3733, 4.5); noiseless exact: {exact_ok}",
            fit.area, fit.delta2
        ),
    )
}

fn electron_temperature_fit() -> Outcome {
    let consts = PhysicalConstants::<f64>::si();
    let (t0, v_sd, e_c, delta_e) = (1.4, 2e-5, 4.0, 0.7);
    let cfg = ETempConfig::default();
    let t_sd = cfg.eta * v_sd / consts.k_b;
    let mut s = uniform_sample();
    let d = s.dot_mut(3, 3).unwrap();
    d.c_sigma = consts.e_af_volts() / (e_c * 1e-3);
    d.c_p = 0.165 * d.c_sigma;
    let dot = *s.dot(3, 3).unwrap();
    let (v_bs, v_bd) = blockade_barriers(&s, 3, 3);
    let center = peak_position(&dot, 1, v_bs, v_bd);
    let plan = configure_row(&s, 3).unwrap();
    let transport = TransportConfig::default();
    let traces: Vec<PeakTrace> = [0.2, 0.5, 1.0, 2.0, 3.0]
        .iter()
        .enumerate()
        .map(|(i, &tf)| {
            let te = electron_temperature(t0, tf, t_sd);
            let half = 4.0 * 3.5255 * consts.k_b * te / dot.alpha();
            let spec = SweepSpec {
                axes: vec![Axis::new(Target::Gate(Gate::P(3)), center - half, center + half, 201)],
                fixed: BTreeMap::from([(Gate::B(3), v_bs), (Gate::B(4), v_bd)]),
                v_sd,
                channels: vec![3],
                temperature: te,
                shared_groups: vec![],
            };
            let rec = run_sweep(&s, &plan, &spec, &transport, 60 + i as u64).unwrap();
            PeakTrace {
                t_fridge: tf,
                v_plunger: rec.axis_values(0),
                conductance: rec.channel(3).unwrap().iter().map(|i| i / v_sd).collect(),
            }
        })
        .collect();
    match fit_electron_temperature(&traces, dot.alpha(), v_sd, delta_e, e_c, &cfg) {
        Ok(r) => (
            rel(r.t0_fit, t0) <= 0.05 && r.valid_regime,
            format!("t0 = {:.3} K (true 1.4), valid_regime = {}", r.t0_fit, r.valid_regime),
        ),
        Err(e) => (false, format!("fit failed: {e}")),
    }
}

/// Row, column and axis of every spurious detection in rows 2..=5.
fn spurious_detections(seed: u64) -> Vec<(usize, usize, BarrierSide)> {
    let mut spec = SampleSpec::new("sp", OxideStack::new(15.0, 4.5, 0.8).unwrap());
    spec.disorder = DisorderConfig {
        spurious_rate_coeff: 0.0,
        ..DisorderConfig::default()
    };
    let mut s = synthesize_sample(&spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dis = &spec.disorder;
    s.inject_spurious(SpuriousDotSpec {
        barrier_index: 4,
        col: 3,
        coupling_lever: rng.random_range(dis.spurious_lever.0..=dis.spurious_lever.1),
        period: rng.random_range(dis.spurious_period.0..=dis.spurious_period.1),
        depth: 0.5,
    })
    .unwrap();
    let m = MeasureConfig::default();
    let params = SpuriousParams::default();
    let mut found = Vec::new();
    for row in 2..=5 {
        // the map is placed as the measurement protocol places it
        let dots: Vec<_> = (1..=s.n()).map(|c| *s.dot(row, c).unwrap()).collect();
        let barriers: Vec<f64> = dots.iter().flat_map(|d| [d.vt_bs, d.vt_bd]).collect();
        let center = median(&barriers).unwrap();
        let vp = dots.iter().map(|d| d.vt_plunger).fold(f64::NEG_INFINITY, f64::max) + m.map_plunger_margin;
        let rec = common::barrier_map(
            &s,
            row,
            center,
            m.map_half_span,
            m.map_points,
            vp,
            &TransportConfig::default(),
            seed * 10 + row as u64,
        );
        for col in 1..=s.n() {
            for d in detect_spurious(&rec, col, &params).unwrap() {
                found.push((row, col, d.axis));
            }
        }
    }
    found
}

fn spurious_logic() -> Outcome {
    let want = vec![(3, 3, BarrierSide::Drain), (4, 3, BarrierSide::Source)];
    let results: Vec<Vec<_>> = (0..20u64).into_par_iter().map(spurious_detections).collect();
    let bad: Vec<String> = results
        .iter()
        .enumerate()
        .filter(|(_, f)| **f != want)
        .map(|(seed, f)| format!("seed {seed}: {f:?}"))
        .collect();
    (
        bad.is_empty(),
        format!(
            "{}/20 seeds detect exactly row 3 drain and row 4 source of column 3 {}",
            20 - bad.len(),
            bad.join("; ")
        ),
    )
}

fn yield_accounting() -> Outcome {
    let o = |measured, mode, diamond_ok| DotOutcome {
        measured,
        mode,
        diamond_ok,
    };
    let mut outcomes = vec![o(true, BiasMode::Shared, true); 45];
    outcomes.extend([o(true, BiasMode::Individual, true); 3]);
    outcomes.push(o(true, BiasMode::Failed, false));
    outcomes.push(o(false, BiasMode::Failed, false));
    let y = yield_metrics(&outcomes);
    let exact = y.measured == 49 && y.row_shared_yield == 45.0 / 49.0 && y.total_yield == 48.0 / 49.0;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let modes = [BiasMode::Shared, BiasMode::Individual, BiasMode::Failed];
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.random_range(0..100);
        let outs: Vec<DotOutcome> = (0..n)
            .map(|_| {
                o(
                    rng.random_bool(0.9),
                    modes[rng.random_range(0..3)],
                    rng.random_bool(0.8),
                )
            })
            .collect();
        let y = yield_metrics(&outs);
        let measured = outs.iter().filter(|d| d.measured).count();
        let count = |m| {
            outs.iter()
                .filter(|d| d.measured && d.diamond_ok && d.mode == m)
                .count()
        };
        let frac = |k: usize| if measured == 0 { 0.0 } else { k as f64 / measured as f64 };
        let (s, i) = (count(BiasMode::Shared), count(BiasMode::Individual));
        if y.total_yield < y.row_shared_yield || y.row_shared_yield != frac(s) || y.total_yield != frac(s + i) {
            violations += 1;
        }
    }
    (
        exact && violations == 0,
        format!(
            "48/49 -> {:.4}; {violations} violations in 1000 random campaigns",
            y.total_yield
        ),
    )
}

fn protocol_arithmetic() -> Outcome {
    let budget = line_budget(7);
    let spec = SampleSpec::new("p", OxideStack::new(12.0, 4.5, 0.8).unwrap());
    let s = synthesize_sample(&spec, 9).unwrap();
    let ecfg = ExtractConfig::default();
    let c = match measure_sample(
        &s,
        Protocol::Full,
        &MeasureConfig::default(),
        &ecfg,
        &TransportConfig::default(),
        9,
    ) {
        Ok(c) => c,
        Err(e) => return (false, format!("campaign: {e}")),
    };
    // step count from the decisions recorded per row
    let (mut turn_on, mut maps, mut coulomb, mut diamonds) = (0, 0, 0, 0);
    for row in &c.manifest.rows {
        turn_on += 3;
        if let Some(d) = &row.decision {
            maps += 1;
            coulomb += usize::from(d.shared_point.is_some() && !d.shared_ok.is_empty()) + d.individual_points.len();
            diamonds += row.diamond_windows.len();
        }
    }
    let m = &c.manifest;
    let kinds = [
        (RecordKind::TurnOnPlunger, 7),
        (RecordKind::TurnOnSource, 7),
        (RecordKind::TurnOnDrain, 7),
        (RecordKind::BarrierMap, maps),
        (RecordKind::Coulomb, coulomb),
        (RecordKind::Diamond, diamonds),
    ];
    let per_kind = kinds.iter().all(|&(k, want)| m.count(k) == want);
    let steps = turn_on + maps + coulomb + diamonds;
    let dir = tempfile::tempdir().unwrap();
    save_campaign(&c, dir.path()).unwrap();
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    let ok = budget == 31 && per_kind && m.records.len() == steps && c.records.len() == steps && files == steps + 1;
    (
        ok,
        format!(
            "line_budget(7) = {budget}; {steps} steps ({turn_on} turn-on, {maps} maps, {coulomb} Coulomb, {diamonds} diamonds), {} manifest entries, {files} files",
            m.records.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("diamond round-trip", diamond_round_trip),
        ("threshold round-trip", threshold_round_trip),
        ("probit estimator", probit_estimator),
        ("non-monotonic variability", non_monotonic_variability),
        ("capacitance calibration", capacitance_calibration),
        ("electron temperature", electron_temperature_fit),
        ("spurious-dot logic", spurious_logic),
        ("yield accounting", yield_accounting),
        ("protocol arithmetic", protocol_arithmetic),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = check();
        failed += usize::from(!ok);
        println!(
            "criterion {} {name}: {} ({detail}) [{:.1} s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
