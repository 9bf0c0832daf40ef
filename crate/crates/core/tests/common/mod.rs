#![allow(dead_code)]

use std::collections::BTreeMap;

use qdarray::instrument::{configure_row, run_sweep, Axis, Gate, MeasurementRecord, SweepSpec, Target};
use qdarray::model::{synthesize_sample, DisorderConfig, DotPopulation, OxideStack, SampleSpec};
use qdarray::transport::{diamond_at, DiamondGeometry, TransportConfig};
use qdarray::Sample;

/// A 7x7 sample whose dots all equal the mean dot.
pub fn uniform_sample() -> Sample {
    let mut spec = SampleSpec::new("uniform", OxideStack::new(12.0, 4.5, 0.8).unwrap());
    spec.disorder = DisorderConfig::zero();
    spec.population = DotPopulation::uniform();
    synthesize_sample(&spec, 1).unwrap()
}

pub fn noiseless() -> TransportConfig<f64> {
    TransportConfig {
        noise_rel: 0.0,
        ..TransportConfig::default()
    }
}

/// Barrier voltages that put the dot in the Coulomb-blockade regime.
pub fn blockade_barriers(sample: &Sample, row: usize, col: usize) -> (f64, f64) {
    let d = sample.dot(row, col).unwrap();
    (d.vt_bs - 0.05, d.vt_bd - 0.05)
}

/// Scan of one diamond of `(row, col)` with plunger margin of half a width on
/// each side and bias up to `bias_reach` tip heights.
pub fn diamond_scan(
    sample: &Sample,
    row: usize,
    col: usize,
    level: usize,
    points: usize,
    bias_reach: f64,
    temperature: f64,
    transport: &TransportConfig<f64>,
    seed: u64,
) -> (MeasurementRecord, DiamondGeometry<f64>) {
    let (v_bs, v_bd) = blockade_barriers(sample, row, col);
    let truth = diamond_at(sample.dot(row, col).unwrap(), level, v_bs, v_bd);
    let plan = configure_row(sample, row).unwrap();
    let vmax = bias_reach * truth.height;
    let spec = SweepSpec {
        axes: vec![
            Axis::new(
                Target::Gate(Gate::P(row)),
                truth.left - 0.5 * truth.width,
                truth.right + 0.5 * truth.width,
                points,
            ),
            Axis::new(Target::Vsd, -vmax, vmax, points),
        ],
        fixed: BTreeMap::from([(Gate::B(row), v_bs), (Gate::B(row + 1), v_bd)]),
        v_sd: 1e-4,
        channels: vec![col],
        temperature,
        shared_groups: vec![],
    };
    (run_sweep(sample, &plan, &spec, transport, seed).unwrap(), truth)
}

/// Barrier map of row `row`, all columns, `±half` around `center`.
pub fn barrier_map(
    sample: &Sample,
    row: usize,
    center: f64,
    half: f64,
    points: usize,
    v_plunger: f64,
    transport: &TransportConfig<f64>,
    seed: u64,
) -> MeasurementRecord {
    let plan = configure_row(sample, row).unwrap();
    let spec = SweepSpec {
        axes: vec![
            Axis::new(Target::Gate(Gate::B(row)), center - half, center + half, points),
            Axis::new(Target::Gate(Gate::B(row + 1)), center - half, center + half, points),
        ],
        fixed: BTreeMap::from([(Gate::P(row), v_plunger)]),
        v_sd: 1e-4,
        channels: (1..=sample.n()).collect(),
        temperature: 1.4,
        shared_groups: vec![],
    };
    run_sweep(sample, &plan, &spec, transport, seed).unwrap()
}
