use std::path::Path;

use serde::{Deserialize, Serialize};

use super::disorder::{DisorderConfig, DotPopulation};
use super::physics::{plunger_capacitance, ArrayGeometry, OxideStack, PhysicalConstants};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::rng::{tag, Stream};

/// Which barrier of a dot a spurious dot couples through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierSide {
    Source,
    Drain,
}

/// Ground-truth parameters of one intended dot. Rows and columns are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct DotGroundTruth<T = f64> {
    pub row: usize,
    pub col: usize,
    /// Plunger threshold (V).
    pub vt_plunger: T,
    /// Threshold of the source-barrier segment B_row in this column (V).
    pub vt_bs: T,
    /// Threshold of the drain-barrier segment B_{row+1} in this column (V).
    pub vt_bd: T,
    /// Plunger capacitance (aF).
    pub c_p: T,
    /// Total capacitance (aF).
    pub c_sigma: T,
    /// Peak conductance prefactor (S).
    pub gmax: T,
    pub lever_bs: T,
    pub lever_bd: T,
}

impl<T: Real> DotGroundTruth<T> {
    pub fn alpha(&self) -> T {
        self.c_p / self.c_sigma
    }

    /// Charging energy e²/C_Σ in meV.
    pub fn charging_energy_mev(&self) -> T {
        PhysicalConstants::<T>::si().e_af_volts() / self.c_sigma * T::lit(1e3)
    }

    /// Plunger-voltage spacing of consecutive Coulomb peaks, e/C_P (V).
    pub fn peak_period(&self) -> T {
        PhysicalConstants::<T>::si().e_af_volts() / self.c_p
    }
}

/// An unintended dot beneath a barrier segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct SpuriousDotSpec<T = f64> {
    /// Index k of the barrier gate B_k it sits under (1..=n+1).
    pub barrier_index: usize,
    pub col: usize,
    pub coupling_lever: T,
    /// Oscillation period in the host barrier's voltage (V).
    pub period: T,
    /// Current modulation depth in [0, 1].
    pub depth: T,
}

impl<T: Real> SpuriousDotSpec<T> {
    /// The barrier through which this spurious dot affects dot `(row, col)`:
    /// the drain side of the row above it and the source side of the row below.
    pub fn couples_to(&self, row: usize, col: usize) -> Option<BarrierSide> {
        if col != self.col {
            None
        } else if row == self.barrier_index {
            Some(BarrierSide::Source)
        } else if row + 1 == self.barrier_index {
            Some(BarrierSide::Drain)
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > T::zero()) || !(self.depth >= T::zero() && self.depth <= T::one()) {
            return Err(Error::InvalidConfig(format!(
                "spurious dot needs period > 0 and depth in [0, 1], got {} and {}",
                self.period, self.depth
            )));
        }
        Ok(())
    }
}

/// Everything needed to synthesize a sample, apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct SampleSpec<T = f64> {
    pub label: String,
    pub geometry: ArrayGeometry<T>,
    pub stack: OxideStack<T>,
    pub disorder: DisorderConfig<T>,
    pub population: DotPopulation<T>,
    /// Columns whose channel never turns on (1-based).
    pub dead_columns: Vec<usize>,
}

impl<T: Real> SampleSpec<T> {
    pub fn new(label: impl Into<String>, stack: OxideStack<T>) -> Self {
        SampleSpec {
            label: label.into(),
            geometry: ArrayGeometry::default(),
            stack,
            disorder: DisorderConfig::default(),
            population: DotPopulation::default(),
            dead_columns: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.stack.validate()?;
        self.disorder.validate()?;
        self.population.validate()?;
        if let Some(&c) = self.dead_columns.iter().find(|&&c| c == 0 || c > self.geometry.n) {
            return Err(Error::InvalidConfig(format!(
                "dead column {c} outside 1..={}",
                self.geometry.n
            )));
        }
        Ok(())
    }
}

/// A synthesized array with its full ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct SampleInstance<T = f64> {
    pub label: String,
    pub seed: u64,
    pub geometry: ArrayGeometry<T>,
    pub stack: OxideStack<T>,
    /// Row-major n x n grid.
    pub dots: Vec<DotGroundTruth<T>>,
    /// Barrier segment thresholds, indexed `[k - 1][col - 1]` for B_k, k in 1..=n+1.
    pub barrier_vts: Vec<Vec<T>>,
    pub spurious: Vec<SpuriousDotSpec<T>>,
    pub dead_columns: Vec<usize>,
}

impl<T: Real> SampleInstance<T> {
    pub fn n(&self) -> usize {
        self.geometry.n
    }

    pub fn dot(&self, row: usize, col: usize) -> Option<&DotGroundTruth<T>> {
        let n = self.n();
        if row == 0 || col == 0 || row > n || col > n {
            return None;
        }
        self.dots.get((row - 1) * n + (col - 1))
    }

    pub fn dot_mut(&mut self, row: usize, col: usize) -> Option<&mut DotGroundTruth<T>> {
        let n = self.n();
        if row == 0 || col == 0 || row > n || col > n {
            return None;
        }
        self.dots.get_mut((row - 1) * n + (col - 1))
    }

    pub fn barrier_vt(&self, barrier: usize, col: usize) -> Option<T> {
        if barrier == 0 || col == 0 {
            return None;
        }
        self.barrier_vts.get(barrier - 1)?.get(col - 1).copied()
    }

    /// Spurious dots acting on dot `(row, col)` together with the coupled side.
    pub fn spurious_for(&self, row: usize, col: usize) -> Vec<(BarrierSide, SpuriousDotSpec<T>)> {
        self.spurious
            .iter()
            .filter_map(|s| s.couples_to(row, col).map(|side| (side, *s)))
            .collect()
    }

    pub fn is_dead_column(&self, col: usize) -> bool {
        self.dead_columns.contains(&col)
    }

    /// Adds a spurious dot by hand (used for controlled experiments).
    pub fn inject_spurious(&mut self, spec: SpuriousDotSpec<T>) -> Result<()> {
        spec.validate()?;
        let n = self.n();
        if spec.barrier_index == 0 || spec.barrier_index > n + 1 || spec.col == 0 || spec.col > n {
            return Err(Error::Addressing(format!(
                "spurious dot at B{} column {} is outside the {n}x{n} array",
                spec.barrier_index, spec.col
            )));
        }
        self.spurious.push(spec);
        Ok(())
    }
}

fn draw_threshold(stream: &mut Stream, mean: f64, sigma_mv: f64, outlier_prob: f64, outlier_scale: f64) -> f64 {
    let widened = stream.bernoulli(outlier_prob);
    let z = stream.normal();
    let scale = if widened { outlier_scale } else { 1.0 };
    mean + z * sigma_mv * scale * 1e-3
}

/// `mean · (1 + rel · z)` redrawn until it lands in `(lo, hi)` (clamped after 64 tries).
fn draw_relative(stream: &mut Stream, mean: f64, rel: f64, lo: f64, hi: f64) -> f64 {
    if rel == 0.0 {
        return mean;
    }
    for _ in 0..64 {
        let v = mean * (1.0 + rel * stream.normal());
        if v > lo && v < hi {
            return v;
        }
    }
    mean.clamp(lo, hi)
}

/// Draws a reproducible ground-truth sample.
pub fn synthesize_sample<T: Real>(spec: &SampleSpec<T>, seed: u64) -> Result<SampleInstance<T>> {
    spec.validate()?;
    let constants = PhysicalConstants::<T>::si();
    let n = spec.geometry.n;
    let f = |x: T| x.to_f64_lossy();
    let t = |x: f64| T::lit(x);
    let dis = &spec.disorder;
    let pop = &spec.population;
    let (t1, t2, t3) = (spec.stack.t1, spec.stack.t2(), spec.stack.t3());

    let sigma_p = f(dis.plunger.sigma_vt(t1, t2)?);
    let sigma_b = f(dis.barrier_law().sigma_vt(t1, t3)?);
    let (p_out, s_out) = (f(dis.outlier_prob), f(dis.outlier_scale));
    let c_pp = f(plunger_capacitance(spec.geometry.dot_area(), t2, &constants)?);
    let p_spurious = f(dis.spurious_probability(t1));

    let mut spurious = Vec::new();
    for k in 1..=n + 1 {
        for col in 1..=n {
            let mut s = Stream::new(seed, tag::SPURIOUS, k as u64, col as u64);
            if !s.bernoulli(p_spurious) {
                continue;
            }
            let (p0, p1) = dis.spurious_period;
            let (d0, d1) = dis.spurious_depth;
            let (l0, l1) = dis.spurious_lever;
            spurious.push(SpuriousDotSpec {
                barrier_index: k,
                col,
                period: t(s.uniform_in(f(p0), f(p1))),
                depth: t(s.uniform_in(f(d0), f(d1))),
                coupling_lever: t(s.uniform_in(f(l0), f(l1))),
            });
        }
    }

    let shift = f(dis.spurious_vt_shift) * 1e-3;
    let barrier_vts: Vec<Vec<T>> = (1..=n + 1)
        .map(|k| {
            (1..=n)
                .map(|col| {
                    let mut s = Stream::new(seed, tag::VT_BARRIER, k as u64, col as u64);
                    let mut vt = draw_threshold(&mut s, f(dis.mean_vt_barrier), sigma_b, p_out, s_out);
                    if shift > 0.0 && spurious.iter().any(|sp| sp.barrier_index == k && sp.col == col) {
                        vt += shift;
                    }
                    t(vt)
                })
                .collect()
        })
        .collect();

    let mut dots = Vec::with_capacity(n * n);
    for row in 1..=n {
        for col in 1..=n {
            let (r, c) = (row as u64, col as u64);
            let vt_plunger = draw_threshold(
                &mut Stream::new(seed, tag::VT_PLUNGER, r, c),
                f(dis.mean_vt_plunger),
                sigma_p,
                p_out,
                s_out,
            );
            let c_p = draw_relative(
                &mut Stream::new(seed, tag::C_PLUNGER, r, c),
                c_pp,
                f(pop.cp_rel_spread),
                0.05 * c_pp,
                f64::INFINITY,
            );
            let alpha = draw_relative(
                &mut Stream::new(seed, tag::LEVER_ARM, r, c),
                f(pop.alpha_mean),
                f(pop.alpha_rel_spread),
                0.01,
                0.99,
            );
            let gmax_mean = f(pop.gmax_mean);
            let gmax = draw_relative(
                &mut Stream::new(seed, tag::GMAX, r, c),
                gmax_mean,
                f(pop.gmax_rel_spread),
                0.05 * gmax_mean,
                f64::INFINITY,
            );
            let mut levers = Stream::new(seed, tag::BARRIER_LEVERS, r, c);
            let lever_spread = f(pop.lever_rel_spread);
            let lever_bs = draw_relative(&mut levers, f(pop.lever_bs), lever_spread, 0.0, 1.0);
            let lever_bd = draw_relative(&mut levers, f(pop.lever_bd), lever_spread, 0.0, 1.0);
            dots.push(DotGroundTruth {
                row,
                col,
                vt_plunger: t(vt_plunger),
                vt_bs: barrier_vts[row - 1][col - 1],
                vt_bd: barrier_vts[row][col - 1],
                c_p: t(c_p),
                c_sigma: t(c_p / alpha),
                gmax: t(gmax),
                lever_bs: t(lever_bs),
                lever_bd: t(lever_bd),
            });
        }
    }

    let mut dead_columns = spec.dead_columns.clone();
    dead_columns.sort_unstable();
    dead_columns.dedup();
    Ok(SampleInstance {
        label: spec.label.clone(),
        seed,
        geometry: spec.geometry,
        stack: spec.stack,
        dots,
        barrier_vts,
        spurious,
        dead_columns,
    })
}

pub const SAMPLE_FORMAT: &str = "qdarray-sample";
pub const SAMPLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SampleFile<S> {
    format: String,
    version: u32,
    sample: S,
}

/// Versioned JSON text of a sample.
pub fn sample_to_string(sample: &SampleInstance<f64>) -> String {
    let file = SampleFile {
        format: SAMPLE_FORMAT.to_string(),
        version: SAMPLE_VERSION,
        sample,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("sample serializes");
    s.push('\n');
    s
}

pub fn sample_from_str(text: &str, path: &Path) -> Result<SampleInstance<f64>> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let header: Header = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
    if header.format != SAMPLE_FORMAT {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("not a sample file (format {:?})", header.format),
        });
    }
    if header.version != SAMPLE_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "sample",
            found: header.version,
            supported: SAMPLE_VERSION,
        });
    }
    let file: SampleFile<SampleInstance<f64>> = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
    Ok(file.sample)
}

pub fn save_sample(sample: &SampleInstance<f64>, path: &Path) -> Result<()> {
    std::fs::write(path, sample_to_string(sample)).map_err(|e| Error::io(path, e))
}

pub fn load_sample(path: &Path) -> Result<SampleInstance<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    sample_from_str(&text, path)
}
