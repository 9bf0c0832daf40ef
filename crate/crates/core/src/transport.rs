//! Constant-interaction transport through one dot of the array.
//!
//! Energies are in eV and voltages in V, so a potential of `x` volts on an
//! electron is `x` eV. Detuning of level `n` is
//!
//! `ε_n = α (V_P - v_n) + λ_s (V_Bs - Vt_s) + λ_d (V_Bd - Vt_d)`,
//! `v_n = Vt_P + (n + ½) e / C_P`.
//!
//! Current through the dot is
//!
//! `I = G Γ_P Γ_s Γ_d [(1 - w) V + w Σ_n 4 k_B T (f(ε_n - V/2) - f(ε_n + V/2))] Π m_k`
//!
//! with `w = (1 - Γ'_s)(1 - Γ'_d)` the blockade weight of a dot formed between the
//! two barriers. `Γ'` is the barrier turn-on shifted up by `open_offset`: a
//! barrier conducts well before it is open enough to merge the dot with its lead. In linear response the sum reduces to `V cosh⁻²(ε_n / 2 k_B T)`.

use serde::{Deserialize, Serialize};

use crate::model::{BarrierSide, DotGroundTruth, PhysicalConstants, SpuriousDotSpec};
use crate::num::{fermi, logistic, sech2, Real};

/// One operating point of a dot. Voltages in V, temperature in K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint<T = f64> {
    pub v_plunger: T,
    pub v_bs: T,
    pub v_bd: T,
    pub v_sd: T,
    pub temperature: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakShape<T = f64> {
    /// S
    pub gmax: T,
    /// K
    pub t0: T,
}

/// Forward-model options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct TransportConfig<T = f64> {
    /// Logistic softness of barrier and plunger turn-on (1/V).
    pub softness: T,
    /// Current-noise σ relative to the open-channel current `gmax · |V_ref|`.
    pub noise_rel: T,
    /// How far above its threshold a barrier must be before the dot dissolves (V).
    pub open_offset: T,
}

impl<T: Real> Default for TransportConfig<T> {
    fn default() -> Self {
        TransportConfig {
            softness: T::lit(20.0),
            noise_rel: T::lit(0.01),
            open_offset: T::lit(0.2),
        }
    }
}

impl<T: Real> TransportConfig<T> {
    /// Noise σ (A) for a dot, referenced to the nominal bias `v_ref`.
    pub fn noise_sigma(&self, dot: &DotGroundTruth<T>, v_ref: T) -> T {
        self.noise_rel * dot.gmax * v_ref.abs()
    }
}

/// `G_max cosh⁻²(Δε / 2 k_B T_0)`.
pub fn coulomb_peak_conductance<T: Real>(delta_eps: T, shape: &PeakShape<T>) -> T {
    let kt = PhysicalConstants::<T>::si().k_b * shape.t0;
    shape.gmax * sech2(delta_eps / (kt + kt))
}

/// Plunger voltage of the `n`-th Coulomb peak with barriers at the given voltages.
pub fn peak_position<T: Real>(dot: &DotGroundTruth<T>, n_level: usize, v_bs: T, v_bd: T) -> T {
    let shift = barrier_shift(dot, v_bs, v_bd) / dot.alpha();
    dot.vt_plunger + (T::from_usize(n_level).unwrap() + T::lit(0.5)) * dot.peak_period() - shift
}

fn barrier_shift<T: Real>(dot: &DotGroundTruth<T>, v_bs: T, v_bd: T) -> T {
    dot.lever_bs * (v_bs - dot.vt_bs) + dot.lever_bd * (v_bd - dot.vt_bd)
}

/// Detuning (eV) of level `n_level` from the Fermi level at `bias`.
pub fn dot_detuning<T: Real>(dot: &DotGroundTruth<T>, bias: &BiasPoint<T>, n_level: usize) -> T {
    let v_n = dot.vt_plunger + (T::from_usize(n_level).unwrap() + T::lit(0.5)) * dot.peak_period();
    dot.alpha() * (bias.v_plunger - v_n) + barrier_shift(dot, bias.v_bs, bias.v_bd)
}

/// A diamond edge `V_P = x0 + slope · V_sd` in the (plunger, bias) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeLine<T = f64> {
    pub x0: T,
    pub slope: T,
}

impl<T: Real> EdgeLine<T> {
    pub fn at(&self, v_sd: T) -> T {
        self.x0 + self.slope * v_sd
    }

    /// Bias at which two edges cross.
    pub fn intersect_bias(&self, other: &EdgeLine<T>) -> Option<T> {
        let ds = self.slope - other.slope;
        if ds == T::zero() {
            None
        } else {
            Some((other.x0 - self.x0) / ds)
        }
    }
}

/// Analytic Coulomb diamond between peaks `n_level` and `n_level + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiamondGeometry<T = f64> {
    /// Zero-bias plunger voltages of the left and right vertices.
    pub left: T,
    pub right: T,
    /// Plunger width `e / C_P` (V).
    pub width: T,
    /// Tip height `e / C_Σ` (V).
    pub height: T,
    pub alpha: T,
    /// meV
    pub e_c: T,
    /// Left-positive, left-negative, right-positive, right-negative edges.
    pub edges: [EdgeLine<T>; 4],
}

/// Diamond of `dot` with barriers at their thresholds.
pub fn diamond_boundaries<T: Real>(dot: &DotGroundTruth<T>, n_level: usize) -> DiamondGeometry<T> {
    diamond_at(dot, n_level, dot.vt_bs, dot.vt_bd)
}

/// Diamond of `dot` with barriers at `(v_bs, v_bd)`.
pub fn diamond_at<T: Real>(dot: &DotGroundTruth<T>, n_level: usize, v_bs: T, v_bd: T) -> DiamondGeometry<T> {
    let left = peak_position(dot, n_level, v_bs, v_bd);
    let width = dot.peak_period();
    let right = left + width;
    let alpha = dot.alpha();
    let s = T::one() / (alpha + alpha);
    DiamondGeometry {
        left,
        right,
        width,
        height: alpha * width,
        alpha,
        e_c: dot.charging_energy_mev(),
        edges: [
            EdgeLine { x0: left, slope: s },
            EdgeLine { x0: left, slope: -s },
            EdgeLine { x0: right, slope: -s },
            EdgeLine { x0: right, slope: s },
        ],
    }
}

/// Logistic turn-on of a gate.
pub fn barrier_transmission<T: Real>(v_b: T, vt_b: T, softness: T) -> T {
    logistic(softness * (v_b - vt_b))
}

/// Current factor of a spurious dot, `1 - depth · sin²(π V / period)`, where `V`
/// is the voltage of the barrier it couples through.
pub fn spurious_modulation<T: Real>(spec: &SpuriousDotSpec<T>, v_barrier: T) -> T {
    let s = (T::PI() * v_barrier / spec.period).sin();
    T::one() - spec.depth * s * s
}

/// Product of all spurious factors acting on a dot at the given barrier voltages.
pub fn spurious_factor<T: Real>(spurious: &[(BarrierSide, SpuriousDotSpec<T>)], v_bs: T, v_bd: T) -> T {
    spurious.iter().fold(T::one(), |acc, (side, spec)| {
        let v = match side {
            BarrierSide::Source => v_bs,
            BarrierSide::Drain => v_bd,
        };
        acc * spurious_modulation(spec, v)
    })
}

/// Noiseless current (A) through `dot` at `bias`.
pub fn dot_current<T: Real>(
    dot: &DotGroundTruth<T>,
    spurious: &[(BarrierSide, SpuriousDotSpec<T>)],
    bias: &BiasPoint<T>,
    cfg: &TransportConfig<T>,
) -> T {
    let v = bias.v_sd;
    if v == T::zero() {
        return T::zero();
    }
    let k = cfg.softness;
    let g_p = barrier_transmission(bias.v_plunger, dot.vt_plunger, k);
    let g_s = barrier_transmission(bias.v_bs, dot.vt_bs, k);
    let g_d = barrier_transmission(bias.v_bd, dot.vt_bd, k);
    let w = (T::one() - barrier_transmission(bias.v_bs, dot.vt_bs + cfg.open_offset, k))
        * (T::one() - barrier_transmission(bias.v_bd, dot.vt_bd + cfg.open_offset, k));
    let prefactor = dot.gmax * g_p * g_s * g_d * spurious_factor(spurious, bias.v_bs, bias.v_bd);
    if prefactor == T::zero() {
        return T::zero();
    }
    let blockade = if w > T::zero() { level_sum(dot, bias) } else { T::zero() };
    prefactor * ((T::one() - w) * v + w * blockade)
}

/// `Σ_n 4 k_B T (f(ε_n - V/2) - f(ε_n + V/2))` over the levels that contribute.
fn level_sum<T: Real>(dot: &DotGroundTruth<T>, bias: &BiasPoint<T>) -> T {
    let kt = PhysicalConstants::<T>::si().k_b * bias.temperature;
    let half = bias.v_sd / T::lit(2.0);
    let e_c = dot.alpha() * dot.peak_period();
    let eps0 = dot_detuning(dot, bias, 0);
    // ε_n = eps0 - n E_C; only levels within the bias window plus a thermal tail matter
    let reach = half.abs() + T::lit(40.0) * kt;
    let lo = ((eps0 - reach) / e_c).ceil().max(T::zero());
    let hi = ((eps0 + reach) / e_c).floor();
    if hi < lo {
        return T::zero();
    }
    let lo = lo.to_usize().unwrap_or(0);
    let hi = hi.to_usize().unwrap_or(lo).min(lo + 100_000);
    let four_kt = T::lit(4.0) * kt;
    (lo..=hi)
        .map(|n| {
            let eps = eps0 - T::from_usize(n).unwrap() * e_c;
            four_kt * (fermi((eps - half) / kt) - fermi((eps + half) / kt))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const K_B: f64 = 8.617_333_262e-5;
    const E_AF: f64 = 0.160_217_663_4;

    pub(crate) fn test_dot(c_p: f64, c_sigma: f64) -> DotGroundTruth<f64> {
        DotGroundTruth {
            row: 1,
            col: 1,
            vt_plunger: 0.64,
            vt_bs: 0.9,
            vt_bd: 0.9,
            c_p,
            c_sigma,
            gmax: 2e-6,
            lever_bs: 0.05,
            lever_bd: 0.05,
        }
    }

    fn bias(v_p: f64, v_sd: f64) -> BiasPoint<f64> {
        BiasPoint {
            v_plunger: v_p,
            v_bs: 0.9,
            v_bd: 0.9,
            v_sd,
            temperature: 1.4,
        }
    }

    #[test]
    fn peak_shape_values() {
        let shape = PeakShape { gmax: 3e-6, t0: 1.4 };
        assert_eq!(coulomb_peak_conductance(0.0, &shape), 3e-6);
        let x_half = 2.0 * K_B * 1.4 * (1.0 + 2f64.sqrt()).ln();
        let g = coulomb_peak_conductance(x_half, &shape);
        assert!((g / 3e-6 - 0.5).abs() < 1e-12);
        let fwhm = 2.0 * x_half;
        assert!((fwhm / (K_B * 1.4) - 3.5255).abs() < 1e-4);
        assert!((fwhm * 1e3 - 0.425).abs() < 0.001);
    }

    #[test]
    fn detuning_identities() {
        let dot = test_dot(3.0, 40.0);
        let period = E_AF / 3.0;
        assert!((period - 0.0534).abs() < 1e-4);
        let p2 = peak_position(&dot, 2, 0.9, 0.9);
        assert!(dot_detuning(&dot, &bias(p2, 0.0), 2).abs() < 1e-15);
        let d0 = dot_detuning(&dot, &bias(p2, 0.0), 2);
        let d1 = dot_detuning(&dot, &bias(p2 + period, 0.0), 2);
        let e_c = E_AF / 40.0;
        assert!(((d1 - d0) - e_c).abs() < 1e-14);
    }

    #[test]
    fn diamond_oracle_values() {
        let g: DiamondGeometry<f64> = diamond_boundaries(&test_dot(3.0, 40.0), 0);
        assert!((g.width - 0.0534059).abs() < 1e-6);
        assert!((g.height - 0.0040054).abs() < 1e-6);
        assert!((g.alpha - 0.075).abs() < 1e-15);
        assert!((g.e_c - 4.0054).abs() < 1e-3);
        assert!((g.width * g.alpha - g.height).abs() < 1e-15);
        // edges meet at the tips
        let tip = g.edges[0].intersect_bias(&g.edges[2]).unwrap();
        assert!((tip - g.height).abs() < 1e-12);
        assert!((g.edges[0].at(tip) - (g.left + g.right) / 2.0).abs() < 1e-12);

        let same: DiamondGeometry<f64> = diamond_boundaries(&test_dot(5.0, 5.0), 0);
        assert!((same.width - same.height).abs() < 1e-15);

        let a = diamond_boundaries(&test_dot(3.0, 40.0), 0);
        let b = diamond_boundaries(&test_dot(3.0, 80.0), 0);
        assert_eq!(a.width, b.width);
        assert!((b.height - a.height / 2.0).abs() < 1e-15);
    }

    #[test]
    fn transmission_values() {
        assert_eq!(barrier_transmission(0.3_f64, 0.3, 20.0), 0.5);
        assert!((barrier_transmission(0.4_f64, 0.3, 20.0) - 0.880797).abs() < 1e-6);
        assert!(barrier_transmission(100.0_f64, 0.3, 20.0) > 1.0 - 1e-12);
        assert!(barrier_transmission(-100.0_f64, 0.3, 20.0) < 1e-12);
    }

    #[test]
    fn spurious_modulation_extremes() {
        let mut s: SpuriousDotSpec<f64> = SpuriousDotSpec {
            barrier_index: 2,
            col: 1,
            coupling_lever: 0.1,
            period: 0.04,
            depth: 0.0,
        };
        assert_eq!(spurious_modulation(&s, 0.913), 1.0);
        s.depth = 0.5;
        assert!((spurious_modulation(&s, 0.02) - 0.5).abs() < 1e-12);
        assert!((spurious_modulation(&s, 0.04) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_bias_and_pinch_off() {
        let dot: DotGroundTruth<f64> = test_dot(5.0, 30.0);
        let cfg = TransportConfig::default();
        assert_eq!(dot_current(&dot, &[], &bias(0.8, 0.0), &cfg), 0.0);
        let open = dot.gmax * 1e-4;
        let mut b = bias(0.8, 1e-4);
        b.v_bs = 0.0;
        b.v_bd = 0.0;
        assert!(dot_current(&dot, &[], &b, &cfg).abs() < 1e-6 * open);
    }

    #[test]
    fn linear_response_reduces_to_peak_shape() {
        // barriers pinched enough that w ≈ 1: I / (G Γ...) → V cosh⁻²(ε / 2kT)
        let dot: DotGroundTruth<f64> = test_dot(5.0, 30.0);
        let v = 1e-6;
        let b0 = bias(0.0, v);
        let eps = 0.3e-3;
        let level = 3;
        let vp = peak_position(&dot, level, b0.v_bs, b0.v_bd) + eps / dot.alpha();
        let b = BiasPoint { v_plunger: vp, ..b0 };
        let sum = level_sum(&dot, &b);
        let expected = v * coulomb_peak_conductance(eps, &PeakShape { gmax: 1.0, t0: 1.4 });
        // second-order correction is ~ (V / kT)² / 24
        assert!((sum / expected - 1.0).abs() < 1e-5, "{sum} vs {expected}");
    }
}
