use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Threshold-voltage spread law for one gate family.
///
/// `σ(t1, t_gate) = sqrt((a / t1)² + (b · t_gate)² + σ0²)` in mV: a strain term
/// falling with the primary oxide, a Pelgrom-like term growing with the gate's
/// own oxide, and a residual floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct VariabilityLaw<T = f64> {
    /// mV·nm
    pub strain_coeff_a: T,
    /// mV/nm
    pub pelgrom_coeff_b: T,
    /// mV
    pub sigma0: T,
}

impl<T: Real> VariabilityLaw<T> {
    pub fn new(strain_coeff_a: T, pelgrom_coeff_b: T, sigma0: T) -> Self {
        VariabilityLaw {
            strain_coeff_a,
            pelgrom_coeff_b,
            sigma0,
        }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    /// Coefficients (σ0 = 0) whose minimum over t1, with `t_gate = t1 + gate_offset`,
    /// sits exactly at `t1_min` with value `sigma_min` mV.
    ///
    /// At the minimizer `a²/t³ = b²(t + d)`, so `σ² = b²(t + d)(2t + d)`.
    pub fn calibrated(t1_min: T, gate_offset: T, sigma_min: T) -> Result<Self> {
        if !(t1_min > T::zero()) || !(gate_offset >= T::zero()) || !(sigma_min > T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "calibration needs t1 > 0, offset >= 0 and sigma > 0 (got {t1_min}, {gate_offset}, {sigma_min})"
            )));
        }
        let tg = t1_min + gate_offset;
        let b = sigma_min / (tg * (t1_min + tg)).sqrt();
        let a = b * t1_min * (t1_min * tg).sqrt();
        Ok(Self::new(a, b, T::zero()))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("strain_coeff_a", self.strain_coeff_a),
            ("pelgrom_coeff_b", self.pelgrom_coeff_b),
            ("sigma0", self.sigma0),
        ] {
            if !(v >= T::zero()) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Spread in mV for primary oxide `t1` and gate oxide `t_gate` (nm).
    pub fn sigma_vt(&self, t1: T, t_gate: T) -> Result<T> {
        sigma_vt(t1, t_gate, self)
    }

    /// Minimizer over t1 of `σ(t1, t1 + gate_offset)`, by bisection on the
    /// stationarity condition `a²/t³ = b²(t + d)`. `None` if a or b is zero.
    pub fn minimizer(&self, gate_offset: T) -> Option<T> {
        let (a, b) = (self.strain_coeff_a, self.pelgrom_coeff_b);
        if !(a > T::zero()) || !(b > T::zero()) {
            return None;
        }
        // g(t) = b²(t + d) t³ - a² is increasing for t > 0
        let g = |t: T| b * b * (t + gate_offset) * t * t * t - a * a;
        let mut lo = T::zero();
        let mut hi = (a / b).sqrt().max(T::one());
        while g(hi) < T::zero() {
            hi = hi + hi;
        }
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if g(mid) < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some((lo + hi) / T::lit(2.0))
    }
}

/// Threshold-voltage spread (mV) under `law`.
pub fn sigma_vt<T: Real>(t1: T, t_gate: T, law: &VariabilityLaw<T>) -> Result<T> {
    if !(t1 > T::zero()) {
        return Err(Error::SingularInput(format!("strain term diverges at t1 = {t1} nm")));
    }
    if !(t_gate > T::zero()) {
        return Err(Error::InvalidInput(format!(
            "gate oxide must be positive, got {t_gate} nm"
        )));
    }
    let strain = law.strain_coeff_a / t1;
    let pelgrom = law.pelgrom_coeff_b * t_gate;
    Ok((strain * strain + pelgrom * pelgrom + law.sigma0 * law.sigma0).sqrt())
}

/// Disorder model of a sample: threshold spreads, outliers and spurious dots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct DisorderConfig<T = f64> {
    /// Plunger gates, evaluated at t2.
    pub plunger: VariabilityLaw<T>,
    /// Barrier gates, evaluated at t3. Falls back to `plunger` when absent.
    pub barrier: Option<VariabilityLaw<T>>,
    /// Probability that a threshold draw comes from the widened component.
    pub outlier_prob: T,
    /// Multiplier on σ for the widened component.
    pub outlier_scale: T,
    /// Spurious-dot probability per barrier segment is `min(1, coeff / t1)` (nm).
    pub spurious_rate_coeff: T,
    /// Volts.
    pub mean_vt_plunger: T,
    /// Volts.
    pub mean_vt_barrier: T,
    /// Uniform range of spurious oscillation periods (V).
    pub spurious_period: (T, T),
    /// Uniform range of spurious modulation depths.
    pub spurious_depth: (T, T),
    /// Uniform range of spurious-dot lever arms to the host barrier.
    pub spurious_lever: (T, T),
    /// Threshold shift (mV) of a barrier segment hosting a spurious dot; 0 disables it.
    pub spurious_vt_shift: T,
}

impl<T: Real> DisorderConfig<T> {
    pub fn barrier_law(&self) -> &VariabilityLaw<T> {
        self.barrier.as_ref().unwrap_or(&self.plunger)
    }

    /// No randomness at all: every draw equals its mean.
    pub fn zero() -> Self {
        DisorderConfig {
            plunger: VariabilityLaw::zero(),
            barrier: Some(VariabilityLaw::zero()),
            outlier_prob: T::zero(),
            spurious_rate_coeff: T::zero(),
            ..Self::default()
        }
    }

    pub fn spurious_probability(&self, t1: T) -> T {
        (self.spurious_rate_coeff / t1).min(T::one())
    }

    pub fn validate(&self) -> Result<()> {
        self.plunger.validate()?;
        self.barrier_law().validate()?;
        let in_unit = |v: T| v >= T::zero() && v <= T::one();
        if !in_unit(self.outlier_prob) {
            return Err(Error::InvalidConfig(format!(
                "outlier_prob must be in [0, 1], got {}",
                self.outlier_prob
            )));
        }
        if !(self.outlier_scale >= T::zero()) || !(self.spurious_rate_coeff >= T::zero()) {
            return Err(Error::InvalidConfig(
                "outlier_scale and spurious_rate_coeff must be >= 0".into(),
            ));
        }
        let (p0, p1) = self.spurious_period;
        if !(p0 > T::zero()) || p1 < p0 {
            return Err(Error::InvalidConfig(format!(
                "spurious_period range must be positive and ordered, got ({p0}, {p1})"
            )));
        }
        let (d0, d1) = self.spurious_depth;
        if !in_unit(d0) || !in_unit(d1) || d1 < d0 {
            return Err(Error::InvalidConfig(format!(
                "spurious_depth range must lie in [0, 1], got ({d0}, {d1})"
            )));
        }
        if !(self.spurious_vt_shift >= T::zero()) {
            return Err(Error::InvalidConfig("spurious_vt_shift must be >= 0".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for DisorderConfig<T> {
    /// Plunger minimum of 63 mV at t1 = 15 nm (t2 = 19.5 nm); barrier minimum
    /// of 74 mV at t1 = 12 nm (t3 = 17.3 nm).
    fn default() -> Self {
        DisorderConfig {
            plunger: VariabilityLaw::calibrated(T::lit(15.0), T::lit(4.5), T::lit(63.0)).expect("valid constants"),
            barrier: Some(
                VariabilityLaw::calibrated(T::lit(12.0), T::lit(5.3), T::lit(74.0)).expect("valid constants"),
            ),
            outlier_prob: T::lit(0.1),
            outlier_scale: T::lit(4.0),
            spurious_rate_coeff: T::lit(1.0),
            mean_vt_plunger: T::lit(0.64),
            mean_vt_barrier: T::lit(0.9),
            spurious_period: (T::lit(0.02), T::lit(0.06)),
            spurious_depth: (T::lit(0.3), T::lit(0.7)),
            spurious_lever: (T::lit(0.05), T::lit(0.2)),
            spurious_vt_shift: T::zero(),
        }
    }
}

/// Population statistics of the per-dot electrostatic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct DotPopulation<T = f64> {
    /// Mean plunger lever arm C_P / C_Σ.
    pub alpha_mean: T,
    pub alpha_rel_spread: T,
    /// Relative Gaussian spread of C_P around the parallel-plate value.
    pub cp_rel_spread: T,
    /// Peak conductance prefactor (S).
    pub gmax_mean: T,
    pub gmax_rel_spread: T,
    pub lever_bs: T,
    pub lever_bd: T,
    pub lever_rel_spread: T,
}

impl<T: Real> DotPopulation<T> {
    pub fn uniform() -> Self {
        DotPopulation {
            alpha_rel_spread: T::zero(),
            cp_rel_spread: T::zero(),
            gmax_rel_spread: T::zero(),
            lever_rel_spread: T::zero(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_mean > T::zero() && self.alpha_mean < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "alpha_mean must be in (0, 1), got {}",
                self.alpha_mean
            )));
        }
        if !(self.gmax_mean > T::zero()) {
            return Err(Error::InvalidConfig("gmax_mean must be positive".into()));
        }
        for v in [
            self.alpha_rel_spread,
            self.cp_rel_spread,
            self.gmax_rel_spread,
            self.lever_rel_spread,
            self.lever_bs,
            self.lever_bd,
        ] {
            if !(v >= T::zero()) {
                return Err(Error::InvalidConfig(
                    "population spreads and barrier levers must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }
}

impl<T: Real> Default for DotPopulation<T> {
    fn default() -> Self {
        DotPopulation {
            alpha_mean: T::lit(0.165),
            alpha_rel_spread: T::lit(0.26),
            cp_rel_spread: T::lit(0.03),
            gmax_mean: T::lit(2e-6),
            gmax_rel_spread: T::lit(0.1),
            lever_bs: T::lit(0.05),
            lever_bd: T::lit(0.05),
            lever_rel_spread: T::zero(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_terms_at_the_anchor() {
        let law = VariabilityLaw::new(868.3, 2.285, 0.0);
        let s = sigma_vt(19.5, 19.5, &law).unwrap();
        // each term is 63/√2 ≈ 44.55 mV
        let direct = ((868.3_f64 / 19.5).powi(2) + (2.285_f64 * 19.5).powi(2)).sqrt();
        assert!((s - direct).abs() < 1e-12);
        assert!((s - 63.0).abs() < 0.1, "{s}");
    }

    #[test]
    fn pure_terms() {
        assert_eq!(sigma_vt(5.0, 10.0, &VariabilityLaw::new(0.0, 2.0, 0.0)).unwrap(), 20.0);
        assert_eq!(sigma_vt(20.0, 7.0, &VariabilityLaw::new(100.0, 0.0, 0.0)).unwrap(), 5.0);
    }

    #[test]
    fn zero_t1_is_singular() {
        let law = VariabilityLaw::new(1.0, 1.0, 0.0);
        assert!(matches!(sigma_vt(0.0, 1.0, &law), Err(Error::SingularInput(_))));
    }

    #[test]
    fn symmetric_minimum_without_offset() {
        let law = VariabilityLaw::new(400.0, 4.0, 0.0);
        let t_star = (400.0_f64 / 4.0).sqrt();
        let at_min = sigma_vt(t_star, t_star, &law).unwrap();
        assert!((at_min - 2.0_f64.sqrt() * 400.0 / t_star).abs() < 1e-12);
        assert!((law.minimizer(0.0).unwrap() - t_star).abs() < 1e-9);
        for t in [2.0, 5.0, 9.9, 10.1, 15.0, 40.0] {
            assert!(sigma_vt(t, t, &law).unwrap() > at_min);
        }
    }

    #[test]
    fn calibration_places_minimum() {
        let law = VariabilityLaw::<f64>::calibrated(15.0, 4.5, 63.0).unwrap();
        assert!((law.minimizer(4.5).unwrap() - 15.0).abs() < 1e-9);
        assert!((law.sigma_vt(15.0, 19.5).unwrap() - 63.0).abs() < 1e-9);
        let grid: Vec<f64> = [8.0, 12.0, 15.0, 20.0]
            .iter()
            .map(|&t| law.sigma_vt(t, t + 4.5).unwrap())
            .collect();
        let argmin = (0..4).min_by(|&i, &j| grid[i].total_cmp(&grid[j])).unwrap();
        assert_eq!(argmin, 2);

        let barrier = VariabilityLaw::<f64>::calibrated(12.0, 5.3, 74.0).unwrap();
        assert!((barrier.minimizer(5.3).unwrap() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn default_config_is_valid() {
        DisorderConfig::<f64>::default().validate().unwrap();
        DisorderConfig::<f32>::zero().validate().unwrap();
        DotPopulation::<f64>::default().validate().unwrap();
    }
}
