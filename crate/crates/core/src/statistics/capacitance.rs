use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::model::PhysicalConstants;
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct CapFitResult<T = f64> {
    /// nm²
    pub area: T,
    /// nm
    pub delta2: T,
    /// RMS misfit (aF).
    pub residual: T,
}

/// Fits `C_P = ε₀ ε_r A / (t1 + δ₂)` to `(t1 [nm], C_P [aF])` points.
pub fn fit_parallel_plate<T: Real>(points: &[(T, T)]) -> Result<CapFitResult<T>> {
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: points.len(),
        });
    }
    let t_min = points.iter().map(|p| p.0).fold(T::infinity(), T::min);
    let t_max = points.iter().map(|p| p.0).fold(T::neg_infinity(), T::max);
    if !(t_max > t_min) {
        return Err(Error::DegenerateFit("all t1 values are equal".into()));
    }
    if points.iter().any(|p| !(p.1 > T::zero())) {
        return Err(Error::InvalidInput("capacitances must be positive".into()));
    }
    let k = PhysicalConstants::<T>::si();
    // aF per nm: ε₀ ε_r [F/m] · 1e-9 m/nm · 1e18 aF/F
    let eps = k.eps0 * k.epsr_sio2 * T::lit(1e9);

    // 1/C is linear in t1: (t1 + δ₂) / (ε A)
    let n = T::from_usize(points.len()).unwrap();
    let mx = points.iter().map(|p| p.0).sum::<T>() / n;
    let my = points.iter().map(|p| T::one() / p.1).sum::<T>() / n;
    let sxx: T = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: T = points.iter().map(|p| (p.0 - mx) * (T::one() / p.1 - my)).sum();
    let slope = sxy / sxx;
    if !(slope > T::zero()) {
        return Err(Error::DegenerateFit(
            "capacitance does not decrease with oxide thickness".into(),
        ));
    }
    let intercept = my - slope * mx;
    let area0 = T::one() / (slope * eps);
    let delta0 = intercept / slope;

    let fit = levenberg_marquardt(
        |p: &[T], r: &mut [T]| {
            for (ri, &(t, c)) in r.iter_mut().zip(points) {
                *ri = eps * p[0] / (t + p[1]) - c;
            }
        },
        &[area0, delta0],
        points.len(),
        &LmOptions::default(),
    )?;
    let (area, delta2) = (fit.params[0], fit.params[1]);
    if !(area > T::zero()) || !(delta2 >= T::zero()) {
        return Err(Error::DegenerateFit(format!(
            "unphysical fit: A = {area} nm², δ₂ = {delta2} nm"
        )));
    }
    Ok(CapFitResult {
        area,
        delta2,
        residual: (fit.ssr / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::plunger_capacitance;

    #[test]
    fn noiseless_round_trip() {
        let k = PhysicalConstants::si();
        let pts: Vec<(f64, f64)> = [8.0, 12.0, 15.0, 20.0]
            .iter()
            .map(|&t| (t, plunger_capacitance(3733.0, t + 4.5, &k).unwrap()))
            .collect();
        let r = fit_parallel_plate(&pts).unwrap();
        assert!((r.area / 3733.0 - 1.0).abs() < 1e-6);
        assert!((r.delta2 / 4.5 - 1.0).abs() < 1e-6);
        let two = fit_parallel_plate(&pts[..2]).unwrap();
        assert!(two.residual < 1e-9);
        assert!(matches!(
            fit_parallel_plate(&[(12.0, 10.0), (12.0, 11.0)]),
            Err(Error::DegenerateFit(_))
        ));
    }
}
