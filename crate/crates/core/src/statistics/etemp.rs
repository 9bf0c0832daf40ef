use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::model::PhysicalConstants;
use crate::num::sech2;

/// Zero-bias conductance peak measured at one fridge temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakTrace {
    /// K
    pub t_fridge: f64,
    /// V
    pub v_plunger: Vec<f64>,
    /// S
    pub conductance: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ETempConfig {
    /// Bias broadening as a temperature: `T_sd = η e V_sd / k_B`.
    pub eta: f64,
    /// `k_B T_max` must be this many times below ΔE.
    pub thermal_ratio: f64,
    /// ΔE must be this many times below E_C.
    pub level_ratio: f64,
    pub curve_points: usize,
}

impl Default for ETempConfig {
    fn default() -> Self {
        ETempConfig {
            eta: 0.5,
            thermal_ratio: 2.5,
            level_ratio: 3.0,
            curve_points: 51,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempPoint {
    pub t_fridge: f64,
    /// Fitted peak temperature (K).
    pub t0: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ETempResult {
    pub t0_points: Vec<TempPoint>,
    /// Base electron temperature (K).
    pub t0_fit: f64,
    pub t0_stderr: Option<f64>,
    /// K
    pub t_sd: f64,
    /// `(T_fridge, T_e)` samples of the fitted model.
    pub t_e_curve: Vec<(f64, f64)>,
    pub valid_regime: bool,
    /// Traces whose peak fit failed, with the reason.
    pub excluded: Vec<(f64, String)>,
}

/// `sqrt(T_0² + T_ph² + T_sd²)`.
pub fn electron_temperature(t0: f64, t_ph: f64, t_sd: f64) -> f64 {
    (t0 * t0 + t_ph * t_ph + t_sd * t_sd).sqrt()
}

/// Fits `G_max cosh⁻²(α (V_P - V_0) / 2 k_B T)`; returns `(T, stderr)`.
pub fn fit_peak_temperature(trace: &PeakTrace, alpha: f64) -> Result<(f64, f64)> {
    let (v, g) = (&trace.v_plunger, &trace.conductance);
    if v.len() < 5 || g.len() != v.len() {
        return Err(Error::InsufficientData {
            needed: 5,
            got: v.len().min(g.len()),
        });
    }
    let kb = PhysicalConstants::<f64>::si().k_b;
    let (imax, &gmax) = g.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    if !(gmax > 0.0) {
        return Err(Error::NoTurnOn {
            range: gmax,
            floor: 0.0,
        });
    }
    let above: Vec<f64> = v
        .iter()
        .zip(g)
        .filter(|(_, &y)| y >= 0.5 * gmax)
        .map(|(&x, _)| x)
        .collect();
    let step = (v[v.len() - 1] - v[0]).abs() / (v.len() - 1) as f64;
    let fwhm = (above.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - above.iter().copied().fold(f64::INFINITY, f64::min))
    .max(step);
    let t_init = alpha * fwhm / (3.5255 * kb);
    // fit in scaled units: conductance / gmax, voltage offset in steps, log temperature
    let fit = levenberg_marquardt(
        |p: &[f64], r: &mut [f64]| {
            let t = t_init * p[2].exp();
            for (k, ri) in r.iter_mut().enumerate() {
                let de = alpha * (v[k] - v[imax] - p[1] * step);
                *ri = p[0] * sech2(de / (2.0 * kb * t)) - g[k] / gmax;
            }
        },
        &[1.0, 0.0, 0.0],
        v.len(),
        &LmOptions::default(),
    )?;
    let t = t_init * fit.params[2].exp();
    let rms = (fit.ssr / v.len() as f64).sqrt();
    if !fit.converged || !t.is_finite() || !(fit.params[0] > 0.0) || rms > 0.2 * fit.params[0] {
        return Err(Error::NonConvergence(format!(
            "peak fit at {} K did not converge",
            trace.t_fridge
        )));
    }
    let stderr = fit.stderr(2).map_or(f64::NAN, |s| s * t);
    Ok((t, stderr))
}

/// Per-trace peak temperatures, then the base temperature `T_0` of
/// `T_e = sqrt(T_0² + T_fridge² + T_sd²)` by weighted least squares.
pub fn fit_electron_temperature(
    traces: &[PeakTrace],
    alpha: f64,
    v_sd: f64,
    delta_e_mev: f64,
    e_c_mev: f64,
    cfg: &ETempConfig,
) -> Result<ETempResult> {
    let mut temps: Vec<f64> = traces.iter().map(|t| t.t_fridge).collect();
    temps.sort_by(f64::total_cmp);
    temps.dedup();
    if temps.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: temps.len(),
        });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("lever arm must be positive, got {alpha}")));
    }
    let kb = PhysicalConstants::<f64>::si().k_b;
    let t_sd = cfg.eta * v_sd.abs() / kb;

    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for tr in traces {
        match fit_peak_temperature(tr, alpha) {
            Ok((t0, stderr)) => points.push(TempPoint {
                t_fridge: tr.t_fridge,
                t0,
                stderr,
            }),
            Err(e) => excluded.push((tr.t_fridge, e.to_string())),
        }
    }
    if points.is_empty() {
        return Err(Error::NonConvergence("every peak fit failed".into()));
    }
    let weighted = points.iter().all(|p| p.stderr.is_finite() && p.stderr > 0.0);
    let guess = points
        .iter()
        .map(|p| (p.t0 * p.t0 - p.t_fridge * p.t_fridge - t_sd * t_sd).max(0.0).sqrt())
        .fold(0.0, f64::max)
        .max(1e-3);
    let fit = levenberg_marquardt(
        |p: &[f64], r: &mut [f64]| {
            for (ri, pt) in r.iter_mut().zip(&points) {
                let w = if weighted { pt.stderr } else { 1.0 };
                *ri = (electron_temperature(p[0], pt.t_fridge, t_sd) - pt.t0) / w;
            }
        },
        &[guess],
        points.len(),
        &LmOptions::default(),
    )?;
    let t0_fit = fit.params[0].abs();
    let t_max = temps[temps.len() - 1];
    let m = cfg.curve_points.max(2);
    let t_e_curve = (0..m)
        .map(|i| {
            let t = t_max * i as f64 / (m - 1) as f64;
            (t, electron_temperature(t0_fit, t, t_sd))
        })
        .collect();
    let valid_regime = kb * 1e3 * t_max * cfg.thermal_ratio < delta_e_mev && delta_e_mev * cfg.level_ratio < e_c_mev;
    Ok(ETempResult {
        t0_points: points,
        t0_fit,
        t0_stderr: fit.stderr(0),
        t_sd,
        t_e_curve,
        valid_regime,
        excluded,
    })
}
