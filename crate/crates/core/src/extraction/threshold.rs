use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::num::{logistic, noise_sigma};

/// Sigmoid `I_max / (1 + exp(-k (V - V_t)))` fitted to a turn-on trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFit {
    pub v_t: f64,
    /// 1/V
    pub k: f64,
    /// A
    pub i_max: f64,
    /// A
    pub residual_rms: f64,
    pub converged: bool,
}

impl SigmoidFit {
    pub fn eval(&self, v: f64) -> f64 {
        self.i_max * logistic(self.k * (v - self.v_t))
    }
}

/// A trace whose total swing is below this many noise σ counts as flat.
const FLAT_SIGMAS: f64 = 10.0;

/// First voltage where `i` reaches `level`, linearly interpolated.
fn crossing(v: &[f64], i: &[f64], level: f64) -> Option<f64> {
    if i[0] >= level {
        return Some(v[0]);
    }
    i.windows(2).zip(v.windows(2)).find_map(|(iw, vw)| {
        (iw[0] < level && iw[1] >= level).then(|| vw[0] + (level - iw[0]) / (iw[1] - iw[0]) * (vw[1] - vw[0]))
    })
}

/// Fits the threshold of a turn-on trace. The maximum-slope voltage of the
/// sigmoid is `v_t` itself.
pub fn fit_threshold(v: &[f64], i: &[f64]) -> Result<SigmoidFit> {
    let m = v.len();
    if i.len() != m {
        return Err(Error::InvalidInput(format!("{} voltages but {} currents", m, i.len())));
    }
    if m < 10 {
        return Err(Error::InsufficientData { needed: 10, got: m });
    }
    if v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("voltages must be strictly increasing".into()));
    }
    let i_hi = i.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let i_lo = i.iter().copied().fold(f64::INFINITY, f64::min);
    let range = i_hi - i_lo;
    let floor = FLAT_SIGMAS * noise_sigma(i);
    if !(range > floor) {
        return Err(Error::NoTurnOn { range, floor });
    }

    // closed-form start: half-maximum crossing and 10-90 % width
    let vt0 = crossing(v, i, 0.5 * i_hi).unwrap_or(0.5 * (v[0] + v[m - 1]));
    let v10 = crossing(v, i, 0.1 * i_hi);
    let v90 = crossing(v, i, 0.9 * i_hi);
    let span = v[m - 1] - v[0];
    let k0 = match (v10, v90) {
        (Some(a), Some(b)) if b > a => 4.0 / (b - a),
        _ => 8.0 / span,
    };

    // work in normalized units so the solver sees O(1) numbers
    let v_mid = 0.5 * (v[0] + v[m - 1]);
    let v_scale = 0.5 * span;
    let i_scale = i_hi.abs().max(i_lo.abs());
    let x: Vec<f64> = v.iter().map(|&a| (a - v_mid) / v_scale).collect();
    let y: Vec<f64> = i.iter().map(|&a| a / i_scale).collect();
    let p0 = [i_hi / i_scale, (vt0 - v_mid) / v_scale, k0 * v_scale];
    let res = levenberg_marquardt(
        |p: &[f64], r: &mut [f64]| {
            for j in 0..x.len() {
                r[j] = p[0] * logistic(p[2] * (x[j] - p[1])) - y[j];
            }
        },
        &p0,
        m,
        &LmOptions::default(),
    )?;
    let p = &res.params;
    if !p.iter().all(|a| a.is_finite()) {
        return Err(Error::NonConvergence("sigmoid parameters diverged".into()));
    }
    let fit = SigmoidFit {
        v_t: v_mid + p[1] * v_scale,
        k: p[2] / v_scale,
        i_max: p[0] * i_scale,
        residual_rms: (res.ssr / m as f64).sqrt() * i_scale,
        converged: false,
    };
    let converged = res.converged
        && fit.k > 0.0
        && fit.residual_rms <= 0.2 * fit.i_max.abs()
        && fit.v_t >= v[0]
        && fit.v_t <= v[m - 1];
    Ok(SigmoidFit { converged, ..fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::linspace;

    fn trace(vt: f64, k: f64, imax: f64) -> (Vec<f64>, Vec<f64>) {
        let v = linspace(0.0, 1.5, 151);
        let i = v.iter().map(|&x| imax * logistic(k * (x - vt))).collect();
        (v, i)
    }

    #[test]
    fn recovers_exact_sigmoid() {
        let (v, i) = trace(0.64, 25.0, 3e-10);
        let f = fit_threshold(&v, &i).unwrap();
        assert!(f.converged);
        assert!((f.v_t - 0.64).abs() < 1e-6, "{}", f.v_t);
        assert!((f.k - 25.0).abs() < 1e-4);
        assert!((f.i_max / 3e-10 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_traces_are_not_turn_ons() {
        let v = linspace(0.0, 1.0, 50);
        assert!(matches!(fit_threshold(&v, &vec![0.0; 50]), Err(Error::NoTurnOn { .. })));
    }

    #[test]
    fn preconditions() {
        let v = linspace(0.0, 1.0, 5);
        assert!(matches!(
            fit_threshold(&v, &[0.0; 5]),
            Err(Error::InsufficientData { .. })
        ));
        let mut v = linspace(0.0, 1.0, 20);
        v[3] = v[2];
        assert!(matches!(fit_threshold(&v, &[1.0; 20]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn threshold_outside_window_is_not_converged() {
        // only the lower tail is visible
        let v = linspace(0.0, 0.3, 60);
        let i: Vec<f64> = v.iter().map(|&x| logistic(25.0 * (x - 0.64))).collect();
        if let Ok(f) = fit_threshold(&v, &i) {
            assert!(!f.converged || (f.v_t >= 0.0 && f.v_t <= 0.3));
        }
    }
}
