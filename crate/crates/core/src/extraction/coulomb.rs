use serde::{Deserialize, Serialize};

use crate::num::{moving_average, noise_sigma, parabolic_offset};

/// Sech² FWHM in units of k_B T.
const SECH2_FWHM: f64 = 3.5255;

/// Peak positions of a 1D Coulomb-oscillation trace, ascending.
///
/// A peak is a local maximum of the smoothed trace whose prominence above the
/// lower of its two flanking minima exceeds `max(5σ, 0.1 · range)`.
pub fn coulomb_peaks(v: &[f64], i: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n < 5 || i.len() != n {
        return Vec::new();
    }
    let sign = if i.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let raw: Vec<f64> = i.iter().map(|x| sign * x).collect();
    let y = moving_average(&raw, 3);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let theta = (5.0 * noise_sigma(&raw)).max(0.1 * (hi - lo));
    if !(hi - lo > theta) {
        return Vec::new();
    }
    let mut out = Vec::new();
    for k in 1..n - 1 {
        if !(y[k] > y[k - 1] && y[k] >= y[k + 1]) {
            continue;
        }
        let mut a = k;
        let mut left_min = y[k];
        while a > 0 && y[a - 1] <= y[k] {
            a -= 1;
            left_min = left_min.min(y[a]);
        }
        let mut b = k;
        let mut right_min = y[k];
        while b + 1 < n && y[b + 1] <= y[k] {
            b += 1;
            right_min = right_min.min(y[b]);
        }
        if y[k] - left_min.max(right_min) > theta {
            let step = v[k + 1] - v[k];
            out.push(v[k] + parabolic_offset(y[k - 1], y[k], y[k + 1]) * step);
        }
    }
    out
}

/// The first two Coulomb peaks above a plunger voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSpacing {
    pub first: f64,
    pub second: f64,
    /// FWHM of the first peak (V), when both half-maximum crossings are on the trace.
    pub fwhm: Option<f64>,
}

impl PeakSpacing {
    pub fn spacing(&self) -> f64 {
        self.second - self.first
    }

    /// Lever arm implied by a thermally broadened peak at temperature `t` (K).
    pub fn thermal_alpha(&self, t: f64) -> Option<f64> {
        let k_b = crate::model::PhysicalConstants::<f64>::default().k_b;
        self.fwhm.map(|w| SECH2_FWHM * k_b * t / w)
    }

    /// E_C / k_B T, from spacing over width; no temperature or lever arm needed.
    pub fn thermal_ratio(&self) -> Option<f64> {
        self.fwhm.map(|w| SECH2_FWHM * self.spacing() / w)
    }
}

/// The first pair of peaks above `above`, with the width of the first.
pub fn first_spacing(v: &[f64], i: &[f64], above: f64) -> Option<PeakSpacing> {
    let peaks: Vec<f64> = coulomb_peaks(v, i).into_iter().filter(|&p| p > above).collect();
    let (first, second) = (*peaks.first()?, *peaks.get(1)?);
    Some(PeakSpacing {
        first,
        second,
        fwhm: peak_fwhm(v, i, first, 0.5 * (second - first)),
    })
}

/// Full width at half maximum of the peak at `p`, above the lowest current
/// within `reach` on either side.
fn peak_fwhm(v: &[f64], i: &[f64], p: f64, reach: f64) -> Option<f64> {
    let s = if i.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let y = moving_average(&i.iter().map(|x| s * x).collect::<Vec<_>>(), 3);
    let lo = v.iter().position(|&x| x >= p - reach)?;
    let hi = v.iter().rposition(|&x| x <= p + reach)?;
    if hi <= lo + 2 {
        return None;
    }
    let k = (lo..=hi).min_by(|&a, &b| (v[a] - p).abs().total_cmp(&(v[b] - p).abs()))?;
    let base = y[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min);
    let half = 0.5 * (y[k] + base);
    let cross = |dir: isize| -> Option<f64> {
        let mut j = k;
        while y[j] > half {
            let next = j as isize + dir;
            if next < lo as isize || next > hi as isize {
                return None;
            }
            j = next as usize;
        }
        let prev = (j as isize - dir) as usize;
        Some(v[j] + (half - y[j]) / (y[prev] - y[j]) * (v[prev] - v[j]))
    };
    let w = cross(1)? - cross(-1)?;
    (w > 0.0).then_some(w)
}
