use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instrument::MeasurementRecord;
use crate::model::BarrierSide;
use crate::num::{median, noise_sigma, parabolic_offset};

use super::barrier_map::oriented_grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpuriousParams {
    /// Detection threshold θ_sp on peak power over median (broadband) power.
    pub theta: f64,
    /// Profile points outside the span where the profile exceeds this fraction
    /// of its maximum are discarded.
    pub conduction_floor: f64,
    /// Frequencies below this many cycles per analysed span are ignored.
    pub min_cycles: usize,
    /// Broadband floor as a log-amplitude, so that noiseless smooth profiles
    /// do not produce arbitrarily large power ratios.
    pub floor_amplitude: f64,
    /// Largest slope (other-axis shift per unit of this axis) of the detected
    /// lines. A spurious dot's lines are perpendicular to its barrier axis;
    /// Coulomb lines are tilted by the lever-arm ratio.
    pub max_tilt: f64,
}

impl Default for SpuriousParams {
    fn default() -> Self {
        SpuriousParams {
            theta: 20.0,
            conduction_floor: 0.2,
            min_cycles: 3,
            floor_amplitude: 0.002,
            max_tilt: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpuriousDetection {
    pub axis: BarrierSide,
    /// V
    pub period: f64,
    /// Peak power over median power.
    pub strength: f64,
}

/// Least-squares polynomial of degree `deg` evaluated at `xs`.
fn poly_trend(xs: &[f64], ys: &[f64], deg: usize) -> Vec<f64> {
    let m = deg + 1;
    let x0 = xs[0];
    let span = (xs[xs.len() - 1] - x0).max(f64::MIN_POSITIVE);
    let u: Vec<f64> = xs.iter().map(|x| 2.0 * (x - x0) / span - 1.0).collect();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (&ui, &yi) in u.iter().zip(ys) {
        let pw: Vec<f64> = (0..m).map(|k| ui.powi(k as i32)).collect();
        for r in 0..m {
            b[r] += pw[r] * yi;
            for c in 0..m {
                a[r][c] += pw[r] * pw[c];
            }
        }
    }
    let Some(coef) = crate::fit::solve_dense(a, b) else {
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        return vec![mean; ys.len()];
    };
    u.iter()
        .map(|&ui| (0..m).map(|k| coef[k] * ui.powi(k as i32)).sum())
        .collect()
}

/// Dominant periodicity of a profile.
struct ProfilePeak {
    period: f64,
    strength: f64,
    /// Analysed index range.
    span: (usize, usize),
    /// Frequency bin of the peak within the span.
    bin: usize,
}

/// Index range where a profile exceeds `frac` of its maximum.
fn conducting_span(profile: &[f64], frac: f64) -> Option<(usize, usize)> {
    let max = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return None;
    }
    let lo = profile.iter().position(|&p| p > frac * max)?;
    let hi = profile.iter().rposition(|&p| p > frac * max)? + 1;
    Some((lo, hi))
}

fn hann(i: usize, n: usize) -> f64 {
    0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
}

fn profile_peak(xs: &[f64], profile: &[f64], params: &SpuriousParams) -> Option<ProfilePeak> {
    let max = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return None;
    }
    let sigma = noise_sigma(profile);
    if max <= 10.0 * sigma {
        return None;
    }
    // conducting span; dips inside it (e.g. from a deep spurious modulation) are kept
    let (lo, hi) = conducting_span(profile, params.conduction_floor)?;
    let n = hi - lo;
    if n < 4 * params.min_cycles.max(4) {
        return None;
    }
    let x = &xs[lo..hi];
    // noise can push averaged current in a dip to zero or below
    let y: Vec<f64> = profile[lo..hi].iter().map(|v| v.max(1e-3 * max).ln()).collect();
    let trend = poly_trend(x, &y, 3);
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|i| Complex::new((y[i] - trend[i]) * hann(i, n), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect();
    let k0 = params.min_cycles.max(1);
    if power.len() <= k0 + 2 {
        return None;
    }
    let band = &power[k0..];
    // a Hann-windowed sinusoid of amplitude A has peak power (A n / 4)^2
    let floor = median(band)?.max((params.floor_amplitude * n as f64 / 4.0).powi(2));
    let k = (k0..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b]))?;
    if k == k0 && power[k - 1] > power[k] {
        // leakage tail of the trend, not a spectral peak
        return None;
    }
    let strength = power[k] / floor;
    let kf = if k + 1 < power.len() {
        k as f64 + parabolic_offset(power[k - 1], power[k], power[k + 1])
    } else {
        k as f64
    };
    if kf < k0 as f64 || !strength.is_finite() {
        return None;
    }
    let step = (x[n - 1] - x[0]).abs() / (n - 1) as f64;
    Some(ProfilePeak {
        period: n as f64 * step / kf,
        strength,
        span: (lo, hi),
        bin: k,
    })
}

/// Slope of the lines behind a spectral peak found along one axis.
///
/// `line(j)` is the j-th cut along the peak's axis, taken at the j-th value of
/// the other axis; `lines` restricts to the conducting cuts. The phase of the
/// peak's Fourier component advances from cut to cut by `2π tilt step_other /
/// period`, so the mean phase increment gives the tilt.
fn line_tilt(
    line: impl Fn(usize) -> Vec<f64>,
    lines: (usize, usize),
    peak: &ProfilePeak,
    step_other: f64,
) -> Option<f64> {
    let (lo, hi) = peak.span;
    let n = hi - lo;
    let w = 2.0 * std::f64::consts::PI * peak.bin as f64 / n as f64;
    let component = |j: usize| {
        let cut = line(j);
        let seg = &cut[lo..hi];
        let u: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let trend = poly_trend(&u, seg, 3);
        (0..n).fold(Complex::new(0.0, 0.0), |acc, i| {
            acc + Complex::from_polar((seg[i] - trend[i]) * hann(i, n), -w * i as f64)
        })
    };
    if lines.1 < lines.0 + 2 {
        return None;
    }
    let xs: Vec<Complex<f64>> = (lines.0..lines.1).map(component).collect();
    let cross: Complex<f64> = xs.windows(2).map(|p| p[1] * p[0].conj()).sum();
    if !(cross.norm() > 0.0) {
        return None;
    }
    Some(cross.arg().abs() * peak.period / (2.0 * std::f64::consts::PI * step_other))
}

/// Looks for periodic modulation that depends on one barrier voltage only.
///
/// Each axis is profiled by averaging over the other axis. Coulomb lines run
/// diagonally and mostly wash out of that average; a spurious dot's lines do
/// not. When the conducting part of the other axis is too short for the
/// washout, the tilt of the lines behind a peak tells the two apart.
pub fn detect_spurious(
    record: &MeasurementRecord,
    col: usize,
    params: &SpuriousParams,
) -> Result<Vec<SpuriousDetection>> {
    let (vs, vd, grid) = oriented_grid(record, col)?;
    let (ns, nd) = (vs.len(), vd.len());
    let prof_s: Vec<f64> = (0..ns)
        .map(|i| grid[i * nd..(i + 1) * nd].iter().sum::<f64>() / nd as f64)
        .collect();
    let prof_d: Vec<f64> = (0..nd)
        .map(|j| (0..ns).map(|i| grid[i * nd + j]).sum::<f64>() / ns as f64)
        .collect();

    let step = |v: &[f64]| (v[v.len() - 1] - v[0]).abs() / (v.len() - 1).max(1) as f64;
    let cut_s = |j: usize| (0..ns).map(|i| grid[i * nd + j]).collect::<Vec<f64>>();
    let cut_d = |i: usize| grid[i * nd..(i + 1) * nd].to_vec();

    let mut out = Vec::new();
    for axis in [BarrierSide::Source, BarrierSide::Drain] {
        let (xs, prof, other) = match axis {
            BarrierSide::Source => (&vs, &prof_s, &prof_d),
            BarrierSide::Drain => (&vd, &prof_d, &prof_s),
        };
        let Some(peak) = profile_peak(xs, prof, params) else {
            continue;
        };
        if peak.strength <= params.theta {
            continue;
        }
        let lines = conducting_span(other, params.conduction_floor).unwrap_or((0, other.len()));
        let tilt = match axis {
            BarrierSide::Source => line_tilt(cut_s, lines, &peak, step(&vd)),
            BarrierSide::Drain => line_tilt(cut_d, lines, &peak, step(&vs)),
        };
        if tilt.is_some_and(|t| t > params.max_tilt) {
            continue;
        }
        out.push(SpuriousDetection {
            axis,
            period: peak.period,
            strength: peak.strength,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_period_of_clean_modulation() {
        let xs: Vec<f64> = (0..201).map(|i| 0.5 + i as f64 * 0.0035).collect();
        let prof: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let s = (std::f64::consts::PI * x / 0.04).sin();
                (1.0 + x) * (1.0 - 0.5 * s * s)
            })
            .collect();
        let p = profile_peak(&xs, &prof, &SpuriousParams::default()).unwrap();
        let bin = 0.04 * 0.04 / (201.0 * 0.0035);
        assert!((p.period - 0.04).abs() < bin, "period {}", p.period);
        assert!(p.strength > 100.0);
    }

    #[test]
    fn smooth_profile_has_no_strong_peak() {
        let xs: Vec<f64> = (0..201).map(|i| i as f64 * 0.0035).collect();
        let prof: Vec<f64> = xs.iter().map(|&x| 1.0 / (1.0 + (-20.0 * (x - 0.2)).exp())).collect();
        let strength = profile_peak(&xs, &prof, &SpuriousParams::default()).map_or(0.0, |p| p.strength);
        assert!(strength < 20.0, "strength {strength}");
    }
}
