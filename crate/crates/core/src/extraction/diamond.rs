use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::instrument::{MeasurementRecord, Target};
use crate::model::PhysicalConstants;
use crate::num::{gradient, median, moving_average, parabolic_offset};
use crate::transport::EdgeLine;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiamondParams {
    /// Moving-average window applied to each cut before differentiating.
    pub smoothing: usize,
    /// Number of adjacent bias cuts averaged into each cut.
    pub bias_smoothing: usize,
    /// Smallest |bias| used, in grid steps from zero bias.
    pub min_cut: usize,
    /// In the refit, cuts with |V_sd| below this many k_B T are dropped.
    pub thermal_exclusion: f64,
    /// In the refit, cuts whose valley is narrower than this many edge widths are dropped.
    pub tip_exclusion: f64,
}

impl Default for DiamondParams {
    fn default() -> Self {
        DiamondParams {
            smoothing: 3,
            bias_smoothing: 3,
            min_cut: 2,
            thermal_exclusion: 6.0,
            tip_exclusion: 2.0,
        }
    }
}

/// Capacitances of one dot from its Coulomb diamond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiamondFit {
    /// aF
    pub c_p: f64,
    /// aF
    pub c_sigma: f64,
    pub alpha: f64,
    /// meV
    pub e_c: f64,
    /// Left-positive, left-negative, right-positive, right-negative.
    pub edge_lines: [Option<EdgeLine>; 4],
    /// `1 - rms(edge residual) / width`, clamped to [0, 1].
    pub quality: f64,
    /// V
    pub width: f64,
    /// V
    pub height: f64,
    /// Plunger voltage of the diamond center (V).
    pub center: f64,
    pub cuts_used: usize,
}

impl DiamondFit {
    /// Derives every capacitance quantity from a measured width and tip height (V).
    pub fn from_geometry(width: f64, height: f64) -> Result<DiamondFit> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::DiamondGeometry(format!("non-positive width {width:e} V")));
        }
        if !(height > 0.0) || !height.is_finite() {
            return Err(Error::DiamondGeometry(format!("non-positive height {height:e} V")));
        }
        let e = PhysicalConstants::<f64>::si().e_af_volts();
        let c_p = e / width;
        let c_sigma = e / height;
        let alpha = c_p / c_sigma;
        if !(alpha < 1.0) {
            return Err(Error::DiamondGeometry(format!(
                "lever arm {alpha:.3} >= 1 (height exceeds width)"
            )));
        }
        Ok(DiamondFit {
            c_p,
            c_sigma,
            alpha,
            e_c: e / c_sigma * 1e3,
            edge_lines: [None; 4],
            quality: 0.0,
            width,
            height,
            center: 0.0,
            cuts_used: 0,
        })
    }
}

/// Edge positions found on one cut.
#[derive(Debug, Clone, Copy)]
struct Cut {
    v: f64,
    left: Option<f64>,
    right: Option<f64>,
    /// FWHM of |dI/dV_P| at the edges (V), when measurable.
    edge_width: Option<f64>,
}

/// Maximal runs `[start, end]` of `flags == true`.
fn runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, flags.len() - 1));
    }
    out
}

/// Sub-grid extremum of `d` (sign `dir`: -1 for minimum) over `lo..=hi`.
fn extremum(vp: &[f64], d: &[f64], lo: usize, hi: usize, dir: f64) -> Option<(f64, f64)> {
    if hi < lo {
        return None;
    }
    let k = (lo..=hi).max_by(|&a, &b| (dir * d[a]).total_cmp(&(dir * d[b])))?;
    if k == 0 || k + 1 >= d.len() || !(dir * d[k] > 0.0) {
        return None;
    }
    let step = vp[k + 1] - vp[k];
    let off = parabolic_offset(dir * d[k - 1], dir * d[k], dir * d[k + 1]);
    // full width at half maximum of the derivative peak
    let half = 0.5 * dir * d[k];
    let mut a = k;
    while a > 0 && dir * d[a] > half {
        a -= 1;
    }
    let mut b = k;
    while b + 1 < d.len() && dir * d[b] > half {
        b += 1;
    }
    let fwhm = if a > 0 && b + 1 < d.len() {
        let xa = vp[a] + (half - dir * d[a]) / (dir * d[a + 1] - dir * d[a]) * step;
        let xb = vp[b - 1] + (dir * d[b - 1] - half) / (dir * d[b - 1] - dir * d[b]) * step;
        xb - xa
    } else {
        f64::NAN
    };
    Some((vp[k] + off * step, fwhm))
}

/// Locates the valley edges of one cut. `center` is the plunger index the
/// valley must contain; `None` picks the valley nearest the window center.
fn analyze_cut(
    vp: &[f64],
    y: &[f64],
    center: Option<usize>,
) -> Option<(usize, f64, Option<f64>, Option<f64>, Option<f64>)> {
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    if !(hi - lo > 1e-12 * hi.abs().max(lo.abs())) || !(hi > lo) {
        return None;
    }
    let mid = 0.5 * (hi + lo);
    let below: Vec<bool> = y.iter().map(|&v| v < mid).collect();
    let valleys = runs(&below);
    let n = y.len();
    let target = center.unwrap_or(n / 2);
    let idx = match center {
        Some(c) => valleys.iter().position(|&(a, b)| a <= c && c <= b)?,
        None => (0..valleys.len())
            .filter(|&k| valleys[k].0 > 0 && valleys[k].1 < n - 1)
            .min_by_key(|&k| {
                let (a, b) = valleys[k];
                ((a + b) as isize - 2 * target as isize).unsigned_abs()
            })?,
    };
    let (a, b) = valleys[idx];
    if a == 0 || b == n - 1 {
        return None;
    }
    let d = gradient(vp, y);
    let left_bound = if idx > 0 { (valleys[idx - 1].1 + a) / 2 } else { 0 };
    let right_bound = if idx + 1 < valleys.len() {
        (b + valleys[idx + 1].0) / 2
    } else {
        n - 1
    };
    let left = extremum(vp, &d, left_bound, (a + 1).min(b), -1.0);
    let right = extremum(vp, &d, b.saturating_sub(1).max(a), right_bound, 1.0);
    let widths: Vec<f64> = [left, right]
        .iter()
        .flatten()
        .map(|&(_, w)| w)
        .filter(|w| w.is_finite())
        .collect();
    let edge_width = (!widths.is_empty()).then(|| widths.iter().sum::<f64>() / widths.len() as f64);
    Some((
        (a + b) / 2,
        vp[(a + b) / 2],
        left.map(|e| e.0),
        right.map(|e| e.0),
        edge_width,
    ))
}

struct Lines {
    lines: [Option<EdgeLine>; 4],
    points: [Vec<(f64, f64)>; 4],
}

fn fit_lines(cuts: &[Cut]) -> Lines {
    let mut points: [Vec<(f64, f64)>; 4] = Default::default();
    for c in cuts {
        let (l, r) = if c.v > 0.0 { (0, 2) } else { (1, 3) };
        if let Some(x) = c.left {
            points[l].push((c.v, x));
        }
        if let Some(x) = c.right {
            points[r].push((c.v, x));
        }
    }
    let lines = std::array::from_fn(|k| {
        let (vs, xs): (Vec<f64>, Vec<f64>) = points[k].iter().copied().unzip();
        if vs.len() < 2 {
            return None;
        }
        linear_fit(&vs, &xs).map(|(x0, slope)| EdgeLine { x0, slope })
    });
    Lines { lines, points }
}

/// Width and tip height from the four edge lines.
fn geometry(lines: &[Option<EdgeLine>; 4]) -> Result<(f64, f64)> {
    let mut widths = Vec::new();
    let mut heights = Vec::new();
    let [lp, ln, rp, rn] = *lines;
    if let (Some(l), Some(r)) = (lp, rp) {
        widths.push(r.x0 - l.x0);
        if let Some(t) = l.intersect_bias(&r) {
            heights.push(t);
        }
    }
    if let (Some(l), Some(r)) = (ln, rn) {
        widths.push(r.x0 - l.x0);
        if let Some(t) = l.intersect_bias(&r) {
            heights.push(-t);
        }
    }
    if widths.is_empty() {
        let found = lines.iter().flatten().count();
        return Err(Error::UnfittableDiamond(format!(
            "need a left and a right edge on the same bias side, found {found} edge line(s)"
        )));
    }
    let width = widths.iter().sum::<f64>() / widths.len() as f64;
    if heights.is_empty() {
        return Err(Error::UnfittableDiamond("edges are parallel".into()));
    }
    let height = heights.iter().sum::<f64>() / heights.len() as f64;
    if !(height > 0.0) {
        return Err(Error::DiamondGeometry(format!("negative tip height {height:e} V")));
    }
    Ok((width, height))
}

/// Fits the diamond in a `(plunger, bias)` grid; `grid[i * vsd.len() + j]` is the
/// current at plunger `vp[i]` and bias `vsd[j]`.
pub fn fit_diamond_grid(vp: &[f64], vsd: &[f64], grid: &[f64], params: &DiamondParams) -> Result<DiamondFit> {
    let (np, ns) = (vp.len(), vsd.len());
    if grid.len() != np * ns || np < 5 || ns < 3 {
        return Err(Error::InvalidInput("diamond grid has the wrong shape".into()));
    }
    let step = (vsd[ns - 1] - vsd[0]).abs() / (ns - 1) as f64;
    let j0 = (0..ns).min_by(|&a, &b| vsd[a].abs().total_cmp(&vsd[b].abs())).unwrap();
    if vsd[j0].abs() > 0.5 * step * (1.0 + 1e-9) {
        return Err(Error::InvalidInput("scan has no zero-bias row".into()));
    }

    // cuts are averaged with their same-sign bias neighbours; straight edges
    // keep their position under a symmetric average
    let cut_of = |j: usize| -> Vec<f64> {
        let s = vsd[j].signum();
        let valid = |k: usize| k < ns && vsd[k].signum() == s && k.abs_diff(j0) >= params.min_cut.max(1);
        let r = (0..=params.bias_smoothing / 2)
            .take_while(|&r| r <= j && valid(j - r) && valid(j + r))
            .last()
            .unwrap_or(0);
        let (lo, hi) = (j - r, j + r);
        let raw: Vec<f64> = (0..np)
            .map(|i| s * (lo..=hi).map(|k| grid[i * ns + k]).sum::<f64>() / (hi - lo + 1) as f64)
            .collect();
        moving_average(&raw, params.smoothing)
    };
    let mut order: Vec<usize> = (0..ns).filter(|&j| j.abs_diff(j0) >= params.min_cut.max(1)).collect();
    order.sort_by(|&a, &b| vsd[a].abs().total_cmp(&vsd[b].abs()).then(a.cmp(&b)));

    // the innermost bracketed valley fixes the diamond
    let mut center = None;
    for &j in &order {
        if let Some((c, ..)) = analyze_cut(vp, &cut_of(j), None) {
            center = Some(c);
            break;
        }
    }
    let Some(center) = center else {
        return Err(Error::UnfittableDiamond("no blockaded valley in any cut".into()));
    };
    // walk outwards on each bias side; past the tip the valley vanishes or
    // stops shrinking and later "valleys" belong to neighbouring transitions
    let dvp = (vp[np - 1] - vp[0]).abs() / (np - 1) as f64;
    let mut cuts: Vec<Cut> = Vec::new();
    for side in [1.0, -1.0] {
        let mut misses = 0;
        // (narrowest valley so far, widest valley)
        let mut seen: Option<(f64, f64)> = None;
        for &j in order.iter().filter(|&&j| vsd[j] * side > 0.0) {
            let Some((_, _, left, right, edge_width)) = analyze_cut(vp, &cut_of(j), Some(center)) else {
                misses += 1;
                if misses > 2 {
                    break;
                }
                continue;
            };
            if let (Some(l), Some(r)) = (left, right) {
                let w = r - l;
                if seen.is_some_and(|(lo, full)| w > lo + (0.25 * full).max(2.0 * dvp)) {
                    break;
                }
                seen = Some(seen.map_or((w, w), |(lo, full)| (lo.min(w), full.max(w))));
            }
            misses = 0;
            cuts.push(Cut {
                v: vsd[j],
                left,
                right,
                edge_width,
            });
        }
    }
    let edges = cuts
        .iter()
        .map(|c| c.left.is_some() as usize + c.right.is_some() as usize)
        .sum::<usize>();
    if edges < 2 {
        return Err(Error::UnfittableDiamond(format!("only {edges} edge point(s) found")));
    }

    let pass1 = fit_lines(&cuts);
    let (w1, h1) = geometry(&pass1.lines)?;

    // refit without thermally merged low-bias cuts and pinched near-tip cuts
    let slopes: Vec<f64> = pass1.lines.iter().flatten().map(|l| l.slope.abs()).collect();
    let alpha1 = 0.5 / (slopes.iter().sum::<f64>() / slopes.len() as f64);
    let mid_widths: Vec<f64> = cuts
        .iter()
        .filter(|c| c.v.abs() > h1 / 3.0 && c.v.abs() < 2.0 * h1 / 3.0)
        .filter_map(|c| c.edge_width)
        .collect();
    let edge_w = median(&mid_widths).unwrap_or(0.0);
    let kt = alpha1 * edge_w / 3.5255;
    let kept: Vec<Cut> = cuts
        .iter()
        .copied()
        .filter(|c| {
            let valley = match (c.left, c.right) {
                (Some(l), Some(r)) => r - l,
                _ => w1 * (1.0 - c.v.abs() / h1),
            };
            c.v.abs() >= (params.thermal_exclusion * kt).min(0.4 * h1) && valley >= params.tip_exclusion * edge_w
        })
        .collect();
    let pass2 = fit_lines(&kept);
    let (final_lines, used, width, height) = match geometry(&pass2.lines) {
        Ok((w, h)) if pass2.lines.iter().flatten().count() >= pass1.lines.iter().flatten().count() => {
            (pass2, kept.len(), w, h)
        }
        _ => (pass1, cuts.len(), w1, h1),
    };

    let mut fit = DiamondFit::from_geometry(width, height)?;
    let mut ss = 0.0;
    let mut count = 0usize;
    for (line, pts) in final_lines.lines.iter().zip(&final_lines.points) {
        if let Some(l) = line {
            for &(v, x) in pts {
                ss += (l.at(v) - x).powi(2);
                count += 1;
            }
        }
    }
    let rms = if count > 0 { (ss / count as f64).sqrt() } else { 0.0 };
    fit.quality = (1.0 - rms / width).clamp(0.0, 1.0);
    fit.edge_lines = final_lines.lines;
    let xs: Vec<f64> = final_lines.lines.iter().flatten().map(|l| l.x0).collect();
    fit.center = match (
        final_lines.lines[0].or(final_lines.lines[1]),
        final_lines.lines[2].or(final_lines.lines[3]),
    ) {
        (Some(l), Some(r)) => 0.5 * (l.x0 + r.x0),
        _ => xs.iter().sum::<f64>() / xs.len() as f64,
    };
    fit.cuts_used = used;
    Ok(fit)
}

/// Fits the diamond of channel `col` of a `(plunger, V_sd)` scan.
pub fn fit_diamond(record: &MeasurementRecord, col: usize, params: &DiamondParams) -> Result<DiamondFit> {
    if record.ndim() != 2 {
        return Err(Error::Dimensionality {
            expected: 2,
            got: record.ndim(),
        });
    }
    let plunger = Target::Gate(record.routing.plunger);
    let (a0, a1) = (record.spec.axes[0], record.spec.axes[1]);
    let transposed = match (a0.target, a1.target) {
        (x, Target::Vsd) if x == plunger => false,
        (Target::Vsd, y) if y == plunger => true,
        _ => {
            return Err(Error::InvalidInput(format!(
                "diamond scan must sweep {plunger} and VSD"
            )))
        }
    };
    let data = record
        .channel(col)
        .ok_or_else(|| Error::Addressing(format!("channel {col} not in record")))?;
    if !transposed {
        return fit_diamond_grid(&a0.values(), &a1.values(), data, params);
    }
    let (n0, n1) = (a0.points, a1.points);
    let mut grid = vec![0.0; n0 * n1];
    for p in 0..n0 {
        for q in 0..n1 {
            grid[q * n0 + p] = data[p * n1 + q];
        }
    }
    fit_diamond_grid(&a1.values(), &a0.values(), &grid, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_inversion() {
        let f = DiamondFit::from_geometry(0.160_217_663_4 / 3.0, 0.160_217_663_4 / 40.0).unwrap();
        assert!((f.c_p - 3.0).abs() < 1e-12);
        assert!((f.c_sigma - 40.0).abs() < 1e-12);
        assert!((f.alpha - 0.075).abs() < 1e-12);
        assert!((f.alpha * f.c_sigma / f.c_p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_geometry_is_rejected() {
        assert!(matches!(
            DiamondFit::from_geometry(0.05, -0.001),
            Err(Error::DiamondGeometry(_))
        ));
        assert!(matches!(
            DiamondFit::from_geometry(0.001, 0.05),
            Err(Error::DiamondGeometry(_))
        ));
    }

    #[test]
    fn runs_are_maximal() {
        assert_eq!(
            runs(&[true, true, false, true, false, false, true]),
            vec![(0, 1), (3, 3), (6, 6)]
        );
    }

    #[test]
    fn flat_grid_is_unfittable() {
        let vp: Vec<f64> = (0..21).map(|i| i as f64 * 0.01).collect();
        let vsd: Vec<f64> = (-5..=5).map(|i| i as f64 * 1e-3).collect();
        let grid = vec![0.0; vp.len() * vsd.len()];
        assert!(matches!(
            fit_diamond_grid(&vp, &vsd, &grid, &DiamondParams::default()),
            Err(Error::UnfittableDiamond(_))
        ));
    }
}
