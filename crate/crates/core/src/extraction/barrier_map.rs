use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::{MeasurementRecord, Target};
use crate::num::{median, moving_average, noise_sigma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierMapParams {
    /// Half-width (grid steps) of the diagonal window used for contrast and mean current.
    pub window: usize,
    /// θ_osc in units of the estimated current-noise σ.
    pub theta_sigmas: f64,
    /// Lower bound on θ_osc relative to the open-channel current (for noiseless maps).
    pub theta_floor: f64,
    /// Accepted window-mean current, relative to the open-channel current.
    pub current_window: (f64, f64),
    /// Open-channel current (A); estimated from the map when absent.
    pub open_current: Option<f64>,
}

impl Default for BarrierMapParams {
    fn default() -> Self {
        BarrierMapParams {
            window: 12,
            theta_sigmas: 3.0,
            theta_floor: 0.005,
            current_window: (0.05, 0.8),
            open_current: None,
        }
    }
}

/// One accepted barrier operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasCandidate {
    pub v_bs: f64,
    pub v_bd: f64,
    pub contrast: f64,
}

/// Oscillation analysis of one channel of a barrier map. Grids are indexed
/// `[i * v_bd.len() + j]` with `i` along the source barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierMapAnalysis {
    pub column: usize,
    pub v_bs: Vec<f64>,
    pub v_bd: Vec<f64>,
    /// Largest peak prominence along the diagonal within the window (A).
    pub contrast: Vec<f64>,
    /// Window-mean current along the diagonal (A).
    pub mean_current: Vec<f64>,
    pub mask: Vec<bool>,
    pub candidates: Vec<BiasCandidate>,
    pub theta_osc: f64,
    pub open_current: f64,
    pub noise_sigma: f64,
}

impl BarrierMapAnalysis {
    pub fn max_contrast_point(&self) -> (f64, f64) {
        let k = (0..self.contrast.len())
            .max_by(|&a, &b| self.contrast[a].total_cmp(&self.contrast[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        let nd = self.v_bd.len();
        (self.v_bs[k / nd], self.v_bd[k % nd])
    }

    /// Highest-contrast candidate; ties go to the lowest `v_bs + v_bd`.
    pub fn best_candidate(&self) -> Option<BiasCandidate> {
        self.candidates.iter().copied().max_by(|a, b| {
            a.contrast
                .total_cmp(&b.contrast)
                .then((b.v_bs + b.v_bd).total_cmp(&(a.v_bs + a.v_bd)))
        })
    }
}

/// Current grid of `col` oriented as `(source, drain)` and sign-corrected.
pub(crate) fn oriented_grid(record: &MeasurementRecord, col: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if record.ndim() != 2 {
        return Err(Error::Dimensionality {
            expected: 2,
            got: record.ndim(),
        });
    }
    let bs = Target::Gate(record.routing.source_barrier);
    let bd = Target::Gate(record.routing.drain_barrier);
    let (a0, a1) = (record.spec.axes[0], record.spec.axes[1]);
    let transposed = match (a0.target, a1.target) {
        (x, y) if x == bs && y == bd => false,
        (x, y) if x == bd && y == bs => true,
        _ => return Err(Error::InvalidInput(format!("barrier map must sweep {} and {}", bs, bd))),
    };
    let data = record
        .channel(col)
        .ok_or_else(|| Error::Addressing(format!("channel {col} not in record")))?;
    let sign = if record.spec.v_sd < 0.0 { -1.0 } else { 1.0 };
    let (n0, n1) = (a0.points, a1.points);
    let (vs, vd) = if transposed {
        (a1.values(), a0.values())
    } else {
        (a0.values(), a1.values())
    };
    let nd = vd.len();
    let mut grid = vec![0.0; n0 * n1];
    for p in 0..n0 {
        for q in 0..n1 {
            let (i, j) = if transposed { (q, p) } else { (p, q) };
            grid[i * nd + j] = sign * data[p * n1 + q];
        }
    }
    Ok((vs, vd, grid))
}

/// Finds Coulomb-oscillation regions of a barrier map by peak prominence along
/// the diagonal, where both barrier voltages increase together.
pub fn analyze_barrier_map(
    record: &MeasurementRecord,
    col: usize,
    params: &BarrierMapParams,
) -> Result<BarrierMapAnalysis> {
    let (vs, vd, grid) = oriented_grid(record, col)?;
    let (ns, nd) = (vs.len(), vd.len());
    let h = params.window.max(1);

    let row_noise: Vec<f64> = (0..ns).map(|i| noise_sigma(&grid[i * nd..(i + 1) * nd])).collect();
    let sigma = median(&row_noise).unwrap_or(0.0);
    let open = params.open_current.unwrap_or_else(|| {
        let mut sorted = grid.clone();
        sorted.sort_by(f64::total_cmp);
        sorted[((sorted.len() - 1) as f64 * 0.995) as usize]
    });
    let theta = (params.theta_sigmas * sigma).max(params.theta_floor * open.abs());

    let mut contrast = vec![0.0; ns * nd];
    let mut mean_current = vec![0.0; ns * nd];
    for d in -(ns as isize - 1)..nd as isize {
        let cells: Vec<usize> = (0..ns)
            .filter_map(|i| {
                let j = i as isize + d;
                (j >= 0 && (j as usize) < nd).then(|| i * nd + j as usize)
            })
            .collect();
        let seq: Vec<f64> = cells.iter().map(|&c| grid[c]).collect();
        let len = seq.len();
        let sm = moving_average(&seq, 3);
        let mut prom = vec![0.0; len];
        for p in 1..len.saturating_sub(1) {
            if sm[p] >= sm[p - 1] && sm[p] > sm[p + 1] {
                let left = sm[p.saturating_sub(h)..=p]
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                let right = sm[p..=(p + h).min(len - 1)]
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                prom[p] = sm[p] - left.max(right);
            }
        }
        // prefix sums for the window mean
        let mut acc = vec![0.0; len + 1];
        for (k, &s) in seq.iter().enumerate() {
            acc[k + 1] = acc[k] + s;
        }
        for q in 0..len {
            let lo = q.saturating_sub(h);
            let hi = (q + h).min(len - 1);
            contrast[cells[q]] = prom[lo..=hi].iter().copied().fold(0.0, f64::max);
            mean_current[cells[q]] = (acc[hi + 1] - acc[lo]) / (hi - lo + 1) as f64;
        }
    }

    let (lo, hi) = params.current_window;
    let mask: Vec<bool> = contrast.iter().map(|&c| c > theta).collect();
    let candidates = (0..ns * nd)
        .filter(|&k| mask[k] && mean_current[k] >= lo * open.abs() && mean_current[k] <= hi * open.abs())
        .map(|k| BiasCandidate {
            v_bs: vs[k / nd],
            v_bd: vd[k % nd],
            contrast: contrast[k],
        })
        .collect();
    Ok(BarrierMapAnalysis {
        column: col,
        v_bs: vs,
        v_bd: vd,
        contrast,
        mean_current,
        mask,
        candidates,
        theta_osc: theta,
        open_current: open,
        noise_sigma: sigma,
    })
}

/// Candidate operating points of one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub column: usize,
    pub points: Vec<BiasCandidate>,
}

impl From<&BarrierMapAnalysis> for CandidateSet {
    fn from(a: &BarrierMapAnalysis) -> Self {
        CandidateSet {
            column: a.column,
            points: a.candidates.clone(),
        }
    }
}

/// Barrier biasing of one row.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CommonBiasDecision {
    /// `(v_bs, v_bd)` shared by the row, if any column has candidates.
    pub shared_point: Option<(f64, f64)>,
    pub shared_ok: Vec<usize>,
    pub individual_points: BTreeMap<usize, (f64, f64)>,
    pub failed: Vec<usize>,
}

/// Picks the bias point covered by the most columns (ties: highest summed
/// contrast, then lowest `v_bs + v_bd`). Uncovered columns fall back to their own
/// best candidate; columns without candidates fail.
pub fn select_common_bias(sets: &[CandidateSet]) -> CommonBiasDecision {
    // (v_bs bits, v_bd bits) -> (count, summed contrast, v_bs, v_bd)
    let mut tally: BTreeMap<(u64, u64), (usize, f64, f64, f64)> = BTreeMap::new();
    for set in sets {
        let mut seen = std::collections::BTreeSet::new();
        for p in &set.points {
            let key = (p.v_bs.to_bits(), p.v_bd.to_bits());
            if !seen.insert(key) {
                continue;
            }
            let e = tally.entry(key).or_insert((0, 0.0, p.v_bs, p.v_bd));
            e.0 += 1;
            e.1 += p.contrast;
        }
    }
    let best = tally.values().copied().max_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then((b.2 + b.3).total_cmp(&(a.2 + a.3)))
            .then(b.2.total_cmp(&a.2))
    });
    let mut decision = CommonBiasDecision {
        shared_point: best.map(|(_, _, s, d)| (s, d)),
        ..Default::default()
    };
    for set in sets {
        let covers = best.is_some_and(|(_, _, s, d)| {
            set.points
                .iter()
                .any(|p| p.v_bs.to_bits() == s.to_bits() && p.v_bd.to_bits() == d.to_bits())
        });
        if covers {
            decision.shared_ok.push(set.column);
        } else if let Some(p) = set.points.iter().copied().max_by(|a, b| {
            a.contrast
                .total_cmp(&b.contrast)
                .then((b.v_bs + b.v_bd).total_cmp(&(a.v_bs + a.v_bd)))
        }) {
            decision.individual_points.insert(set.column, (p.v_bs, p.v_bd));
        } else {
            decision.failed.push(set.column);
        }
    }
    decision
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(list: &[(f64, f64)]) -> Vec<BiasCandidate> {
        list.iter()
            .map(|&(s, d)| BiasCandidate {
                v_bs: s,
                v_bd: d,
                contrast: 1.0,
            })
            .collect()
    }

    #[test]
    fn identical_sets_share_everything() {
        let sets: Vec<CandidateSet> = (1..=7)
            .map(|c| CandidateSet {
                column: c,
                points: pts(&[(0.8, 0.9), (0.81, 0.9)]),
            })
            .collect();
        let d = select_common_bias(&sets);
        assert_eq!(d.shared_ok, (1..=7).collect::<Vec<_>>());
        assert!(d.individual_points.is_empty() && d.failed.is_empty());
        // tie on count and contrast: lowest sum wins
        assert_eq!(d.shared_point, Some((0.8, 0.9)));
    }

    #[test]
    fn one_disjoint_column_goes_individual() {
        let mut sets: Vec<CandidateSet> = (1..=6)
            .map(|c| CandidateSet {
                column: c,
                points: pts(&[(0.8, 0.9), (0.85, 0.95)]),
            })
            .collect();
        sets.push(CandidateSet {
            column: 7,
            points: pts(&[(1.1, 1.2)]),
        });
        let d = select_common_bias(&sets);
        assert_eq!(d.shared_ok.len(), 6);
        assert_eq!(d.individual_points.get(&7), Some(&(1.1, 1.2)));
        assert!(d.failed.is_empty());
    }

    #[test]
    fn empty_sets_fail() {
        let sets: Vec<CandidateSet> = (1..=7)
            .map(|c| CandidateSet {
                column: c,
                points: vec![],
            })
            .collect();
        let d = select_common_bias(&sets);
        assert_eq!(d.shared_point, None);
        assert_eq!(d.failed.len(), 7);
        assert!(d.shared_ok.is_empty());
    }

    #[test]
    fn contrast_breaks_count_ties() {
        let sets = vec![CandidateSet {
            column: 1,
            points: vec![
                BiasCandidate {
                    v_bs: 0.5,
                    v_bd: 0.5,
                    contrast: 1.0,
                },
                BiasCandidate {
                    v_bs: 0.9,
                    v_bd: 0.9,
                    contrast: 2.0,
                },
            ],
        }];
        assert_eq!(select_common_bias(&sets).shared_point, Some((0.9, 0.9)));
    }
}
