//! Small dense Levenberg-Marquardt solver for problems with a handful of parameters.

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy)]
pub struct LmOptions<T> {
    pub max_iter: usize,
    /// Relative step tolerance.
    pub xtol: T,
    /// Relative reduction tolerance of the sum of squares.
    pub ftol: T,
    pub lambda0: T,
}

impl<T: Real> Default for LmOptions<T> {
    fn default() -> Self {
        LmOptions {
            max_iter: 200,
            xtol: T::lit(1e-10),
            ftol: T::lit(1e-14),
            lambda0: T::lit(1e-3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult<T> {
    pub params: Vec<T>,
    /// Sum of squared residuals at `params`.
    pub ssr: T,
    pub iterations: usize,
    pub converged: bool,
    /// `s² (JᵀJ)⁻¹` with `s² = ssr / (m - n)`; `None` if singular or `m <= n`.
    pub covariance: Option<Vec<Vec<T>>>,
}

impl<T: Real> LmResult<T> {
    pub fn stderr(&self, i: usize) -> Option<T> {
        self.covariance.as_ref().map(|c| c[i][i].max(T::zero()).sqrt())
    }
}

/// Solves `A x = b` for a small dense system by Gaussian elimination with partial pivoting.
pub fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if !(a[pivot][col].abs() > T::min_positive_value()) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] = a[row][k] - f * v;
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let s: T = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn invert<T: Real>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        cols.push(solve_dense(a.to_vec(), e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

fn forward_jacobian<T: Real, F>(f: &F, p: &[T], r0: &[T], jac: &mut [Vec<T>])
where
    F: Fn(&[T], &mut [T]),
{
    let eps = T::epsilon().sqrt();
    let mut q = p.to_vec();
    let mut r = vec![T::zero(); r0.len()];
    for j in 0..p.len() {
        let h = eps * p[j].abs().max(T::one());
        q[j] = p[j] + h;
        f(&q, &mut r);
        for i in 0..r0.len() {
            jac[i][j] = (r[i] - r0[i]) / h;
        }
        q[j] = p[j];
    }
}

fn normal_equations<T: Real>(jac: &[Vec<T>], r: &[T], n: usize) -> (Vec<Vec<T>>, Vec<T>) {
    let mut jtj = vec![vec![T::zero(); n]; n];
    let mut jtr = vec![T::zero(); n];
    for (row, &ri) in jac.iter().zip(r) {
        for a in 0..n {
            jtr[a] = jtr[a] + row[a] * ri;
            for b in a..n {
                jtj[a][b] = jtj[a][b] + row[a] * row[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            jtj[a][b] = jtj[b][a];
        }
    }
    (jtj, jtr)
}

/// Minimizes `Σ r_i(p)²` where `residuals(p, r)` fills `r` (length `m`).
/// The Jacobian is taken by forward differences.
pub fn levenberg_marquardt<T: Real, F>(residuals: F, p0: &[T], m: usize, opts: &LmOptions<T>) -> Result<LmResult<T>>
where
    F: Fn(&[T], &mut [T]),
{
    let n = p0.len();
    if m < n {
        return Err(Error::InsufficientData { needed: n, got: m });
    }
    let ssq = |r: &[T]| r.iter().map(|&v| v * v).sum::<T>();
    let mut p = p0.to_vec();
    let mut r = vec![T::zero(); m];
    residuals(&p, &mut r);
    let mut cost = ssq(&r);
    if !cost.is_finite() {
        return Err(Error::NonConvergence(
            "non-finite residuals at the initial guess".into(),
        ));
    }
    let mut jac = vec![vec![T::zero(); n]; m];
    let mut lambda = opts.lambda0;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![T::zero(); m];

    while iterations < opts.max_iter && !converged {
        iterations += 1;
        forward_jacobian(&residuals, &p, &r, &mut jac);
        let (jtj, jtr) = normal_equations(&jac, &r, n);
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[k][k] = a[k][k] + lambda * jtj[k][k].max(T::lit(1e-30));
            }
            let Some(step) = solve_dense(a, jtr.iter().map(|&v| -v).collect()) else {
                lambda = lambda * T::lit(10.0);
                continue;
            };
            let q: Vec<T> = p.iter().zip(&step).map(|(&a, &b)| a + b).collect();
            residuals(&q, &mut trial);
            let c = ssq(&trial);
            if c.is_finite() && c <= cost {
                let step_norm = step.iter().map(|&v| v * v).sum::<T>().sqrt();
                let p_norm = p.iter().map(|&v| v * v).sum::<T>().sqrt();
                let rel_drop = (cost - c) / cost.max(T::min_positive_value());
                p = q;
                std::mem::swap(&mut r, &mut trial);
                cost = c;
                lambda = (lambda / T::lit(3.0)).max(T::lit(1e-12));
                accepted = true;
                if step_norm <= opts.xtol * (p_norm + opts.xtol) || rel_drop <= opts.ftol {
                    converged = true;
                }
                break;
            }
            lambda = lambda * T::lit(4.0);
        }
        if !accepted {
            // no downhill step at any damping: a (local) minimum to working precision
            converged = true;
        }
    }

    forward_jacobian(&residuals, &p, &r, &mut jac);
    let (jtj, _) = normal_equations(&jac, &r, n);
    let covariance = if m > n {
        let s2 = cost / T::from_usize(m - n).unwrap();
        invert(&jtj).map(|inv| {
            inv.into_iter()
                .map(|row| row.into_iter().map(|v| v * s2).collect())
                .collect()
        })
    } else {
        None
    };
    Ok(LmResult {
        params: p,
        ssr: cost,
        iterations,
        converged,
        covariance,
    })
}

/// Ordinary least squares line `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a: Vec<Vec<f64>> = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_dense(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve_dense(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn fits_exponential_decay() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-1.7 * x).exp() + 0.2).collect();
        let res = levenberg_marquardt(
            |p: &[f64], r: &mut [f64]| {
                for i in 0..xs.len() {
                    r[i] = p[0] * (-p[1] * xs[i]).exp() + p[2] - ys[i];
                }
            },
            &[1.0, 1.0, 0.0],
            xs.len(),
            &LmOptions::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert!((res.params[0] - 3.0).abs() < 1e-7);
        assert!((res.params[1] - 1.7).abs() < 1e-7);
        assert!((res.params[2] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn covariance_matches_linear_regression() {
        // for a linear model LM must reproduce the OLS standard errors
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| 1.0 + 0.5 * x + if i % 2 == 0 { 0.1 } else { -0.1 })
            .collect();
        let res = levenberg_marquardt(
            |p: &[f64], r: &mut [f64]| {
                for i in 0..xs.len() {
                    r[i] = p[0] + p[1] * xs[i] - ys[i];
                }
            },
            &[0.0, 0.0],
            xs.len(),
            &LmOptions::default(),
        )
        .unwrap();
        let (a, b) = linear_fit(&xs, &ys).unwrap();
        assert!((res.params[0] - a).abs() < 1e-8 && (res.params[1] - b).abs() < 1e-8);
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let s2 = res.ssr / (n - 2.0);
        let se_b = (s2 / sxx).sqrt();
        assert!((res.stderr(1).unwrap() / se_b - 1.0).abs() < 1e-5);
    }

    #[test]
    fn works_in_single_precision() {
        let xs: Vec<f32> = (0..10).map(|i| i as f32).collect();
        let res = levenberg_marquardt(
            |p: &[f32], r: &mut [f32]| {
                for i in 0..xs.len() {
                    r[i] = p[0] * xs[i] + p[1] - (2.0 * xs[i] - 1.0);
                }
            },
            &[0.0_f32, 0.0],
            xs.len(),
            &LmOptions::default(),
        )
        .unwrap();
        let res: LmResult<f32> = res;
        assert!((res.params[0] - 2.0).abs() < 1e-3 && (res.params[1] + 1.0).abs() < 1e-3);
    }
}
