//! Scalar abstraction shared by the model, transport and statistics kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar the physics kernels are generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable logistic `1 / (1 + exp(-x))`.
#[inline]
pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Fermi-Dirac occupation `1 / (1 + exp(x))`.
#[inline]
pub fn fermi<T: Real>(x: T) -> T {
    logistic(-x)
}

/// `cosh(x)^-2`, safe for large |x|.
#[inline]
pub fn sech2<T: Real>(x: T) -> T {
    let ax = x.abs();
    if ax > T::lit(350.0) {
        return T::zero();
    }
    let e = (-ax - ax).exp();
    // 4 e^{-2|x|} / (1 + e^{-2|x|})^2
    T::lit(4.0) * e / ((T::one() + e) * (T::one() + e))
}

/// Evenly spaced grid including both endpoints.
pub fn linspace<T: Real>(start: T, stop: T, points: usize) -> Vec<T> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / T::from_usize(points - 1).unwrap();
            (0..points)
                .map(|i| {
                    if i == points - 1 {
                        stop
                    } else {
                        start + step * T::from_usize(i).unwrap()
                    }
                })
                .collect()
        }
    }
}

pub fn mean<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().copied().sum::<T>() / T::from_usize(xs.len()).unwrap())
}

/// Sample standard deviation (N - 1 denominator).
pub fn sample_std<T: Real>(xs: &[T]) -> Option<T> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Some((ss / T::from_usize(xs.len() - 1).unwrap()).sqrt())
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Centered moving average; the window shrinks at the edges.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    if half == 0 || xs.is_empty() {
        return xs.to_vec();
    }
    let n = xs.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            xs[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Centered finite differences (one-sided at the ends).
pub fn gradient(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = ys.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            (ys[b] - ys[a]) / (xs[b] - xs[a])
        })
        .collect()
}

/// Robust white-noise estimate from first differences (MAD scaled to σ).
pub fn noise_sigma(ys: &[f64]) -> f64 {
    if ys.len() < 3 {
        return 0.0;
    }
    let diffs: Vec<f64> = ys.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    median(&diffs).unwrap_or(0.0) / (0.674_489_75 * std::f64::consts::SQRT_2)
}

/// Vertex offset in [-0.5, 0.5] of the parabola through three equally spaced samples.
pub fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < f64::MIN_POSITIVE || !denom.is_finite() {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}
