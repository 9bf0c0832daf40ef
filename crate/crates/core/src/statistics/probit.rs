use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::num::Real;

/// Estimator of the Gaussian core width from the central probit band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMethod {
    /// Least-squares slope of value against z over `|z| <= 1`.
    #[default]
    Slope,
    /// Standard deviation of the retained values, divided by that of a unit
    /// normal truncated to `|z| <= 1`.
    Truncated,
}

/// Standard deviation of a unit normal restricted to `[-1, 1]`.
pub const TRUNCATED_UNIT_SD: f64 = 0.539_560_093_754_896_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct ProbitResult<T = f64> {
    pub sorted_values: Vec<T>,
    pub z_scores: Vec<T>,
    pub sigma_raw: Option<T>,
    pub sigma_filtered: Option<T>,
    pub mu_filtered: Option<T>,
    pub kept: usize,
}

/// Sorts the values and assigns z-scores at plotting positions `(i - 0.5) / N`.
/// Ties keep their input order.
pub fn probit_transform<T: Real>(values: &[T]) -> Result<ProbitResult<T>> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("probit input contains non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let unit = Normal::standard();
    let z: Vec<T> = (0..n)
        .map(|i| {
            // mirror the upper half so z is antisymmetric to the last bit
            let k = i.min(n - 1 - i);
            let p = (k as f64 + 0.5) / n as f64;
            let q = unit.inverse_cdf(p);
            let q = if 2 * i + 1 == n { 0.0 } else { q };
            T::lit(if i == k { q } else { -q })
        })
        .collect();
    Ok(ProbitResult {
        sorted_values: sorted,
        z_scores: z,
        sigma_raw: None,
        sigma_filtered: None,
        mu_filtered: None,
        kept: 0,
    })
}

/// Width of the Gaussian core: the probit transform restricted to `|z| <= 1`.
pub fn gaussian_sigma_filtered<T: Real>(values: &[T], method: SigmaMethod) -> Result<ProbitResult<T>> {
    let mut r = probit_transform(values)?;
    let pairs: Vec<(T, T)> = r
        .z_scores
        .iter()
        .zip(&r.sorted_values)
        .filter(|(z, _)| z.abs() <= T::one())
        .map(|(&z, &v)| (z, v))
        .collect();
    let m = pairs.len();
    if m < 3 {
        return Err(Error::InsufficientData { needed: 3, got: m });
    }
    let mf = T::from_usize(m).unwrap();
    let mz = pairs.iter().map(|p| p.0).sum::<T>() / mf;
    let mv = pairs.iter().map(|p| p.1).sum::<T>() / mf;
    let (sigma, mu) = match method {
        SigmaMethod::Slope => {
            let szz: T = pairs.iter().map(|p| (p.0 - mz) * (p.0 - mz)).sum();
            let szv: T = pairs.iter().map(|p| (p.0 - mz) * (p.1 - mv)).sum();
            let slope = szv / szz;
            (slope, mv - slope * mz)
        }
        SigmaMethod::Truncated => {
            let kept: Vec<T> = pairs.iter().map(|p| p.1).collect();
            let sd = crate::num::sample_std(&kept).unwrap_or(T::zero());
            (sd / T::lit(TRUNCATED_UNIT_SD), mv)
        }
    };
    r.sigma_raw = crate::num::sample_std(values);
    r.sigma_filtered = Some(sigma);
    r.mu_filtered = Some(mu);
    r.kept = m;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_point_example() {
        let r = gaussian_sigma_filtered(&[3.0_f64, 1.0, 5.0, 2.0, 4.0], SigmaMethod::Slope).unwrap();
        let z = [-1.2816, -0.5244, 0.0, 0.5244, 1.2816];
        for (a, b) in r.z_scores.iter().zip(z) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!((r.sigma_raw.unwrap() - 1.5811).abs() < 1e-4);
        assert!((r.sigma_filtered.unwrap() - 1.9069).abs() < 1e-4);
        assert_eq!(r.kept, 3);
    }

    #[test]
    fn too_few() {
        assert!(matches!(
            probit_transform(&[1.0, 2.0]),
            Err(Error::InsufficientData { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn truncated_constant() {
        // sqrt(1 - 2 φ(1) / (2 Φ(1) - 1))
        let phi1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let cdf = Normal::standard().cdf(1.0);
        let v = (1.0 - 2.0 * phi1 / (2.0 * cdf - 1.0)).sqrt();
        // statrs' cdf is good to about 1e-11
        assert!((v - TRUNCATED_UNIT_SD).abs() < 1e-9, "{v}");
    }
}
