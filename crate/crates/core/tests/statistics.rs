use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use qdarray::model::{plunger_capacitance, PhysicalConstants};
use qdarray::statistics::{fit_parallel_plate, gaussian_sigma_filtered, probit_transform, SigmaMethod};

/// Exact quantiles of Normal(mu, sigma) at the plotting positions (i - 0.5) / n.
fn normal_quantiles(n: usize, mu: f64, sigma: f64) -> Vec<f64> {
    let d = StdNormal::new(mu, sigma).unwrap();
    (0..n).map(|i| d.inverse_cdf((i as f64 + 0.5) / n as f64)).collect()
}

#[test]
fn exact_quantiles_give_exact_sigma() {
    let xs = normal_quantiles(10_000, 0.64, 0.063);
    for method in [SigmaMethod::Slope, SigmaMethod::Truncated] {
        let r = gaussian_sigma_filtered(&xs, method).unwrap();
        let s = r.sigma_filtered.unwrap();
        match method {
            // quantiles lie exactly on the line v = mu + sigma z
            SigmaMethod::Slope => assert!((s / 0.063 - 1.0).abs() < 1e-6, "{s}"),
            SigmaMethod::Truncated => assert!((s / 0.063 - 1.0).abs() < 0.01, "{s}"),
        }
        assert!((r.mu_filtered.unwrap() - 0.64).abs() < 1e-6);
        assert!((r.sigma_raw.unwrap() / 0.063 - 1.0).abs() < 0.02);
    }
}

#[test]
fn z_scores_are_antisymmetric_plotting_positions() {
    let r = probit_transform(&[5.0f64, 1.0, 3.0, 2.0, 4.0]).unwrap();
    assert_eq!(r.sorted_values, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    let want = [
        -1.2815515655446004,
        -0.5244005127080407,
        0.0,
        0.5244005127080407,
        1.2815515655446004,
    ];
    for (z, w) in r.z_scores.iter().zip(want) {
        assert!((z - w).abs() < 1e-9, "{z} vs {w}");
    }
    for i in 0..5 {
        assert_eq!(r.z_scores[i], -r.z_scores[4 - i]);
    }
}

fn model_points(area: f64, delta2: f64) -> Vec<(f64, f64)> {
    let k = PhysicalConstants::si();
    [8.0, 12.0, 15.0, 20.0]
        .iter()
        .map(|&t1| (t1, plunger_capacitance(area, t1 + delta2, &k).unwrap()))
        .collect()
}

#[test]
fn parallel_plate_noiseless_is_exact() {
    let fit = fit_parallel_plate(&model_points(3733.0, 4.5)).unwrap();
    assert!((fit.area / 3733.0 - 1.0).abs() < 1e-9, "{}", fit.area);
    assert!((fit.delta2 - 4.5).abs() < 1e-9, "{}", fit.delta2);
    assert!(fit.residual < 1e-9);
}

#[test]
fn parallel_plate_is_unbiased_under_symmetric_noise() {
    let clean = model_points(3733.0, 4.5);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let (mut area, mut delta2) = (0.0, 0.0);
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = clean
            .iter()
            .map(|&(t, c)| (t, c * (1.0 + noise.sample(&mut rng))))
            .collect();
        let fit = fit_parallel_plate(&pts).unwrap();
        area += fit.area / 100.0;
        delta2 += fit.delta2 / 100.0;
    }
    assert!((area / 3733.0 - 1.0).abs() < 0.02, "{area}");
    assert!((delta2 / 4.5 - 1.0).abs() < 0.02, "{delta2}");
}
