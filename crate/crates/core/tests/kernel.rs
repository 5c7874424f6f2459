//! Closed-form perturbation kernels against simulated forward SDE paths.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sbgc::sde::{SdeFamily, SdeSpec};

const PATHS: usize = 100_000;
const STEPS: usize = 1000;
const T: f64 = 0.5;

/// Euler–Maruyama moments (per-coordinate mean, std) at `T` from `x0`.
fn simulate(spec: &SdeSpec, x0: &[f64], seed: u64) -> (Vec<f64>, Vec<f64>) {
    let d = x0.len();
    let dt = T / STEPS as f64;
    // The drift coefficient and diffusion depend on t only; tabulate them.
    let coeffs: Vec<(f64, f64)> = (0..STEPS)
        .map(|k| {
            let t = k as f64 * dt;
            (spec.drift_coeff(t), spec.diffusion_sq(t).sqrt())
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut x = vec![0.0; d];
    for _ in 0..PATHS {
        x.copy_from_slice(x0);
        for &(c, g) in &coeffs {
            for xi in x.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *xi += c * *xi * dt + g * dt.sqrt() * z;
            }
        }
        for i in 0..d {
            sum[i] += x[i];
            sum_sq[i] += x[i] * x[i];
        }
    }
    let n = PATHS as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sum_sq
        .iter()
        .zip(&mean)
        .map(|(s, m)| ((s / n - m * m) * n / (n - 1.0)).sqrt())
        .collect();
    (mean, std)
}

#[test]
fn euler_maruyama_moments_match_closed_form() {
    let x0 = [5.0, 0.0];
    for (k, family) in SdeFamily::ALL.into_iter().enumerate() {
        let spec = SdeSpec::new(family);
        let m = spec.marginal(&x0, T).unwrap();
        let (mean, std) = simulate(&spec, &x0, 1000 + k as u64);
        for i in 0..x0.len() {
            let mean_ok = if m.mean[i] == 0.0 {
                mean[i].abs() < 0.02
            } else {
                ((mean[i] - m.mean[i]) / m.mean[i]).abs() < 0.02
            };
            assert!(mean_ok, "{family}: coordinate {i} mean {} vs {}", mean[i], m.mean[i]);
            let rel = ((std[i] - m.std) / m.std).abs();
            assert!(rel < 0.02, "{family}: coordinate {i} std {} vs {}", std[i], m.std);
        }
    }
}

#[test]
fn vp_terminal_mean_is_negligible() {
    let spec = SdeSpec::new(SdeFamily::Vp);
    let x0 = [3.0, -4.0];
    let m = spec.marginal(&x0, 1.0).unwrap();
    let norm = m.mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm <= 6.7e-3 * 5.0);
    assert!((m.std - 1.0).abs() < 1e-4);
}
