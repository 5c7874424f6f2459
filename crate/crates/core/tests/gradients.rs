//! Finite-difference checks of the score network's derivatives.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sbgc::score_model::{MlpConfig, MlpScoreNet, ScoreFunction};
use sbgc::sde::{SdeFamily, SdeSpec};

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// A network with every parameter (including the zero-initialized head)
/// randomized, so that no gradient is trivially zero.
fn random_net(dim: usize, family: SdeFamily, seed: u64) -> MlpScoreNet {
    let cfg = MlpConfig {
        fourier_features: 8,
        fourier_scale: 4.0,
        class_embed_dim: 8,
        hidden_width: 16,
    };
    let mut net = MlpScoreNet::new(dim, 3, SdeSpec::new(family), cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for p in net.params_mut() {
        *p += 0.3 * rng.sample::<f64, _>(StandardNormal);
    }
    net
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[test]
fn input_jvp_matches_central_differences() {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for probe in 0..12 {
        let family = SdeFamily::ALL[probe % 3];
        let net = random_net(3, family, probe as u64);
        let x = normal_vec(&mut rng, 3, 1.0);
        let v = normal_vec(&mut rng, 3, 1.0);
        let t = rng.random_range(0.05..1.0);
        let y = probe % 3;
        let jvp = net.input_jvp(&x, t, y, &v).unwrap();
        let shifted = |s: f64| -> Vec<f64> {
            let xs: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            net.evaluate(&xs, t, y).unwrap()
        };
        let (plus, minus) = (shifted(h), shifted(-h));
        let num: f64 = jvp
            .iter()
            .zip(plus.iter().zip(&minus))
            .map(|(j, (p, m))| (j - (p - m) / (2.0 * h)).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = jvp.iter().map(|j| j * j).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

#[test]
fn vjp_with_basis_vectors_gives_jacobian_rows() {
    let net = random_net(3, SdeFamily::Vp, 4);
    let x = [0.3, -1.2, 0.8];
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        let row = net.input_vjp(&x, 0.4, 1, &e).unwrap();
        for j in 0..3 {
            let mut ej = [0.0; 3];
            ej[j] = 1.0;
            let col = net.input_jvp(&x, 0.4, 1, &ej).unwrap();
            assert!((row[j] - col[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn param_grad_matches_central_differences() {
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for trial in 0..3u64 {
        let mut net = random_net(2, SdeFamily::ALL[trial as usize], 100 + trial);
        let x = normal_vec(&mut rng, 2, 1.0);
        let adjoint = normal_vec(&mut rng, 2, 1.0);
        let t = rng.random_range(0.05..1.0);
        let y = trial as usize % 3;
        let loss = |net: &MlpScoreNet| -> f64 {
            let s = net.evaluate(&x, t, y).unwrap();
            s.iter().zip(&adjoint).map(|(a, b)| a * b).sum()
        };
        let fwd = net.forward(&x, t, y).unwrap();
        let grad = net.param_grad(&fwd, &adjoint);
        // Probe a few parameters from every tensor.
        let n = net.param_count();
        for _ in 0..8 {
            let k = rng.random_range(0..n);
            let orig = net.params()[k];
            net.params_mut()[k] = orig + h;
            let lp = loss(&net);
            net.params_mut()[k] = orig - h;
            let lm = loss(&net);
            net.params_mut()[k] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let e = rel_err(grad[k], fd);
            assert!(e < 1e-4, "param {k}: grad {} fd {fd} rel {e:e}", grad[k]);
            worst = worst.max(e);
            checked += 1;
        }
    }
    assert!(checked >= 10);
    assert!(worst < 1e-4);
}

#[test]
fn param_grad_is_linear_in_the_adjoint() {
    let net = random_net(2, SdeFamily::SubVp, 9);
    let fwd = net.forward(&[0.5, -0.5], 0.3, 2).unwrap();
    let g1 = net.param_grad(&fwd, &[0.7, -0.2]);
    let g2 = net.param_grad(&fwd, &[1.4, -0.4]);
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
    let zero = net.param_grad(&fwd, &[0.0, 0.0]);
    assert!(zero.iter().all(|g| *g == 0.0));
}

#[test]
fn input_jacobian_is_lipschitz_on_probes() {
    let net = random_net(2, SdeFamily::Vp, 31);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let x = normal_vec(&mut rng, 2, 1.5);
        let d = normal_vec(&mut rng, 2, 1e-4);
        let v = normal_vec(&mut rng, 2, 1.0);
        let xd: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        let a = net.input_jvp(&x, 0.5, 0, &v).unwrap();
        let b = net.input_jvp(&xd, 0.5, 0, &v).unwrap();
        let diff = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let norm = d.iter().map(|p| p * p).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    assert!(worst.is_finite() && worst < 1e6, "ratio {worst}");
}
