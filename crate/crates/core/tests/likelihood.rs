//! Likelihood computation against analytic Gaussian densities.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sbgc::data::{AnalyticGaussianScore, ClassGaussians};
use sbgc::likelihood::{
    divergence, integrate_flow, log_likelihood, log_likelihood_stream, DivergenceMode, LikelihoodConfig, ProbeDist,
};
use sbgc::rng::rng_from_seed;
use sbgc::score_model::LinearScore;
use sbgc::sde::{SdeFamily, SdeSpec};

fn std_normal_logpdf(x: &[f64]) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    -0.5 * sq - 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn random_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

fn hutchinson(n_probes: usize, n_repeats: usize, dist: ProbeDist, seed: u64) -> LikelihoodConfig {
    LikelihoodConfig {
        divergence: DivergenceMode::Hutchinson,
        probe_dist: dist,
        n_probes,
        n_repeats,
        seed,
        ..LikelihoodConfig::default()
    }
}

#[test]
fn standard_normal_oracle_is_reproduced_for_every_family() {
    let points = random_points(20, 2, 3);
    for family in SdeFamily::ALL {
        let spec = SdeSpec::new(family);
        let oracle = AnalyticGaussianScore::standard_normal(2, spec).unwrap();
        let worst = points
            .iter()
            .map(|x| {
                let lp = log_likelihood(&spec, &oracle, x, 0, &LikelihoodConfig::exact()).unwrap();
                (lp - std_normal_logpdf(x)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-2, "{family}: max error {worst}");
    }
}

/// The fixed priors ignore the residual terminal mean of shifted data (the
/// full data mean for VE, `e^{−B(1)/2}·m` for VP and sub-VP). Swapping in the
/// true terminal density must recover the data density for every family.
#[test]
fn shifted_anisotropic_gaussian_is_reproduced() {
    let params = ClassGaussians::new(
        vec![vec![-2.0, 0.0], vec![1.0, 3.0]],
        vec![vec![1.0, 1.0], vec![0.5, 2.0]],
    )
    .unwrap();
    for family in SdeFamily::ALL {
        let spec = SdeSpec::new(family);
        let oracle = AnalyticGaussianScore::new(params.clone(), spec).unwrap();
        for (i, x) in random_points(5, 2, 8).iter().enumerate() {
            let y = i % 2;
            let truth = params.log_density(x, y);
            let flow =
                integrate_flow(&spec, &oracle, x, y, &LikelihoodConfig::exact(), None).unwrap();
            let terminal = oracle.marginal_log_density(&flow.terminal.x, 1.0, y).unwrap();
            let corrected = terminal + flow.terminal.delta_logp;
            assert!((corrected - truth).abs() < 1e-2, "{family} y={y}: {corrected} vs {truth}");
        }
    }
}

#[test]
fn many_probe_hutchinson_approaches_exact() {
    let spec = SdeSpec::new(SdeFamily::Vp);
    let params = ClassGaussians::new(vec![vec![0.5, -1.0]], vec![vec![0.3, 2.5]]).unwrap();
    let oracle = AnalyticGaussianScore::new(params, spec).unwrap();
    let x = [0.9, 0.4];
    let exact = log_likelihood(&spec, &oracle, &x, 0, &LikelihoodConfig::exact()).unwrap();
    for dist in [ProbeDist::Rademacher, ProbeDist::Gaussian] {
        let est = log_likelihood(&spec, &oracle, &x, 0, &hutchinson(1000, 1, dist, 17)).unwrap();
        assert!((est - exact).abs() < 5e-2, "{dist:?}: {est} vs {exact}");
    }
}

#[test]
fn hutchinson_divergence_of_linear_score() {
    let spec = SdeSpec::new(SdeFamily::Vp);
    let a = vec![-1.0, 0.4, 0.0, 0.3, -2.0, 0.5, 0.1, -0.2, -0.5];
    let score = LinearScore::new(a, vec![0.0; 3], 1).unwrap();
    let x = [0.2, -0.1, 0.7];
    let t = 0.6;
    let exact = divergence(&spec, &score, &x, t, 0, &LikelihoodConfig::exact(), &mut rng_from_seed(0))
        .unwrap();
    let closed = 3.0 * spec.drift_coeff(t) - 0.5 * spec.diffusion_sq(t) * score.trace();
    assert!((exact - closed).abs() < 1e-12);
    let est = divergence(
        &spec,
        &score,
        &x,
        t,
        0,
        &hutchinson(10_000, 1, ProbeDist::Rademacher, 0),
        &mut rng_from_seed(1),
    )
    .unwrap();
    assert!(((est - exact) / exact).abs() < 0.05, "{est} vs {exact}");

    let one_d = LinearScore::new(vec![-1.7], vec![0.0], 1).unwrap();
    for seed in 0..5 {
        let cfg = hutchinson(1, 1, ProbeDist::Rademacher, 0);
        let e = divergence(&spec, &one_d, &[0.3], t, 0, &LikelihoodConfig::exact(), &mut rng_from_seed(0))
            .unwrap();
        let h = divergence(&spec, &one_d, &[0.3], t, 0, &cfg, &mut rng_from_seed(seed)).unwrap();
        assert_eq!(e, h);
    }
}

#[test]
fn tightening_tolerances_converges() {
    let spec = SdeSpec::new(SdeFamily::SubVp);
    let oracle = AnalyticGaussianScore::standard_normal(2, spec).unwrap();
    let x = [1.1, -0.6];
    let logp = |tol: f64| {
        let cfg = LikelihoodConfig {
            rtol: tol,
            atol: tol,
            ..LikelihoodConfig::exact()
        };
        log_likelihood(&spec, &oracle, &x, 0, &cfg).unwrap()
    };
    let values: Vec<f64> = [1e-3, 1e-4, 1e-5, 1e-6].iter().map(|&t| logp(t)).collect();
    let finest = values[3];
    let gaps: Vec<f64> = values[..3].iter().map(|v| (v - finest).abs()).collect();
    assert!(gaps[0] >= gaps[1] && gaps[1] >= gaps[2], "gaps {gaps:?}");
    assert!(gaps[2] < 1e-3);
}

#[test]
fn averaging_repeats_reduces_variance() {
    let spec = SdeSpec::new(SdeFamily::Vp);
    let params = ClassGaussians::new(vec![vec![0.0, 0.0]], vec![vec![0.2, 3.0]]).unwrap();
    let oracle = AnalyticGaussianScore::new(params, spec).unwrap();
    let x = [0.4, -0.8];
    let seeds = 120;
    let variance = |repeats: usize| {
        let est: Vec<f64> = (0..seeds)
            .map(|s| {
                let cfg = hutchinson(1, repeats, ProbeDist::Gaussian, 1000 + s);
                log_likelihood(&spec, &oracle, &x, 0, &cfg).unwrap()
            })
            .collect();
        let mean = est.iter().sum::<f64>() / seeds as f64;
        est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64
    };
    let (v1, v4, v16) = (variance(1), variance(4), variance(16));
    assert!(v1 > 0.0);
    for (ratio, label) in [(v1 / v4, "1→4"), (v4 / v16, "4→16")] {
        assert!((2.0..8.0).contains(&ratio), "variance ratio {label}: {ratio}");
    }
}

#[test]
fn probe_streams_are_reproducible_and_distinct() {
    let spec = SdeSpec::new(SdeFamily::Vp);
    let params = ClassGaussians::new(vec![vec![0.0, 0.0]], vec![vec![0.2, 3.0]]).unwrap();
    let oracle = AnalyticGaussianScore::new(params, spec).unwrap();
    let cfg = hutchinson(1, 1, ProbeDist::Gaussian, 5);
    let x = [0.1, 0.2];
    let a = log_likelihood_stream(&spec, &oracle, &x, 0, &cfg, 3).unwrap();
    let b = log_likelihood_stream(&spec, &oracle, &x, 0, &cfg, 3).unwrap();
    let c = log_likelihood_stream(&spec, &oracle, &x, 0, &cfg, 4).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert_ne!(a, c);
}
