//! Bayes-rule properties of the classifier.

use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sbgc::classifier::{argmax, class_log_likelihoods, classify, decide, posterior};
use sbgc::data::{AnalyticGaussianScore, ClassGaussians};
use sbgc::likelihood::LikelihoodConfig;
use sbgc::sde::{SdeFamily, SdeSpec};

fn two_gaussians(spec: SdeSpec) -> AnalyticGaussianScore {
    let params = ClassGaussians::new(
        vec![vec![-2.0, 0.0], vec![2.0, 0.0]],
        vec![vec![1.0, 1.0], vec![1.0, 1.0]],
    )
    .unwrap();
    AnalyticGaussianScore::new(params, spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn posterior_is_normalized_and_shift_invariant(
        ll in prop::collection::vec(-50.0f64..50.0, 2..8),
        shift in -1e3f64..1e3,
    ) {
        let p = posterior(&ll).unwrap();
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));

        let shifted: Vec<f64> = ll.iter().map(|v| v + shift).collect();
        let q = posterior(&shifted).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert_eq!(argmax(&p), argmax(&q));
    }

    #[test]
    fn prediction_indexes_a_maximal_posterior(
        ll in prop::collection::vec(prop_oneof![-5.0f64..5.0, Just(0.0)], 2..6),
    ) {
        let r = decide(ll, None).unwrap();
        let max = r.posterior.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(r.posterior[r.predicted], max);
        prop_assert!(r.posterior[..r.predicted].iter().all(|v| *v < max));
    }
}

#[test]
fn oracle_pipeline_agrees_with_bayes_rule() {
    let spec = SdeSpec::new(SdeFamily::Vp);
    let oracle = two_gaussians(spec);
    let cfg = LikelihoodConfig::exact();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 1000;
    let mut agree = 0;
    for i in 0..n {
        let c = if i % 2 == 0 { -2.0 } else { 2.0 };
        let x = [c + rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal)];
        let r = classify(&spec, &oracle, &x, 2, &cfg).unwrap();
        let bayes = usize::from(x[0] > 0.0);
        agree += usize::from(r.predicted == bayes);
    }
    assert!(agree as f64 / n as f64 >= 0.99, "agreement {agree}/{n}");
}

#[test]
fn true_class_wins_at_each_class_mean() {
    for family in SdeFamily::ALL {
        let spec = SdeSpec::new(family);
        let oracle = two_gaussians(spec);
        let cfg = LikelihoodConfig::exact();
        let ll0 = class_log_likelihoods(&spec, &oracle, &[-2.0, 0.0], 2, &cfg).unwrap();
        let ll1 = class_log_likelihoods(&spec, &oracle, &[2.0, 0.0], 2, &cfg).unwrap();
        assert!(ll0[0] > ll0[1], "{family}: {ll0:?}");
        assert!(ll1[1] > ll1[0], "{family}: {ll1:?}");
        assert_eq!(classify(&spec, &oracle, &[-2.0, 0.0], 2, &cfg).unwrap().predicted, 0);
    }
}

#[test]
fn boundary_point_goes_to_class_zero() {
    let spec = SdeSpec::new(SdeFamily::Vp);
    let oracle = two_gaussians(spec);
    let r = classify(&spec, &oracle, &[0.0, 0.7], 2, &LikelihoodConfig::exact()).unwrap();
    assert_eq!(r.log_likes[0], r.log_likes[1]);
    assert_eq!(r.predicted, 0);
}
