//! Bayes-rule classification from per-class likelihoods.

use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::likelihood::{log_likelihood_stream, LikelihoodConfig};
use crate::score_model::ScoreFunction;
use crate::sde::SdeSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    /// `log p(x | y = j)` for every class `j`.
    pub log_likes: Vec<f64>,
    /// `p(y = j | x)`.
    pub posterior: Vec<f64>,
    pub predicted: usize,
    pub ground_truth: Option<usize>,
}

impl ClassificationResult {
    /// Posterior probability of the ground-truth class, when known.
    pub fn ground_truth_posterior(&self) -> Option<f64> {
        self.ground_truth.map(|y| self.posterior[y])
    }
}

/// Per-class log-likelihoods of `x0`. All classes use probe stream `stream`,
/// so differences between entries reflect the conditioning only.
pub fn class_log_likelihoods_stream<S: ScoreFunction + ?Sized>(
    spec: &SdeSpec,
    net: &S,
    x0: &[f64],
    n: usize,
    cfg: &LikelihoodConfig,
    stream: u64,
) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "classification needs at least 2 classes, got {n}"
        )));
    }
    if n > net.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "{n} classes requested but the model has {}",
            net.num_classes()
        )));
    }
    (0..n)
        .into_par_iter()
        .map(|y| log_likelihood_stream(spec, net, x0, y, cfg, stream))
        .collect()
}

pub fn class_log_likelihoods<S: ScoreFunction + ?Sized>(
    spec: &SdeSpec,
    net: &S,
    x0: &[f64],
    n: usize,
    cfg: &LikelihoodConfig,
) -> Result<Vec<f64>> {
    class_log_likelihoods_stream(spec, net, x0, n, cfg, 0)
}

/// Posterior under a uniform class prior: the softmax of `log_likes`.
///
/// `−∞` entries get probability 0; all entries `−∞` (or any NaN / `+∞`) is an
/// error.
pub fn posterior(log_likes: &[f64]) -> Result<Vec<f64>> {
    posterior_with_prior(log_likes, None)
}

/// Posterior with optional log-prior weights `log p(y)` added to each entry.
pub fn posterior_with_prior(log_likes: &[f64], log_prior: Option<&[f64]>) -> Result<Vec<f64>> {
    if log_likes.is_empty() {
        return Err(Error::Empty("log-likelihood vector"));
    }
    let scores: Vec<f64> = match log_prior {
        None => log_likes.to_vec(),
        Some(p) => {
            if p.len() != log_likes.len() {
                return Err(Error::DimensionMismatch {
                    expected: log_likes.len(),
                    got: p.len(),
                });
            }
            log_likes.iter().zip(p).map(|(a, b)| a + b).collect()
        }
    };
    if scores.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::NonFinite(format!("log-likelihoods {log_likes:?}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NonFinite(
            "all log-likelihoods are -inf; posterior undefined".into(),
        ));
    }
    let exps: Vec<f64> = scores.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Combines per-class likelihoods into a decision.
pub fn decide(log_likes: Vec<f64>, ground_truth: Option<usize>) -> Result<ClassificationResult> {
    let post = posterior(&log_likes)?;
    let predicted = argmax(&post);
    Ok(ClassificationResult {
        log_likes,
        posterior: post,
        predicted,
        ground_truth,
    })
}

pub fn classify<S: ScoreFunction + ?Sized>(
    spec: &SdeSpec,
    net: &S,
    x0: &[f64],
    n: usize,
    cfg: &LikelihoodConfig,
) -> Result<ClassificationResult> {
    decide(class_log_likelihoods(spec, net, x0, n, cfg)?, None)
}

/// Classifies every row of `data`, in parallel across rows. Row `i` uses
/// probe stream `i`.
pub fn classify_dataset<S: ScoreFunction + ?Sized>(
    spec: &SdeSpec,
    net: &S,
    data: &LabeledDataset,
    n: usize,
    cfg: &LikelihoodConfig,
) -> Result<Vec<ClassificationResult>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let ll = class_log_likelihoods_stream(spec, net, data.row(i), n, cfg, i as u64)?;
            decide(ll, Some(data.labels()[i]))
        })
        .collect()
}

/// Per-sample CSV: `index,ground_truth,predicted,log_like_0..,posterior_0..`.
pub fn results_to_csv(results: &[ClassificationResult]) -> String {
    let n = results.first().map_or(0, |r| r.log_likes.len());
    let mut out = String::from("index,ground_truth,predicted");
    for j in 0..n {
        out.push_str(&format!(",log_like_{j}"));
    }
    for j in 0..n {
        out.push_str(&format!(",posterior_{j}"));
    }
    out.push('\n');
    for (i, r) in results.iter().enumerate() {
        let gt = r.ground_truth.map(|g| g.to_string()).unwrap_or_default();
        out.push_str(&format!("{i},{gt},{}", r.predicted));
        for v in &r.log_likes {
            out.push_str(&format!(",{v:?}"));
        }
        for v in &r.posterior {
            out.push_str(&format!(",{v:?}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score_model::LinearScore;
    use crate::sde::SdeFamily;

    #[test]
    fn posterior_examples() {
        let p = posterior(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let p = posterior(&[-7.0; 4]).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let p = posterior(&[0.0, -1000.0]).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn posterior_infinities() {
        let p = posterior(&[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
        assert!(posterior(&[f64::NEG_INFINITY; 3]).is_err());
        assert!(posterior(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn prior_hook() {
        let p = posterior_with_prior(&[0.0, 0.0], Some(&[1f64.ln(), 3f64.ln()])).unwrap();
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_smallest_index() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
        let r = decide(vec![-2.0, -2.0], Some(1)).unwrap();
        assert_eq!(r.predicted, 0);
        assert_eq!(r.ground_truth_posterior(), Some(0.5));
    }

    #[test]
    fn label_independent_model_gives_equal_likelihoods() {
        let spec = SdeSpec::new(SdeFamily::Vp);
        let s = LinearScore::new(vec![-1.0, 0.2, 0.1, -0.8], vec![0.0, 0.1], 3).unwrap();
        let ll = class_log_likelihoods(&spec, &s, &[0.3, -0.4], 3, &LikelihoodConfig::default())
            .unwrap();
        assert!((ll[0] - ll[1]).abs() < 1e-9 && (ll[1] - ll[2]).abs() < 1e-9);
        let again =
            class_log_likelihoods(&spec, &s, &[0.3, -0.4], 3, &LikelihoodConfig::default())
                .unwrap();
        assert_eq!(ll, again);
    }

    #[test]
    fn requires_two_classes() {
        let spec = SdeSpec::default();
        let s = LinearScore::zero(2, 2);
        assert!(classify(&spec, &s, &[0.0, 0.0], 1, &LikelihoodConfig::exact()).is_err());
        assert!(classify(&spec, &s, &[0.0, 0.0], 3, &LikelihoodConfig::exact()).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = vec![decide(vec![1f64.ln(), 3f64.ln()], Some(1)).unwrap()];
        let csv = results_to_csv(&r);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "index,ground_truth,predicted,log_like_0,log_like_1,posterior_0,posterior_1"
        );
        assert!(lines.next().unwrap().starts_with("0,1,1,0.0,"));
    }
}
