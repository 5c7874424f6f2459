//! Binary classification metrics.
//!
//! Metrics whose denominator is zero are reported as `None` rather than 0.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BinaryConfusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl BinaryConfusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    /// True-positive rate.
    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// True-negative rate.
    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Confusion counts for a binary task with the given positive label.
pub fn confusion(preds: &[usize], truths: &[usize], positive: usize) -> Result<BinaryConfusion> {
    if preds.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            got: preds.len(),
        });
    }
    if positive > 1 {
        return Err(Error::InvalidConfig(format!(
            "positive label {positive} is not binary"
        )));
    }
    let mut c = BinaryConfusion::default();
    for (&p, &t) in preds.iter().zip(truths) {
        if p > 1 || t > 1 {
            return Err(Error::InvalidConfig(format!(
                "non-binary label in confusion input (prediction {p}, truth {t})"
            )));
        }
        match (p == positive, t == positive) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Area under the ROC curve in Mann–Whitney form: the probability that a
/// random positive scores above a random negative, ties counting ½.
///
/// Returns `None` unless both classes are present.
///
/// ```
/// let auc = sbgc::metrics::roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]);
/// assert_eq!(auc, Some(0.75));
/// ```
pub fn roc_auc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positives.len(), "scores and labels differ in length");
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| positives[k]).count();
        rank_sum += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub auc: Option<f64>,
    pub confusion: BinaryConfusion,
    pub undefined_metrics: Vec<String>,
}

/// All metrics for a binary task. `scores` are positive-class posteriors.
pub fn evaluate(
    preds: &[usize],
    truths: &[usize],
    scores: &[f64],
    positive: usize,
) -> Result<EvalReport> {
    let c = confusion(preds, truths, positive)?;
    if scores.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            got: scores.len(),
        });
    }
    let pos: Vec<bool> = truths.iter().map(|&t| t == positive).collect();
    let report = EvalReport {
        accuracy: c.accuracy(),
        sensitivity: c.sensitivity(),
        specificity: c.specificity(),
        auc: roc_auc(scores, &pos),
        confusion: c,
        undefined_metrics: Vec::new(),
    };
    let undefined = [
        ("accuracy", report.accuracy),
        ("sensitivity", report.sensitivity),
        ("specificity", report.specificity),
        ("auc", report.auc),
    ]
    .iter()
    .filter(|(_, v)| v.is_none())
    .map(|(k, _)| k.to_string())
    .collect();
    Ok(EvalReport {
        undefined_metrics: undefined,
        ..report
    })
}
