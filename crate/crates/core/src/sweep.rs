//! Side-by-side comparison of the three SDE families on one dataset.

use serde::Serialize;

use crate::classifier::classify_dataset;
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::likelihood::LikelihoodConfig;
use crate::metrics::{evaluate, EvalReport};
use crate::score_model::MlpConfig;
use crate::sde::{SdeFamily, SdeSpec};
use crate::training::{train, TrainConfig};

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub family: SdeFamily,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub metrics: EvalReport,
}

/// Trains one network per family on `train_set` and evaluates it on
/// `test_set`. Class 1 is the positive class; the AUC uses its posterior.
///
/// Every family is trained from the same `train_cfg` and differs from
/// `base` only in `family`.
pub fn family_sweep(
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    families: &[SdeFamily],
    base: &SdeSpec,
    mlp: &MlpConfig,
    train_cfg: &TrainConfig,
    lik_cfg: &LikelihoodConfig,
) -> Result<Vec<SweepRow>> {
    let classes = train_set.num_classes();
    families
        .iter()
        .map(|&family| {
            let spec = SdeSpec { family, ..*base };
            let outcome = train(train_set, &spec, mlp, train_cfg)?;
            let results = classify_dataset(&spec, &outcome.net, test_set, classes, lik_cfg)?;
            let preds: Vec<usize> = results.iter().map(|r| r.predicted).collect();
            let scores: Vec<f64> = results.iter().map(|r| r.posterior[1]).collect();
            let metrics = evaluate(&preds, test_set.labels(), &scores, 1)?;
            Ok(SweepRow {
                family,
                epochs_run: outcome.report.epochs.len(),
                best_val_loss: outcome.report.best_val_loss,
                metrics,
            })
        })
        .collect()
}

/// Plain-text table with one line per family.
pub fn format_table(rows: &[SweepRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
    let mut out = format!(
        "{:<7} {:>8} {:>8} {:>8} {:>8} {:>7} {:>9}\n",
        "sde", "acc", "auc", "sens", "spec", "epochs", "val_loss"
    );
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{:<7} {:>8} {:>8} {:>8} {:>8} {:>7} {:>9.4}\n",
            r.family.name(),
            cell(m.accuracy),
            cell(m.auc),
            cell(m.sensitivity),
            cell(m.specificity),
            r.epochs_run,
            r.best_val_loss
        ));
    }
    out
}
