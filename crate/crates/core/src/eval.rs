//! Classification metrics and the evaluation report artifact.
//!
//! Everything operates on (true index, predicted index) pairs so the metric
//! math stays independent of models and datasets. Reports serialize to JSON
//! with no wall-clock fields, keeping artifacts byte-stable across reruns.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("class index {index} out of range for {classes} classes")]
    IndexOutOfRange { index: usize, classes: usize },
    #[error("no class labels")]
    NoLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    /// True instances of this class in the test set.
    pub support: usize,
}

/// Provenance carried inside a report so an artifact names the run that
/// produced it. No timestamps: identical runs produce identical reports.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunMeta {
    /// Pipeline config identity, 16 hex digits.
    pub config_hash: String,
    pub seed: u64,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    /// `confusion[t][p]`: samples of true class `t` predicted as `p`. Row
    /// sums are the per-class test counts.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    /// F1 over pooled true/false positives and negatives. For single-label
    /// prediction this coincides with accuracy; it is still computed from
    /// the pools so the report stays honest if that ever changes.
    pub micro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub meta: RunMeta,
}

/// Builds the full report from (true, predicted) index pairs.
pub fn evaluate_predictions(
    labels: &[String],
    pairs: &[(usize, usize)],
    meta: RunMeta,
) -> Result<EvalReport, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::NoLabels);
    }
    if pairs.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let k = labels.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for &(t, p) in pairs {
        for index in [t, p] {
            if index >= k {
                return Err(EvalError::IndexOutOfRange { index, classes: k });
            }
        }
        confusion[t][p] += 1;
    }
    let total = pairs.len();
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let accuracy = correct as f64 / total as f64;

    let mut pooled_tp = 0usize;
    let mut pooled_fp = 0usize;
    let mut pooled_fn = 0usize;
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let tp = confusion[c][c];
        let row: usize = confusion[c].iter().sum();
        let col: usize = (0..k).map(|t| confusion[t][c]).sum();
        let fp = col - tp;
        let fnn = row - tp;
        pooled_tp += tp;
        pooled_fp += fp;
        pooled_fn += fnn;
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        per_class.push(ClassMetrics {
            label: labels[c].clone(),
            precision: ratio(tp, col),
            recall: ratio(tp, row),
            support: row,
        });
    }
    let micro_denom = 2 * pooled_tp + pooled_fp + pooled_fn;
    let micro_f1 =
        if micro_denom == 0 { 0.0 } else { 2.0 * pooled_tp as f64 / micro_denom as f64 };

    Ok(EvalReport {
        labels: labels.to_vec(),
        confusion,
        accuracy,
        micro_f1,
        per_class,
        meta: RunMeta { test_size: total, ..meta },
    })
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for fewer than
/// two values). Used to summarize multi-seed runs.
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}
