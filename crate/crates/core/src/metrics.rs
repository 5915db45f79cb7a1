//! Macro-averaged F1 and multi-seed aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Per-seed scores with their mean and sample standard deviation (ddof = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub metric_name: String,
}

/// Unweighted mean of per-class F1 over `num_classes` classes.
///
/// Zero denominators give zero precision, recall or F1, so a class that is
/// neither present nor predicted contributes 0 to the mean.
pub fn macro_f1(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(BenchError::InvalidInput(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(BenchError::InvalidInput("macro F1 of an empty sample".into()));
    }
    if num_classes == 0 {
        return Err(BenchError::InvalidInput("empty class list".into()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= num_classes {
            return Err(BenchError::InvalidInput(format!("prediction {p} outside the class list")));
        }
        if y >= num_classes {
            return Err(BenchError::InvalidInput(format!("label {y} outside the class list")));
        }
        if p == y {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let total: f64 = (0..num_classes)
        .map(|c| {
            let precision = ratio(tp[c], tp[c] + fp[c]);
            let recall = ratio(tp[c], tp[c] + fn_[c]);
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .sum();
    Ok(total / num_classes as f64)
}

/// [`macro_f1`] over string labels.
pub fn macro_f1_labels<S: AsRef<str>>(
    predictions: &[S],
    labels: &[S],
    class_list: &[String],
) -> Result<f64> {
    let index = |s: &S| {
        class_list
            .iter()
            .position(|c| c == s.as_ref())
            .ok_or_else(|| BenchError::InvalidInput(format!("{:?} not in class list", s.as_ref())))
    };
    let p = predictions.iter().map(index).collect::<Result<Vec<_>>>()?;
    let y = labels.iter().map(index).collect::<Result<Vec<_>>>()?;
    macro_f1(&p, &y, class_list.len())
}

/// Sample standard deviation, 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn aggregate(per_seed: &[f64]) -> Result<ScoreSummary> {
    aggregate_named(per_seed, "macro_f1")
}

pub fn aggregate_named(per_seed: &[f64], metric: &str) -> Result<ScoreSummary> {
    if per_seed.is_empty() {
        return Err(BenchError::InvalidInput("cannot aggregate zero scores".into()));
    }
    let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    Ok(ScoreSummary {
        per_seed: per_seed.to_vec(),
        mean,
        std: sample_std(per_seed),
        metric_name: metric.to_owned(),
    })
}
