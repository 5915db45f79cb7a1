//! Frozen weighted k-nearest-neighbour probe.
//!
//! Class score is `Σ exp(sim_i / T)` over the top-k neighbours of that class.
//! Equal similarities are ordered by training index, prediction ties resolve
//! to the lowest canonical class index.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SplitTag, TaskDataset};
use crate::error::{BenchError, Result};
use crate::linalg::{self, Matrix};
use crate::metrics::{self, ScoreSummary};
use crate::rng;
use crate::split::SplitAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    Cosine,
    NegativeEuclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    pub temperature: f64,
    pub similarity: Similarity,
    pub l2_normalize_inputs: bool,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 20,
            temperature: 0.07,
            similarity: Similarity::Cosine,
            l2_normalize_inputs: true,
        }
    }
}

impl KnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(BenchError::InvalidInput("kNN k must be ≥ 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(BenchError::InvalidInput("kNN temperature must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnPrediction {
    pub predictions: Vec<usize>,
    /// Q × C class scores, each row normalised to sum 1.
    pub scores: Matrix,
    /// Neighbour count actually used, `min(k, n_train)`.
    pub k_used: usize,
    pub k_clamped: bool,
}

fn prepare(m: &Matrix, config: &KnnConfig) -> Matrix {
    let mut m = m.clone();
    if config.l2_normalize_inputs {
        linalg::l2_normalize_rows(&mut m);
    }
    m
}

fn similarity(a: &[f64], b: &[f64], kind: Similarity) -> f64 {
    match kind {
        Similarity::Cosine => {
            let denom = linalg::norm(a) * linalg::norm(b);
            if denom == 0.0 {
                0.0
            } else {
                linalg::dot(a, b) / denom
            }
        }
        Similarity::NegativeEuclidean => -a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
    }
}

fn rank(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicts every query row against the training set.
pub fn knn_predict(
    train: &Matrix,
    train_labels: &[usize],
    num_classes: usize,
    queries: &Matrix,
    config: &KnnConfig,
) -> Result<KnnPrediction> {
    config.validate()?;
    if train.rows() == 0 {
        return Err(BenchError::InvalidInput("kNN training set is empty".into()));
    }
    if queries.rows() == 0 {
        return Err(BenchError::InvalidInput("kNN query set is empty".into()));
    }
    if train.rows() != train_labels.len() {
        return Err(BenchError::InvalidInput(format!(
            "{} training rows for {} labels",
            train.rows(),
            train_labels.len()
        )));
    }
    if queries.cols() != train.cols() {
        return Err(BenchError::DimensionMismatch {
            expected: train.cols(),
            got: queries.cols(),
        });
    }
    if let Some(&bad) = train_labels.iter().find(|&&y| y >= num_classes) {
        return Err(BenchError::InvalidInput(format!("label {bad} outside {num_classes} classes")));
    }
    let k = config.k.min(train.rows());
    let train = prepare(train, config);
    let queries = prepare(queries, config);

    let rows: Vec<(usize, Vec<f64>)> = (0..queries.rows())
        .into_par_iter()
        .map(|q| {
            let query = queries.row(q);
            let mut sims: Vec<(f64, usize)> = (0..train.rows())
                .map(|i| (similarity(query, train.row(i), config.similarity), i))
                .collect();
            if k < sims.len() {
                sims.select_nth_unstable_by(k - 1, rank);
                sims.truncate(k);
            }
            sims.sort_by(rank);
            let top = sims[0].0;
            let mut scores = vec![0.0; num_classes];
            for &(s, i) in &sims {
                scores[train_labels[i]] += ((s - top) / config.temperature).exp();
            }
            let total: f64 = scores.iter().sum();
            scores.iter_mut().for_each(|s| *s /= total);
            (argmax_first(&scores), scores)
        })
        .collect();

    let mut scores = Matrix::zeros(queries.rows(), num_classes);
    let mut predictions = Vec::with_capacity(rows.len());
    for (q, (pred, s)) in rows.into_iter().enumerate() {
        predictions.push(pred);
        scores.row_mut(q).copy_from_slice(&s);
    }
    Ok(KnnPrediction {
        predictions,
        scores,
        k_used: k,
        k_clamped: k < config.k,
    })
}

/// Stratified bootstrap: each class is resampled to its own size, with
/// replacement, from an independent per-class stream.
pub fn stratified_bootstrap(targets: &[usize], num_classes: usize, seed: u64) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in targets.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut out = Vec::with_capacity(targets.len());
    for (c, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut rng = rng::seeded_stream(seed, c as u64);
        for _ in 0..members.len() {
            out.push(members[rng.random_range(0..members.len())]);
        }
    }
    out
}

/// Frozen kNN evaluation: per seed, a stratified bootstrap of the train split
/// is used as the neighbour pool and macro-F1 is measured on the test split.
pub fn knn_frozen_eval(
    ds: &TaskDataset,
    split: &SplitAssignment,
    config: &KnnConfig,
    seeds: &[u64],
) -> Result<ScoreSummary> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(BenchError::InvalidInput("at least one seed is required".into()));
    }
    let train_rows = split.rows(ds, SplitTag::Train);
    let test_rows = split.rows(ds, SplitTag::Test);
    if test_rows.is_empty() {
        return Err(BenchError::InvalidInput(format!("task {}: test split is empty", ds.name())));
    }
    if train_rows.is_empty() {
        return Err(BenchError::InvalidInput(format!("task {}: train split is empty", ds.name())));
    }
    let train_x = ds.features(&train_rows);
    let train_y = ds.targets_of(&train_rows);
    let test_x = ds.features(&test_rows);
    let test_y = ds.targets_of(&test_rows);

    let scores = seeds
        .par_iter()
        .map(|&seed| {
            let sample = stratified_bootstrap(&train_y, ds.num_classes(), seed);
            let pred = knn_predict(
                &train_x.select_rows(&sample),
                &sample.iter().map(|&i| train_y[i]).collect::<Vec<_>>(),
                ds.num_classes(),
                &test_x,
                config,
            )?;
            metrics::macro_f1(&pred.predictions, &test_y, ds.num_classes())
        })
        .collect::<Result<Vec<f64>>>()?;
    metrics::aggregate(&scores)
}
