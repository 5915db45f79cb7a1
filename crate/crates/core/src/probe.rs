//! Frozen linear evaluation: multinomial logistic regression trained full-batch
//! with early stopping on validation loss.
//!
//! Features are standardised with train-split statistics; the fitted model
//! folds that transform back into its weights so it applies to raw features.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, SplitTag, TaskDataset};
use crate::error::{BenchError, Result};
use crate::knn::{argmax_first, stratified_bootstrap};
use crate::linalg::{self, Matrix};
use crate::metrics::{self, ScoreSummary};
use crate::rng;
use crate::split::{round_half_up, SplitAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerMode {
    #[serde(rename = "full-batch-lbfgs-like", alias = "lbfgs")]
    Lbfgs,
    #[serde(rename = "full-batch-gradient-descent", alias = "gd")]
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub l2_penalty: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub tolerance: f64,
    pub learning_rate: f64,
    pub mode: OptimizerMode,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            l2_penalty: 1e-4,
            max_epochs: 500,
            patience: 20,
            tolerance: 1e-6,
            learning_rate: 0.1,
            mode: OptimizerMode::Lbfgs,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            bad.push("l2_penalty must be ≥ 0");
        }
        if self.max_epochs == 0 {
            bad.push("max_epochs must be ≥ 1");
        }
        if self.patience == 0 {
            bad.push("patience must be ≥ 1");
        }
        if !(self.tolerance > 0.0) {
            bad.push("tolerance must be > 0");
        }
        if !(self.learning_rate > 0.0) {
            bad.push("learning_rate must be > 0");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(BenchError::InvalidInput(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    /// Regularised training objective after the epoch's step.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    /// C × D, applies to raw (unstandardised) features.
    pub weights: Matrix,
    pub biases: Vec<f64>,
    /// Classes the probe was trained on, canonical order.
    pub class_list: Vec<String>,
    /// Task class index of each probe output.
    pub class_index: Vec<usize>,
    pub training_trace: Vec<EpochTrace>,
}

/// Mean softmax cross-entropy plus `l2/2 · ‖W‖²` over parameters laid out as
/// `[W (C×D row-major), b (C)]`.
pub struct SoftmaxObjective<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    classes: usize,
    l2: f64,
}

impl<'a> SoftmaxObjective<'a> {
    pub fn new(x: &'a Matrix, y: &'a [usize], classes: usize, l2: f64) -> Self {
        assert_eq!(x.rows(), y.len());
        SoftmaxObjective { x, y, classes, l2 }
    }

    pub fn num_params(&self) -> usize {
        self.classes * (self.x.cols() + 1)
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        self.evaluate(params, None)
    }

    pub fn loss_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(params, Some(grad))
    }

    fn evaluate(&self, params: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let (c, d) = (self.classes, self.x.cols());
        let (w, b) = params.split_at(c * d);
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let n = self.x.rows();
        let mut logits = vec![0.0; c];
        let mut data_loss = 0.0;
        for i in 0..n {
            let xi = self.x.row(i);
            for k in 0..c {
                logits[k] = linalg::dot(&w[k * d..(k + 1) * d], xi) + b[k];
            }
            let lse = log_sum_exp(&logits);
            data_loss += lse - logits[self.y[i]];
            if let Some(g) = grad.as_deref_mut() {
                let (gw, gb) = g.split_at_mut(c * d);
                for k in 0..c {
                    let coef = (logits[k] - lse).exp() - if k == self.y[i] { 1.0 } else { 0.0 };
                    gb[k] += coef;
                    for (gj, xj) in gw[k * d..(k + 1) * d].iter_mut().zip(xi) {
                        *gj += coef * xj;
                    }
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * 0.5 * self.l2;
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v *= inv_n);
            for (gj, wj) in g[..c * d].iter_mut().zip(w) {
                *gj += self.l2 * wj;
            }
        }
        data_loss * inv_n + reg
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Accepted { previous: f64, current: f64 },
    Converged,
}

/// Full-batch descent with Armijo backtracking; L-BFGS or plain gradient
/// directions.
pub struct Optimizer {
    mode: OptimizerMode,
    learning_rate: f64,
    history: VecDeque<(Vec<f64>, Vec<f64>)>,
    memory: usize,
}

const ARMIJO_C1: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-10;

impl Optimizer {
    pub fn new(mode: OptimizerMode, learning_rate: f64) -> Self {
        Optimizer {
            mode,
            learning_rate,
            history: VecDeque::new(),
            memory: 10,
        }
    }

    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = grad.to_vec();
        if self.mode == OptimizerMode::GradientDescent || self.history.is_empty() {
            q.iter_mut().for_each(|v| *v = -*v);
            return q;
        }
        let mut alphas = Vec::with_capacity(self.history.len());
        for (s, y) in self.history.iter().rev() {
            let rho = 1.0 / linalg::dot(y, s);
            let a = rho * linalg::dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        let (s, y) = self.history.back().expect("non-empty");
        let gamma = linalg::dot(s, y) / linalg::dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y), (a, rho)) in self.history.iter().zip(alphas.into_iter().rev()) {
            let beta = rho * linalg::dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - beta) * si);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    /// One accepted step, updating `params`, `loss` and `grad` in place.
    /// The objective never increases across an accepted step.
    pub fn step(
        &mut self,
        objective: &SoftmaxObjective<'_>,
        params: &mut [f64],
        loss: &mut f64,
        grad: &mut [f64],
    ) -> StepOutcome {
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < GRAD_TOL {
            return StepOutcome::Converged;
        }
        let mut dir = self.direction(grad);
        let mut slope = linalg::dot(grad, &dir);
        if !(slope < 0.0) {
            self.history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = linalg::dot(grad, &dir);
        }
        let mut alpha = match (self.mode, self.history.is_empty()) {
            (OptimizerMode::GradientDescent, _) => self.learning_rate,
            (OptimizerMode::Lbfgs, true) => 1.0 / linalg::norm(grad).max(1.0),
            (OptimizerMode::Lbfgs, false) => 1.0,
        };
        let mut trial = vec![0.0; params.len()];
        let mut trial_grad = vec![0.0; params.len()];
        for _ in 0..60 {
            for ((t, p), d) in trial.iter_mut().zip(params.iter()).zip(&dir) {
                *t = p + alpha * d;
            }
            let f = objective.loss_and_grad(&trial, &mut trial_grad);
            if f.is_finite() && f <= *loss + ARMIJO_C1 * alpha * slope {
                let s: Vec<f64> = trial.iter().zip(params.iter()).map(|(t, p)| t - p).collect();
                let y: Vec<f64> = trial_grad.iter().zip(grad.iter()).map(|(a, b)| a - b).collect();
                if self.mode == OptimizerMode::Lbfgs && linalg::dot(&s, &y) > 1e-12 {
                    if self.history.len() == self.memory {
                        self.history.pop_front();
                    }
                    self.history.push_back((s, y));
                }
                let previous = *loss;
                params.copy_from_slice(&trial);
                grad.copy_from_slice(&trial_grad);
                *loss = f;
                return StepOutcome::Accepted { previous, current: f };
            }
            alpha *= 0.5;
        }
        StepOutcome::Converged
    }
}

fn standardize(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows() as f64, x.cols());
    let mut mean = vec![0.0; d];
    for i in 0..x.rows() {
        mean.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = vec![0.0; d];
    for i in 0..x.rows() {
        for ((s, v), m) in std.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / n).sqrt().max(1e-8));
    (mean, std)
}

fn apply_standardization(x: &Matrix, mean: &[f64], std: &[f64]) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        for ((v, m), s) in out.row_mut(i).iter_mut().zip(mean).zip(std) {
            *v = (*v - m) / s;
        }
    }
    out
}

/// Deterministic stratified 10% holdout of `y` (model class indices).
/// Returns `(train positions, holdout positions)`.
fn carve_holdout(y: &[usize], classes: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in y.iter().enumerate() {
        by_class[c].push(i);
    }
    let (mut train, mut hold) = (Vec::new(), Vec::new());
    for (c, mut members) in by_class.into_iter().enumerate() {
        members.shuffle(&mut rng::seeded_stream(seed, c as u64));
        let k = round_half_up(0.1 * members.len() as f64).min(members.len().saturating_sub(1));
        hold.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    hold.sort_unstable();
    (train, hold)
}

/// Trains a probe on `train_x`/`train_y` (task class indices into `class_list`).
///
/// An empty validation set is replaced by a stratified 10% holdout of train,
/// carved per `seed`. Validation rows whose class is absent from train are
/// ignored for early stopping.
pub fn train_probe(
    train_x: &Matrix,
    train_y: &[usize],
    val_x: &Matrix,
    val_y: &[usize],
    class_list: &[String],
    config: &ProbeConfig,
    seed: u64,
) -> Result<ProbeModel> {
    config.validate()?;
    if train_x.rows() != train_y.len() || val_x.rows() != val_y.len() {
        return Err(BenchError::InvalidInput("feature and label counts differ".into()));
    }
    if val_x.rows() > 0 && val_x.cols() != train_x.cols() {
        return Err(BenchError::DimensionMismatch {
            expected: train_x.cols(),
            got: val_x.cols(),
        });
    }
    let mut present = vec![false; class_list.len()];
    for &y in train_y {
        *present.get_mut(y).ok_or_else(|| {
            BenchError::InvalidInput(format!("label {y} outside the class list"))
        })? = true;
    }
    let class_index: Vec<usize> = (0..class_list.len()).filter(|&c| present[c]).collect();
    if class_index.len() < 2 {
        return Err(BenchError::InvalidInput(
            "linear probe needs at least 2 classes in train".into(),
        ));
    }
    let mut to_model = vec![usize::MAX; class_list.len()];
    for (m, &c) in class_index.iter().enumerate() {
        to_model[c] = m;
    }
    let classes = class_index.len();
    let model_y: Vec<usize> = train_y.iter().map(|&y| to_model[y]).collect();

    let (mut fit_rows, val_rows_x, val_rows_y) = if val_x.rows() == 0 {
        let (fit, hold) = carve_holdout(&model_y, classes, seed);
        let hx = train_x.select_rows(&hold);
        let hy: Vec<usize> = hold.iter().map(|&i| model_y[i]).collect();
        (fit, hx, hy)
    } else {
        let keep: Vec<usize> = (0..val_y.len())
            .filter(|&i| to_model[val_y[i]] != usize::MAX)
            .collect();
        let vy = keep.iter().map(|&i| to_model[val_y[i]]).collect();
        ((0..train_y.len()).collect(), val_x.select_rows(&keep), vy)
    };
    fit_rows.shuffle(&mut rng::seeded(seed));

    let raw_fit = train_x.select_rows(&fit_rows);
    let fit_y: Vec<usize> = fit_rows.iter().map(|&i| model_y[i]).collect();
    let (mean, std) = standardize(&raw_fit);
    let fit_x = apply_standardization(&raw_fit, &mean, &std);
    let monitor_x = apply_standardization(&val_rows_x, &mean, &std);

    let objective = SoftmaxObjective::new(&fit_x, &fit_y, classes, config.l2_penalty);
    let monitor = if val_rows_y.is_empty() {
        SoftmaxObjective::new(&fit_x, &fit_y, classes, 0.0)
    } else {
        SoftmaxObjective::new(&monitor_x, &val_rows_y, classes, 0.0)
    };

    let d = train_x.cols();
    let mut params = vec![0.0; objective.num_params()];
    let mut grad = vec![0.0; params.len()];
    let mut loss = objective.loss_and_grad(&params, &mut grad);
    let mut best_val = monitor.loss(&params);
    let mut best = params.clone();
    let mut since_best = 0;
    let mut optimizer = Optimizer::new(config.mode, config.learning_rate);
    let mut trace = Vec::new();

    for epoch in 1..=config.max_epochs {
        let outcome = optimizer.step(&objective, &mut params, &mut loss, &mut grad);
        let val_loss = monitor.loss(&params);
        if !loss.is_finite() || !val_loss.is_finite() {
            return Err(BenchError::Numerical(format!(
                "probe training diverged at epoch {epoch}"
            )));
        }
        trace.push(EpochTrace {
            epoch,
            train_loss: loss,
            val_loss,
        });
        if val_loss < best_val - config.tolerance {
            best_val = val_loss;
            best.copy_from_slice(&params);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if outcome == StepOutcome::Converged || since_best >= config.patience {
            if outcome == StepOutcome::Converged && val_loss <= best_val {
                best.copy_from_slice(&params);
            }
            break;
        }
    }

    // fold standardisation into the weights
    let mut weights = Matrix::zeros(classes, d);
    let mut biases = best[classes * d..].to_vec();
    for k in 0..classes {
        for j in 0..d {
            let w = best[k * d + j] / std[j];
            weights.row_mut(k)[j] = w;
            biases[k] -= w * mean[j];
        }
    }
    if weights.as_slice().iter().chain(&biases).any(|v| !v.is_finite()) {
        return Err(BenchError::Numerical("probe weights are not finite".into()));
    }
    Ok(ProbeModel {
        weights,
        biases,
        class_list: class_index.iter().map(|&c| class_list[c].clone()).collect(),
        class_index,
        training_trace: trace,
    })
}

/// Predicted task class indices and the N × C probability matrix.
pub fn probe_predict(model: &ProbeModel, features: &Matrix) -> Result<(Vec<usize>, Matrix)> {
    if features.cols() != model.weights.cols() {
        return Err(BenchError::DimensionMismatch {
            expected: model.weights.cols(),
            got: features.cols(),
        });
    }
    let c = model.biases.len();
    let mut probs = Matrix::zeros(features.rows(), c);
    let mut preds = Vec::with_capacity(features.rows());
    for i in 0..features.rows() {
        let row = probs.row_mut(i);
        for (k, p) in row.iter_mut().enumerate() {
            *p = linalg::dot(model.weights.row(k), features.row(i)) + model.biases[k];
        }
        let lse = log_sum_exp(row);
        row.iter_mut().for_each(|p| *p = (*p - lse).exp());
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        preds.push(model.class_index[argmax_first(row)]);
    }
    Ok((preds, probs))
}

impl ProbeModel {
    /// Container form: C rows of `D + 1` values (bias last), ids are class labels.
    pub fn to_embedding_set(&self, task: &str, seed: u64) -> Result<EmbeddingSet> {
        let d = self.weights.cols();
        let mut values = Vec::with_capacity(self.biases.len() * (d + 1));
        for (k, b) in self.biases.iter().enumerate() {
            values.extend(self.weights.row(k).iter().map(|&w| w as f32));
            values.push(*b as f32);
        }
        EmbeddingSet::new(self.class_list.clone(), d + 1, values, format!("probe:{task}:{seed}"))
    }

    pub fn from_embedding_set(set: &EmbeddingSet, task_classes: &[String]) -> Result<ProbeModel> {
        if set.dim() < 2 || set.len() < 2 {
            return Err(BenchError::Validation("probe container needs ≥ 2 rows and ≥ 2 columns".into()));
        }
        let d = set.dim() - 1;
        let mut weights = Matrix::zeros(set.len(), d);
        let mut biases = Vec::with_capacity(set.len());
        let mut class_index = Vec::with_capacity(set.len());
        for (k, id) in set.sample_ids().iter().enumerate() {
            let row = set.row(k);
            weights
                .row_mut(k)
                .iter_mut()
                .zip(&row[..d])
                .for_each(|(w, v)| *w = f64::from(*v));
            biases.push(f64::from(row[d]));
            class_index.push(task_classes.iter().position(|c| c == id).ok_or_else(|| {
                BenchError::Validation(format!("probe class {id:?} not in the task class list"))
            })?);
        }
        Ok(ProbeModel {
            weights,
            biases,
            class_list: set.sample_ids().to_vec(),
            class_index,
            training_trace: Vec::new(),
        })
    }
}

/// Trains and scores one probe per seed on a stratified bootstrap of the
/// train split, early-stopping on the val split.
pub fn linear_frozen_eval(
    ds: &TaskDataset,
    split: &SplitAssignment,
    config: &ProbeConfig,
    seeds: &[u64],
) -> Result<ScoreSummary> {
    linear_frozen_eval_models(ds, split, config, seeds).map(|(s, _)| s)
}

/// As [`linear_frozen_eval`], also returning the fitted probes in seed order.
pub fn linear_frozen_eval_models(
    ds: &TaskDataset,
    split: &SplitAssignment,
    config: &ProbeConfig,
    seeds: &[u64],
) -> Result<(ScoreSummary, Vec<ProbeModel>)> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(BenchError::InvalidInput("at least one seed is required".into()));
    }
    let train_rows = split.rows(ds, SplitTag::Train);
    let val_rows = split.rows(ds, SplitTag::Val);
    let test_rows = split.rows(ds, SplitTag::Test);
    if test_rows.is_empty() {
        return Err(BenchError::InvalidInput(format!("task {}: test split is empty", ds.name())));
    }
    let train_x = ds.features(&train_rows);
    let train_y = ds.targets_of(&train_rows);
    let val_x = ds.features(&val_rows);
    let val_y = ds.targets_of(&val_rows);
    let test_x = ds.features(&test_rows);
    let test_y = ds.targets_of(&test_rows);

    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let sample = stratified_bootstrap(&train_y, ds.num_classes(), seed);
            let sy: Vec<usize> = sample.iter().map(|&i| train_y[i]).collect();
            let model = train_probe(
                &train_x.select_rows(&sample),
                &sy,
                &val_x,
                &val_y,
                ds.class_list(),
                config,
                seed,
            )?;
            let (pred, _) = probe_predict(&model, &test_x)?;
            let f1 = metrics::macro_f1(&pred, &test_y, ds.num_classes())?;
            Ok((f1, model))
        })
        .collect::<Result<Vec<_>>>()?;
    let (scores, models): (Vec<f64>, Vec<ProbeModel>) = runs.into_iter().unzip();
    Ok((metrics::aggregate(&scores)?, models))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn classes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn random_instance(seed: u64, n: usize, d: usize, c: usize) -> (Matrix, Vec<usize>, Vec<f64>) {
        let mut r = rng::seeded(seed);
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| r.random_range(-2.0..2.0)).collect());
        let y = (0..n).map(|i| if i < c { i } else { r.random_range(0..c) }).collect();
        let p = (0..c * (d + 1)).map(|_| r.random_range(-1.0..1.0)).collect();
        (x, y, p)
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = ProbeModel {
            weights: Matrix::zeros(3, 2),
            biases: vec![0.0; 3],
            class_list: classes(3),
            class_index: vec![0, 1, 2],
            training_trace: vec![],
        };
        let (_, p) = probe_predict(&model, &Matrix::from_rows(&[vec![3.0, -1.0], vec![0.5, 9.0]])).unwrap();
        assert!(p.as_slice().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn separable_1d_fits_perfectly() {
        let x = Matrix::from_rows(&[vec![-1.0], vec![1.0]]);
        let cl = vec!["a".to_string(), "b".to_string()];
        let m = train_probe(&x, &[0, 1], &Matrix::zeros(0, 1), &[], &cl, &ProbeConfig::default(), 0)
            .unwrap();
        let (pred, _) = probe_predict(&m, &x).unwrap();
        assert_eq!(pred, vec![0, 1]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y, params) = random_instance(3, 5, 4, 3);
        let obj = SoftmaxObjective::new(&x, &y, 3, 0.1);
        let mut g = vec![0.0; params.len()];
        obj.loss_and_grad(&params, &mut g);
        let h = 1e-5;
        for i in 0..params.len() {
            let (mut up, mut dn) = (params.clone(), params.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (obj.loss(&up) - obj.loss(&dn)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
            assert!(rel < 1e-5, "param {i}: analytic {} vs fd {fd}", g[i]);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (x, _, params) = random_instance(5, 30, 6, 4);
        let model = ProbeModel {
            weights: Matrix::from_vec(4, 6, params[..24].to_vec()),
            biases: params[24..].to_vec(),
            class_list: classes(4),
            class_index: vec![0, 1, 2, 3],
            training_trace: vec![],
        };
        let (_, p) = probe_predict(&model, &x).unwrap();
        for i in 0..p.rows() {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_bias_shift_keeps_argmax() {
        let (x, _, params) = random_instance(8, 20, 3, 3);
        let mut model = ProbeModel {
            weights: Matrix::from_vec(3, 3, params[..9].to_vec()),
            biases: params[9..].to_vec(),
            class_list: classes(3),
            class_index: vec![0, 1, 2],
            training_trace: vec![],
        };
        let (a, _) = probe_predict(&model, &x).unwrap();
        model.biases.iter_mut().for_each(|b| *b += 7.25);
        assert_eq!(a, probe_predict(&model, &x).unwrap().0);
    }

    #[test]
    fn dimension_mismatch() {
        let model = ProbeModel {
            weights: Matrix::zeros(2, 2),
            biases: vec![0.0; 2],
            class_list: classes(2),
            class_index: vec![0, 1],
            training_trace: vec![],
        };
        assert!(probe_predict(&model, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn training_loss_never_increases() {
        for mode in [OptimizerMode::Lbfgs, OptimizerMode::GradientDescent] {
            let (x, y, _) = random_instance(21, 40, 5, 4);
            let cfg = ProbeConfig { mode, ..ProbeConfig::default() };
            let m = train_probe(&x, &y, &Matrix::zeros(0, 5), &[], &classes(4), &cfg, 2).unwrap();
            assert!(!m.training_trace.is_empty());
            for w in m.training_trace.windows(2) {
                assert!(w[1].train_loss <= w[0].train_loss, "{mode:?}");
            }
        }
    }

    #[test]
    fn optimizer_modes_agree_on_convex_objective() {
        let (x, y, _) = random_instance(4, 30, 4, 3);
        let obj = SoftmaxObjective::new(&x, &y, 3, 0.05);
        let run = |mode| {
            let mut opt = Optimizer::new(mode, 0.5);
            let mut p = vec![0.0; obj.num_params()];
            let mut g = vec![0.0; p.len()];
            let mut f = obj.loss_and_grad(&p, &mut g);
            for _ in 0..5_000 {
                if opt.step(&obj, &mut p, &mut f, &mut g) == StepOutcome::Converged {
                    break;
                }
            }
            f
        };
        let (a, b) = (run(OptimizerMode::Lbfgs), run(OptimizerMode::GradientDescent));
        assert!((a - b).abs() < 1e-3, "lbfgs {a} vs gd {b}");
    }

    #[test]
    fn missing_train_class_is_never_predicted() {
        let x = Matrix::from_rows(&[vec![-1.0], vec![-1.2], vec![1.0], vec![1.3]]);
        let m = train_probe(&x, &[0, 0, 2, 2], &Matrix::zeros(0, 1), &[], &classes(3), &ProbeConfig::default(), 0)
            .unwrap();
        assert_eq!(m.class_index, vec![0, 2]);
        let (pred, p) = probe_predict(&m, &Matrix::from_rows(&[vec![0.1], vec![-5.0]])).unwrap();
        assert!(pred.iter().all(|&c| c != 1));
        assert_eq!(p.cols(), 2);
    }

    #[test]
    fn single_train_class_rejected() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        assert!(train_probe(&x, &[1, 1], &Matrix::zeros(0, 1), &[], &classes(2), &ProbeConfig::default(), 0).is_err());
    }

    #[test]
    fn container_roundtrip() {
        let (x, y, _) = random_instance(9, 24, 3, 3);
        let m = train_probe(&x, &y, &Matrix::zeros(0, 3), &[], &classes(3), &ProbeConfig::default(), 1).unwrap();
        let set = m.to_embedding_set("toy", 1).unwrap();
        assert_eq!(set.source_tag(), "probe:toy:1");
        assert_eq!((set.len(), set.dim()), (3, 4));
        let back = ProbeModel::from_embedding_set(&set, &classes(3)).unwrap();
        assert_eq!(back.class_index, m.class_index);
        for (a, b) in back.weights.as_slice().iter().zip(m.weights.as_slice()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }
}
