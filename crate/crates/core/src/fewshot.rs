//! Label-efficiency curves: repeated stratified subsampling of the train
//! split, one classifier per subsample, macro-F1 on the fixed test split.

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SplitTag, TaskDataset};
use crate::error::{BenchError, Result};
use crate::knn::{knn_predict, KnnConfig};
use crate::linalg::Matrix;
use crate::metrics::{self, sample_std};
use crate::probe::{probe_predict, train_probe, ProbeConfig};
use crate::rng;
use crate::split::SplitAssignment;

pub const DEFAULT_GRID: [usize; 7] = [1, 2, 5, 10, 20, 50, 100];
pub const DEFAULT_REPEATS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Knn,
    Linear,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Knn(KnnConfig),
    Linear(ProbeConfig),
}

impl Classifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Classifier::Knn(_) => ClassifierKind::Knn,
            Classifier::Linear(_) => ClassifierKind::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_per_class: usize,
    /// Total subset size, Σ_c min(n_per_class, |class c|).
    pub effective_n: usize,
    pub mean: f64,
    pub standard_error: f64,
    pub repeats: usize,
    pub scores: Vec<f64>,
    /// kNN neighbour count after clamping to the subset size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_used: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurve {
    pub task: String,
    pub model: String,
    pub classifier_kind: ClassifierKind,
    /// Identifies the test split the scores were measured on.
    pub test_fingerprint: String,
    pub points: Vec<CurvePoint>,
}

impl EfficiencyCurve {
    pub fn grid(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.n_per_class).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n_per_class", "effective_n", "mean", "stderr", "repeats"])?;
        for p in &self.points {
            w.write_record([
                p.n_per_class.to_string(),
                p.effective_n.to_string(),
                p.mean.to_string(),
                p.standard_error.to_string(),
                p.repeats.to_string(),
            ])?;
        }
        w.flush().map_err(|e| BenchError::io("<curve csv>", e))?;
        Ok(())
    }
}

/// Train rows grouped by class (canonical order), each group sorted by sample id.
fn train_pool(ds: &TaskDataset, split: &SplitAssignment) -> Vec<Vec<usize>> {
    let mut pool = vec![Vec::new(); ds.num_classes()];
    for r in split.rows(ds, SplitTag::Train) {
        pool[ds.targets()[r]].push(r);
    }
    for members in &mut pool {
        members.sort_by(|&a, &b| ds.sample_ids()[a].cmp(&ds.sample_ids()[b]));
    }
    pool
}

fn subset_rows(pool: &[Vec<usize>], n_per_class: usize, seed: u64) -> Vec<usize> {
    let mut rows = Vec::new();
    for (c, members) in pool.iter().enumerate() {
        let take = n_per_class.min(members.len());
        let mut picked: Vec<usize> = if take == members.len() {
            members.clone()
        } else {
            let mut rng = rng::seeded_stream(seed, c as u64);
            index::sample(&mut rng, members.len(), take)
                .into_iter()
                .map(|i| members[i])
                .collect()
        };
        picked.sort_unstable();
        rows.extend(picked);
    }
    rows
}

/// Up to `n_per_class` train ids per class, drawn without replacement.
///
/// Ids come back grouped by canonical class, each group sorted.
pub fn sample_subset(
    ds: &TaskDataset,
    split: &SplitAssignment,
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<String>> {
    let pool = train_pool(ds, split);
    if pool.iter().all(Vec::is_empty) {
        return Err(BenchError::InvalidInput(format!("task {}: train split is empty", ds.name())));
    }
    let mut ids: Vec<(usize, String)> = subset_rows(&pool, n_per_class, seed)
        .into_iter()
        .map(|r| (ds.targets()[r], ds.sample_ids()[r].clone()))
        .collect();
    ids.sort();
    Ok(ids.into_iter().map(|(_, id)| id).collect())
}

struct EvalContext<'a> {
    ds: &'a TaskDataset,
    val_x: Matrix,
    val_y: Vec<usize>,
    test_x: Matrix,
    test_y: Vec<usize>,
}

impl EvalContext<'_> {
    fn score(&self, classifier: &Classifier, rows: &[usize], seed: u64) -> Result<(f64, Option<usize>)> {
        let x = self.ds.features(rows);
        let y = self.ds.targets_of(rows);
        let c = self.ds.num_classes();
        let (pred, k_used) = match classifier {
            Classifier::Knn(cfg) => {
                let p = knn_predict(&x, &y, c, &self.test_x, cfg)?;
                (p.predictions, Some(p.k_used))
            }
            Classifier::Linear(cfg) => {
                let model = train_probe(&x, &y, &self.val_x, &self.val_y, self.ds.class_list(), cfg, seed)?;
                (probe_predict(&model, &self.test_x)?.0, None)
            }
        };
        Ok((metrics::macro_f1(&pred, &self.test_y, c)?, k_used))
    }
}

/// Score versus labels per class, averaged over `repeats` subsamples.
///
/// Repeat `r` draws its subset (and seeds the probe) with `base_seed + r`.
/// Grid values at or beyond every class size are evaluated once.
pub fn efficiency_curve(
    ds: &TaskDataset,
    split: &SplitAssignment,
    classifier: &Classifier,
    model: &str,
    grid: &[usize],
    repeats: usize,
    base_seed: u64,
) -> Result<EfficiencyCurve> {
    if grid.is_empty() {
        return Err(BenchError::InvalidInput("few-shot grid is empty".into()));
    }
    if grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::InvalidInput("few-shot grid must be strictly ascending and ≥ 1".into()));
    }
    if repeats < 2 {
        return Err(BenchError::InvalidInput("few-shot repeats must be ≥ 2".into()));
    }
    let pool = train_pool(ds, split);
    if pool.iter().all(Vec::is_empty) {
        return Err(BenchError::InvalidInput(format!("task {}: train split is empty", ds.name())));
    }
    let test_rows = split.rows(ds, SplitTag::Test);
    if test_rows.is_empty() {
        return Err(BenchError::InvalidInput(format!("task {}: test split is empty", ds.name())));
    }
    let val_rows = split.rows(ds, SplitTag::Val);
    let ctx = EvalContext {
        ds,
        val_x: ds.features(&val_rows),
        val_y: ds.targets_of(&val_rows),
        test_x: ds.features(&test_rows),
        test_y: ds.targets_of(&test_rows),
    };
    let largest = pool.iter().map(Vec::len).max().unwrap_or(0);

    let mut points = Vec::with_capacity(grid.len());
    for &n in grid {
        let effective_n = pool.iter().map(|m| n.min(m.len())).sum();
        let runs = if n >= largest { 1 } else { repeats };
        let results = (0..runs as u64)
            .into_par_iter()
            .map(|r| {
                let seed = base_seed.wrapping_add(r);
                ctx.score(classifier, &subset_rows(&pool, n, seed), seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<f64> = results.iter().map(|r| r.0).collect();
        let mean = scores.iter().sum::<f64>() / runs as f64;
        let standard_error = if runs > 1 {
            sample_std(&scores) / (runs as f64).sqrt()
        } else {
            0.0
        };
        points.push(CurvePoint {
            n_per_class: n,
            effective_n,
            mean,
            standard_error,
            repeats: runs,
            scores,
            k_used: results[0].1,
        });
    }
    Ok(EfficiencyCurve {
        task: ds.name().to_owned(),
        model: model.to_owned(),
        classifier_kind: classifier.kind(),
        test_fingerprint: split.test_fingerprint(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::join;
    use crate::knn::{knn_frozen_eval, KnnConfig};
    use crate::probe::linear_frozen_eval;
    use crate::split::make_splits;
    use crate::synthetic::{blob_embeddings, blob_labels, BlobSpec};

    fn toy(per_class: usize, separation: f64) -> (TaskDataset, SplitAssignment) {
        let spec = BlobSpec { classes: 3, per_class, dim: 4, separation, seed: 5 };
        let (ds, _) = join(&blob_embeddings(&spec, "m").unwrap(), &blob_labels(3, per_class).unwrap(), "toy").unwrap();
        let split = make_splits(&ds, 0.2, 0.2, 0).unwrap();
        (ds, split)
    }

    #[test]
    fn subset_properties() {
        let (ds, split) = toy(20, 3.0);
        let one = sample_subset(&ds, &split, 1, 3).unwrap();
        assert_eq!(one.len(), 3);
        let idx = ds.row_index();
        let mut classes: Vec<usize> = one.iter().map(|id| ds.targets()[idx[id.as_str()]]).collect();
        classes.dedup();
        assert_eq!(classes, vec![0, 1, 2]);
        assert_eq!(sample_subset(&ds, &split, 4, 9).unwrap(), sample_subset(&ds, &split, 4, 9).unwrap());

        let mut full: Vec<String> = split.rows(&ds, SplitTag::Train).iter().map(|&r| ds.sample_ids()[r].clone()).collect();
        full.sort();
        for seed in [0, 1, 77] {
            let mut all = sample_subset(&ds, &split, 1000, seed).unwrap();
            all.sort();
            assert_eq!(all, full);
        }
    }

    #[test]
    fn exhausted_grid_point_collapses() {
        let (ds, split) = toy(10, 3.0);
        let c = efficiency_curve(&ds, &split, &Classifier::Knn(KnnConfig::default()), "m", &[1, 500], 5, 0).unwrap();
        let last = c.points.last().unwrap();
        assert_eq!((last.repeats, last.standard_error), (1, 0.0));
        assert_eq!(last.effective_n, split.count(SplitTag::Train));
        assert_eq!(c.points[0].repeats, 5);
        assert_eq!(c.points[0].k_used, Some(3));
    }

    #[test]
    fn standard_error_formula() {
        let (ds, split) = toy(30, 2.0);
        let c = efficiency_curve(&ds, &split, &Classifier::Knn(KnnConfig::default()), "m", &[2], 50, 3).unwrap();
        let p = &c.points[0];
        assert_eq!(p.scores.len(), 50);
        assert!((p.standard_error - sample_std(&p.scores) / 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn curve_is_deterministic_and_roughly_monotone() {
        let (ds, split) = toy(40, 2.0);
        for clf in [Classifier::Knn(KnnConfig::default()), Classifier::Linear(ProbeConfig::default())] {
            let a = efficiency_curve(&ds, &split, &clf, "m", &[1, 2, 5, 10, 20], 20, 11).unwrap();
            assert_eq!(a, efficiency_curve(&ds, &split, &clf, "m", &[1, 2, 5, 10, 20], 20, 11).unwrap());
            for w in a.points.windows(2) {
                let slack = 2.0 * (w[0].standard_error + w[1].standard_error);
                assert!(w[1].mean + slack >= w[0].mean, "{:?}: {} then {}", clf.kind(), w[0].mean, w[1].mean);
            }
        }
    }

    #[test]
    fn bad_grid_and_repeats() {
        let (ds, split) = toy(10, 3.0);
        let clf = Classifier::Knn(KnnConfig::default());
        assert!(efficiency_curve(&ds, &split, &clf, "m", &[], 5, 0).is_err());
        assert!(efficiency_curve(&ds, &split, &clf, "m", &[2, 2], 5, 0).is_err());
        assert!(efficiency_curve(&ds, &split, &clf, "m", &[1], 1, 0).is_err());
    }

    #[test]
    fn separable_toy_scores_high_with_both_probes() {
        let (ds, split) = toy(10, 12.0);
        let seeds = [0, 1, 2, 3, 4];
        let knn = knn_frozen_eval(&ds, &split, &KnnConfig::default(), &seeds).unwrap();
        let lin = linear_frozen_eval(&ds, &split, &ProbeConfig::default(), &seeds).unwrap();
        assert!(knn.mean >= 0.95, "knn {}", knn.mean);
        assert!(lin.mean >= 0.95, "linear {}", lin.mean);
    }

    #[test]
    fn csv_layout() {
        let (ds, split) = toy(10, 3.0);
        let c = efficiency_curve(&ds, &split, &Classifier::Knn(KnnConfig::default()), "m", &[1], 3, 0).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n_per_class,effective_n,mean,stderr,repeats\n1,3,"));
    }
}
