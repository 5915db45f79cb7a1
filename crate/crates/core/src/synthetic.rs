//! Synthetic Gaussian-blob benchmarks with a known separation ordering.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};

use crate::data::{save_embeddings, EmbeddingSet, LabelEntry, LabelTable};
use crate::error::{BenchError, Result};
use crate::rng;

/// Isotropic Gaussian classes whose means sit `separation` standard deviations
/// apart pairwise (means at `separation/√2 · e_c`).
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

pub fn sample_id(i: usize) -> String {
    format!("s{i:05}")
}

pub fn class_name(c: usize) -> String {
    format!("class{c}")
}

/// Labels for `classes × per_class` samples; sample `i` has class `i / per_class`.
pub fn blob_labels(classes: usize, per_class: usize) -> Result<LabelTable> {
    LabelTable::from_pairs((0..classes * per_class).map(|i| (sample_id(i), class_name(i / per_class))))
}

pub fn blob_embeddings(spec: &BlobSpec, source_tag: &str) -> Result<EmbeddingSet> {
    assert!(spec.dim >= spec.classes, "blob means need dim ≥ classes");
    let n = spec.classes * spec.per_class;
    let offset = spec.separation / std::f64::consts::SQRT_2;
    let mut rng = rng::seeded(spec.seed);
    let mut values = Vec::with_capacity(n * spec.dim);
    for i in 0..n {
        let c = i / spec.per_class;
        for j in 0..spec.dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let center = if j == c { offset } else { 0.0 };
            values.push((center + noise) as f32);
        }
    }
    EmbeddingSet::new((0..n).map(sample_id).collect(), spec.dim, values, source_tag)
}

/// A two-model benchmark over Gaussian blobs: `strong` separates classes by
/// `strong_separation` σ, `weak` by `weak_separation` σ, on the same samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSpec {
    pub tasks: usize,
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub strong_separation: f64,
    pub weak_separation: f64,
    /// Images per patient; consecutive samples of one class share a patient.
    pub images_per_patient: usize,
    pub seed: u64,
    pub grid: Vec<usize>,
    pub repeats: usize,
}

impl Default for DemoSpec {
    fn default() -> Self {
        DemoSpec {
            tasks: 2,
            classes: 4,
            per_class: 200,
            dim: 8,
            strong_separation: 3.0,
            weak_separation: 1.0,
            images_per_patient: 2,
            seed: 7,
            grid: vec![1, 2, 5, 10, 20, 50],
            repeats: 50,
        }
    }
}

/// Writes labels, embedding containers and a `config.json` into `dir` and
/// returns the config path. Paths in the config are relative to `dir`.
pub fn write_demo(dir: impl AsRef<Path>, spec: &DemoSpec) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let per_patient = spec.images_per_patient.max(1);
    let mut tasks = Vec::new();
    for t in 0..spec.tasks {
        let name = format!("task{t}");
        let entries: BTreeMap<String, LabelEntry> = (0..spec.classes * spec.per_class)
            .map(|i| {
                let (c, within) = (i / spec.per_class, i % spec.per_class);
                let patient = format!("c{c}p{:04}", within / per_patient);
                (sample_id(i), LabelEntry::new(class_name(c)).with_patient(patient))
            })
            .collect();
        let labels_file = format!("{name}_labels.csv");
        LabelTable::new(entries)?.save(dir.join(&labels_file))?;

        let mut embeddings = serde_json::Map::new();
        for (model, sep, stream) in [("strong", spec.strong_separation, 0), ("weak", spec.weak_separation, 1)] {
            let blob = BlobSpec {
                classes: spec.classes,
                per_class: spec.per_class,
                dim: spec.dim,
                separation: sep,
                seed: spec.seed.wrapping_mul(1000).wrapping_add(10 * t as u64 + stream),
            };
            let file = format!("{name}_{model}.reprb");
            save_embeddings(&blob_embeddings(&blob, model)?, dir.join(&file))?;
            embeddings.insert(model.to_string(), file.into());
        }
        tasks.push(serde_json::json!({
            "name": name,
            "labels": labels_file,
            "embeddings": embeddings,
        }));
    }
    let config = serde_json::json!({
        "tasks": tasks,
        "models": ["strong", "weak"],
        "evaluations": ["knn_frozen", "linear_frozen", "fewshot_knn", "fewshot_linear", "utility", "stats"],
        "seeds": [0, 1, 2, 3, 4],
        "fewshot": {"grid": spec.grid, "repeats": spec.repeats, "base_seed": 0},
        "baseline_model": "weak",
        "output_dir": "out",
    });
    let path = dir.join("config.json");
    let mut text = serde_json::to_string_pretty(&config)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| BenchError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic() {
        let spec = BlobSpec { classes: 3, per_class: 4, dim: 5, separation: 3.0, seed: 1 };
        let a = blob_embeddings(&spec, "m").unwrap();
        assert_eq!(a, blob_embeddings(&spec, "m").unwrap());
        assert_eq!((a.len(), a.dim()), (12, 5));
        assert_eq!(blob_labels(3, 4).unwrap().classes(), vec!["class0", "class1", "class2"]);
    }

    #[test]
    fn demo_config_loads() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DemoSpec { per_class: 10, tasks: 1, ..DemoSpec::default() };
        let path = write_demo(dir.path(), &spec).unwrap();
        let cfg = crate::report::RunConfig::load(&path).unwrap();
        assert_eq!(cfg.models, vec!["strong", "weak"]);
        let labels = LabelTable::load(&cfg.tasks[0].labels).unwrap();
        assert_eq!(labels.len(), 40);
        assert_eq!(labels.get("s00001").unwrap().patient_id.as_deref(), Some("c0p0000"));
    }
}
