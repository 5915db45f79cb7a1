//! Run configuration: one JSON document drives a whole benchmark.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::fewshot::{DEFAULT_GRID, DEFAULT_REPEATS};
use crate::knn::KnnConfig;
use crate::probe::ProbeConfig;
use crate::stats::StarRule;

/// JSON schema for [`RunConfig`] files.
pub const SCHEMA: &str = include_str!("../../schema/run_config.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    KnnFrozen,
    LinearFrozen,
    FewshotKnn,
    FewshotLinear,
    Utility,
    Stats,
}

impl Evaluation {
    pub const ALL: [Evaluation; 6] = [
        Evaluation::KnnFrozen,
        Evaluation::LinearFrozen,
        Evaluation::FewshotKnn,
        Evaluation::FewshotLinear,
        Evaluation::Utility,
        Evaluation::Stats,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    pub labels: PathBuf,
    /// Embedding container per model tag.
    pub embeddings: BTreeMap<String, PathBuf>,
    /// Precomputed `sample_id,split` file; generated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.15,
            val_fraction: 0.15,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewshotConfig {
    pub grid: Vec<usize>,
    pub repeats: usize,
    pub base_seed: u64,
}

impl Default for FewshotConfig {
    fn default() -> Self {
        FewshotConfig {
            grid: DEFAULT_GRID.to_vec(),
            repeats: DEFAULT_REPEATS,
            base_seed: 0,
        }
    }
}

fn default_evaluations() -> Vec<Evaluation> {
    Evaluation::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_alpha() -> f64 {
    0.05
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tasks: Vec<TaskConfig>,
    /// Model tags in report order.
    pub models: Vec<String>,
    #[serde(default = "default_evaluations")]
    pub evaluations: Vec<Evaluation>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub fewshot: FewshotConfig,
    #[serde(default)]
    pub knn: KnnConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_model: Option<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub star_rule: StarRule,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub save_probes: bool,
}

fn safe_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !s.starts_with('.')
}

impl RunConfig {
    /// Parses, resolves relative paths against the file's directory and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let mut cfg = RunConfig::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| BenchError::Config(vec![format!("config parse: {e}")]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for t in &mut self.tasks {
            fix(&mut t.labels);
            t.embeddings.values_mut().for_each(fix);
            if let Some(s) = &mut t.split {
                fix(s);
            }
        }
        fix(&mut self.output_dir);
    }

    pub fn wants(&self, e: Evaluation) -> bool {
        self.evaluations.contains(&e)
    }

    /// Adds `base` to every seed in the configuration.
    pub fn offset_seeds(&mut self, base: u64) {
        for s in &mut self.seeds {
            *s = s.wrapping_add(base);
        }
        self.split.seed = self.split.seed.wrapping_add(base);
        self.fewshot.base_seed = self.fewshot.base_seed.wrapping_add(base);
    }

    /// Checks every constraint and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();

        if self.tasks.is_empty() {
            errs.push("tasks: at least one task is required".to_string());
        }
        let mut names = BTreeSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if !safe_name(&t.name) {
                errs.push(format!(
                    "tasks[{i}].name {:?}: use letters, digits, '_', '-' or '.'",
                    t.name
                ));
            }
            if !names.insert(&t.name) {
                errs.push(format!("tasks[{i}].name {:?} is duplicated", t.name));
            }
            for m in &self.models {
                if !t.embeddings.contains_key(m) {
                    errs.push(format!("tasks[{i}] ({}): no embeddings for model {m:?}", t.name));
                }
            }
            for m in t.embeddings.keys() {
                if !self.models.contains(m) {
                    errs.push(format!("tasks[{i}] ({}): embeddings for unknown model {m:?}", t.name));
                }
            }
        }

        if self.models.is_empty() {
            errs.push("models: at least one model is required".to_string());
        }
        let mut seen = BTreeSet::new();
        for m in &self.models {
            if !safe_name(m) {
                errs.push(format!("models: tag {m:?}: use letters, digits, '_', '-' or '.'"));
            }
            if !seen.insert(m) {
                errs.push(format!("models: tag {m:?} is duplicated"));
            }
        }

        if self.evaluations.is_empty() {
            errs.push("evaluations: at least one evaluation is required".to_string());
        }
        let mut evs = BTreeSet::new();
        for e in &self.evaluations {
            if !evs.insert(e) {
                errs.push(format!("evaluations: {e:?} listed twice"));
            }
        }

        if self.seeds.is_empty() {
            errs.push("seeds: list must not be empty".to_string());
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            errs.push("seeds: values must be distinct".to_string());
        }

        let s = &self.split;
        for (name, f) in [("test_fraction", s.test_fraction), ("val_fraction", s.val_fraction)] {
            if !(f > 0.0 && f < 1.0) {
                errs.push(format!("split.{name} must lie in (0, 1), got {f}"));
            }
        }

        let fs = &self.fewshot;
        if fs.grid.is_empty() || fs.grid[0] == 0 || fs.grid.windows(2).any(|w| w[0] >= w[1]) {
            errs.push("fewshot.grid must be non-empty, strictly ascending and ≥ 1".to_string());
        }
        if fs.repeats < 2 {
            errs.push("fewshot.repeats must be ≥ 2".to_string());
        }

        if let Err(e) = self.knn.validate() {
            errs.push(format!("knn: {e}"));
        }
        if let Err(e) = self.probe.validate() {
            errs.push(format!("probe: {e}"));
        }

        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            errs.push(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }

        if self.wants(Evaluation::Utility) {
            match &self.baseline_model {
                None => errs.push("baseline_model is required when utility is requested".to_string()),
                Some(b) if !self.models.contains(b) => {
                    errs.push(format!("baseline_model {b:?} is not among models"))
                }
                _ => {}
            }
            if !self.wants(Evaluation::FewshotKnn) && !self.wants(Evaluation::FewshotLinear) {
                errs.push("utility requires fewshot_knn or fewshot_linear".to_string());
            }
        }
        if self.wants(Evaluation::Stats) {
            if self.models.len() < 2 {
                errs.push("stats requires at least 2 models".to_string());
            }
            if self.seeds.len() < 2 {
                errs.push("stats requires at least 2 seeds".to_string());
            }
            if !self.wants(Evaluation::KnnFrozen) && !self.wants(Evaluation::LinearFrozen) {
                errs.push("stats requires knn_frozen or linear_frozen".to_string());
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(BenchError::Config(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "tasks": [{"name": "t", "labels": "l.csv", "embeddings": {"a": "a.reprb"}}],
        "models": ["a"],
        "evaluations": ["knn_frozen"]
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.fewshot.grid, DEFAULT_GRID.to_vec());
        assert_eq!(cfg.knn.k, 20);
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.split.test_fraction, 0.15);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, MINIMAL).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.tasks[0].labels, dir.path().join("l.csv"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
    }

    #[test]
    fn all_violations_listed_at_once() {
        let text = r#"{
            "tasks": [{"name": "t/x", "labels": "l.csv", "embeddings": {"a": "a"}}],
            "models": ["a", "b"],
            "seeds": [],
            "alpha": 2.0,
            "knn": {"k": 0},
            "evaluations": ["utility", "stats"]
        }"#;
        let Err(BenchError::Config(errs)) = RunConfig::from_json(text) else {
            panic!("expected config error")
        };
        let joined = errs.join("\n");
        for needle in ["name", "model \"b\"", "seeds", "alpha", "knn", "baseline_model", "fewshot_knn", "stats requires at least 2 seeds"] {
            assert!(joined.contains(needle), "missing {needle:?} in {joined}");
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = MINIMAL.replace("\"models\"", "\"modles\": [], \"models\"");
        assert!(matches!(RunConfig::from_json(&text), Err(BenchError::Config(_))));
    }

    #[test]
    fn baseline_must_be_a_model() {
        let text = r#"{
            "tasks": [{"name": "t", "labels": "l", "embeddings": {"a": "a"}}],
            "models": ["a"], "baseline_model": "z",
            "evaluations": ["fewshot_knn", "utility"]
        }"#;
        let err = RunConfig::from_json(text).unwrap_err();
        assert!(err.to_string().contains("not among models"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn seed_offset_moves_every_seed() {
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        cfg.offset_seeds(100);
        assert_eq!(cfg.seeds, vec![100, 101, 102, 103, 104]);
        assert_eq!(cfg.split.seed, 100);
        assert_eq!(cfg.fewshot.base_seed, 100);
    }

    #[test]
    fn schema_is_valid_json_and_covers_fields() {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        let props = schema["properties"].as_object().unwrap();
        let cfg = serde_json::to_value(RunConfig::from_json(MINIMAL).unwrap()).unwrap();
        for key in cfg.as_object().unwrap().keys() {
            assert!(props.contains_key(key), "schema lacks {key}");
        }
    }
}
