//! Batch driver: loads tasks, splits them, runs the requested evaluations
//! concurrently and writes every artifact under the output directory.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{Evaluation, RunConfig, TaskConfig};
use super::format::{assemble_report, EvalReport, FrozenResult, Provenance, StatsEntry};
use super::svg::emit_plots;
use crate::data::{join, load_embeddings, save_embeddings, JoinReport, LabelTable, TaskDataset};
use crate::error::{BenchError, Result};
use crate::fewshot::{efficiency_curve, Classifier, ClassifierKind, EfficiencyCurve};
use crate::knn::knn_frozen_eval;
use crate::probe::{linear_frozen_eval_models, ProbeModel};
use crate::split::{audit_split, make_splits, SplitAssignment, SplitReport};
use crate::stats::annotate_significance;
use crate::utility::{utility_score, UtilityResult};

/// One task with a dataset per model, all over the same ids in the same row order.
#[derive(Debug, Clone)]
pub struct LoadedTask {
    pub name: String,
    /// Indexed like `RunConfig::models`.
    pub datasets: Vec<TaskDataset>,
    pub joins: Vec<JoinReport>,
    pub split: SplitAssignment,
    pub audit: SplitReport,
}

fn load_task(cfg: &RunConfig, tc: &TaskConfig) -> Result<LoadedTask> {
    let labels = LabelTable::load(&tc.labels)?;
    let mut datasets = Vec::with_capacity(cfg.models.len());
    let mut joins = Vec::with_capacity(cfg.models.len());
    for m in &cfg.models {
        let emb = load_embeddings(&tc.embeddings[m])?;
        let (ds, rep) = join(&emb, &labels, &tc.name)?;
        if !rep.is_clean() {
            log::warn!(
                "task {}: model {m}: dropped {} embeddings without labels, {} labels without embeddings",
                tc.name,
                rep.dropped_embeddings.len(),
                rep.dropped_labels.len()
            );
        }
        datasets.push(ds);
        joins.push(rep);
    }

    // Align every model on the common ids in sorted order so subsampling and
    // tie-breaking see identical rows.
    let mut common: BTreeSet<&str> = datasets[0].sample_ids().iter().map(String::as_str).collect();
    for ds in &datasets[1..] {
        let ids: HashSet<&str> = ds.sample_ids().iter().map(String::as_str).collect();
        common.retain(|id| ids.contains(id));
    }
    if common.is_empty() {
        return Err(BenchError::Validation(format!(
            "task {}: models share no labelled sample",
            tc.name
        )));
    }
    let common: Vec<String> = common.into_iter().map(str::to_owned).collect();
    let datasets = datasets
        .iter()
        .map(|ds| {
            let index = ds.row_index();
            let rows: Vec<usize> = common.iter().map(|id| index[id.as_str()]).collect();
            join(&ds.embeddings().select(&rows)?, ds.labels(), &tc.name).map(|(d, _)| d)
        })
        .collect::<Result<Vec<_>>>()?;

    let reference = &datasets[0];
    let split = match &tc.split {
        Some(path) => SplitAssignment::load(path)?,
        None => make_splits(
            reference,
            cfg.split.test_fraction,
            cfg.split.val_fraction,
            cfg.split.seed,
        )?,
    };
    let audit = audit_split(reference, &split);
    if !audit.unassigned.is_empty() {
        return Err(BenchError::Validation(format!(
            "task {}: {} samples have no split assignment (first: {})",
            tc.name,
            audit.unassigned.len(),
            audit.unassigned[0]
        )));
    }
    if audit.leaked_patients > 0 {
        return Err(BenchError::Validation(format!(
            "task {}: {} patients appear in more than one split",
            tc.name, audit.leaked_patients
        )));
    }
    for c in &audit.missing_train_classes {
        log::warn!("task {}: class {c:?} has no training samples", tc.name);
    }
    Ok(LoadedTask {
        name: tc.name.clone(),
        datasets,
        joins,
        split,
        audit,
    })
}

pub fn load_tasks(cfg: &RunConfig) -> Result<Vec<LoadedTask>> {
    cfg.tasks.par_iter().map(|t| load_task(cfg, t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Job {
    Frozen { task: usize, model: usize, kind: ClassifierKind },
    Curve { task: usize, model: usize, kind: ClassifierKind },
}

enum JobOutput {
    Frozen(FrozenResult, Vec<(u64, ProbeModel)>),
    Curve(EfficiencyCurve),
}

/// Frozen and few-shot results for every task and model.
#[derive(Debug, Clone, Default)]
pub struct Evaluations {
    pub frozen: Vec<FrozenResult>,
    pub curves: Vec<EfficiencyCurve>,
    /// (task, model, seed, probe) for every trained frozen linear probe.
    pub probes: Vec<(String, String, u64, ProbeModel)>,
}

fn run_job(cfg: &RunConfig, tasks: &[LoadedTask], job: Job) -> Result<JobOutput> {
    match job {
        Job::Frozen { task, model, kind } => {
            let t = &tasks[task];
            let ds = &t.datasets[model];
            log::info!("frozen {} on {}/{}", kind.as_str(), t.name, cfg.models[model]);
            let (summary, probes) = match kind {
                ClassifierKind::Knn => (knn_frozen_eval(ds, &t.split, &cfg.knn, &cfg.seeds)?, Vec::new()),
                ClassifierKind::Linear => {
                    let (s, models) = linear_frozen_eval_models(ds, &t.split, &cfg.probe, &cfg.seeds)?;
                    (s, cfg.seeds.iter().copied().zip(models).collect())
                }
            };
            Ok(JobOutput::Frozen(
                FrozenResult {
                    task: t.name.clone(),
                    model: cfg.models[model].clone(),
                    probe: kind,
                    summary,
                },
                probes,
            ))
        }
        Job::Curve { task, model, kind } => {
            let t = &tasks[task];
            log::info!("few-shot {} on {}/{}", kind.as_str(), t.name, cfg.models[model]);
            let classifier = match kind {
                ClassifierKind::Knn => Classifier::Knn(cfg.knn.clone()),
                ClassifierKind::Linear => Classifier::Linear(cfg.probe.clone()),
            };
            efficiency_curve(
                &t.datasets[model],
                &t.split,
                &classifier,
                &cfg.models[model],
                &cfg.fewshot.grid,
                cfg.fewshot.repeats,
                cfg.fewshot.base_seed,
            )
            .map(JobOutput::Curve)
        }
    }
}

/// Runs the requested frozen and/or few-shot evaluations. Jobs execute in
/// parallel; results come back in task, kind, model order.
pub fn evaluate(cfg: &RunConfig, tasks: &[LoadedTask], frozen: bool, fewshot: bool) -> Result<Evaluations> {
    let mut jobs = Vec::new();
    for task in 0..tasks.len() {
        for (kind, fe, ce) in [
            (ClassifierKind::Knn, Evaluation::KnnFrozen, Evaluation::FewshotKnn),
            (ClassifierKind::Linear, Evaluation::LinearFrozen, Evaluation::FewshotLinear),
        ] {
            for model in 0..cfg.models.len() {
                if frozen && cfg.wants(fe) {
                    jobs.push(Job::Frozen { task, model, kind });
                }
                if fewshot && cfg.wants(ce) {
                    jobs.push(Job::Curve { task, model, kind });
                }
            }
        }
    }
    let outputs: Vec<Result<JobOutput>> = jobs.par_iter().map(|&j| run_job(cfg, tasks, j)).collect();

    let mut out = Evaluations::default();
    let mut first_err = None;
    for (job, res) in jobs.iter().zip(outputs) {
        match res {
            Ok(JobOutput::Frozen(f, probes)) => {
                for (seed, p) in probes {
                    out.probes.push((f.task.clone(), f.model.clone(), seed, p));
                }
                out.frozen.push(f);
            }
            Ok(JobOutput::Curve(c)) => out.curves.push(c),
            Err(e) => {
                log::error!("{job:?} failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Utility of every non-baseline model against the baseline, per task and kind.
pub fn compute_utilities(cfg: &RunConfig, curves: &[EfficiencyCurve]) -> Result<Vec<UtilityResult>> {
    let Some(baseline) = &cfg.baseline_model else {
        return Err(BenchError::Config(vec!["baseline_model is required for utility".into()]));
    };
    let mut out = Vec::new();
    for t in &cfg.tasks {
        for kind in [ClassifierKind::Knn, ClassifierKind::Linear] {
            let find = |m: &str| {
                curves
                    .iter()
                    .find(|c| c.task == t.name && c.classifier_kind == kind && c.model == m)
            };
            let Some(base) = find(baseline) else { continue };
            for m in cfg.models.iter().filter(|m| *m != baseline) {
                if let Some(c) = find(m) {
                    out.push(utility_score(c, base)?);
                }
            }
        }
    }
    Ok(out)
}

/// ANOVA and Tukey HSD across models for each (task, probe) with frozen results.
///
/// Degenerate inputs (zero within-group variance) leave the column unstarred
/// and are recorded as a note instead of failing the run.
pub fn compute_stats(cfg: &RunConfig, frozen: &[FrozenResult]) -> Result<Vec<StatsEntry>> {
    let mut out = Vec::new();
    for t in &cfg.tasks {
        for probe in [ClassifierKind::Knn, ClassifierKind::Linear] {
            let column: Vec<&FrozenResult> = cfg
                .models
                .iter()
                .filter_map(|m| {
                    frozen
                        .iter()
                        .find(|f| f.task == t.name && f.probe == probe && &f.model == m)
                })
                .collect();
            if column.len() < 2 {
                continue;
            }
            let summaries: Vec<_> = column.iter().map(|f| f.summary.clone()).collect();
            let models = column.iter().map(|f| f.model.clone()).collect();
            let (significance, note) = match annotate_significance(&summaries, cfg.alpha, cfg.star_rule) {
                Ok(Some(s)) => (Some(s), None),
                Ok(None) => (None, Some("all scores identical".to_string())),
                Err(BenchError::Numerical(msg)) => {
                    log::warn!("task {} ({}): no significance test: {msg}", t.name, probe.as_str());
                    (None, Some(msg))
                }
                Err(e) => return Err(e),
            };
            out.push(StatsEntry {
                task: t.name.clone(),
                probe,
                models,
                significance,
                note,
            });
        }
    }
    Ok(out)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| BenchError::io(p, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Locations of every artifact under an output directory.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputLayout { root: root.into() }
    }

    pub fn frozen_json(&self) -> PathBuf {
        self.root.join("results/frozen.json")
    }

    pub fn curves_json(&self) -> PathBuf {
        self.root.join("results/curves.json")
    }

    pub fn utility_json(&self) -> PathBuf {
        self.root.join("results/utility.json")
    }

    pub fn stats_json(&self) -> PathBuf {
        self.root.join("results/stats.json")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn report_md(&self) -> PathBuf {
        self.root.join("report.md")
    }

    pub fn provenance_json(&self) -> PathBuf {
        self.root.join("provenance.json")
    }

    pub fn plots_dir(&self) -> PathBuf {
        self.root.join("plots")
    }

    pub fn split_csv(&self, task: &str) -> PathBuf {
        self.root.join("splits").join(format!("{task}.csv"))
    }

    pub fn split_audit(&self, task: &str) -> PathBuf {
        self.root.join("splits").join(format!("{task}.audit.json"))
    }

    pub fn curve_csv(&self, c: &EfficiencyCurve) -> PathBuf {
        self.root
            .join("curves")
            .join(format!("{}__{}__{}.csv", c.task, c.model, c.classifier_kind.as_str()))
    }

    pub fn utility_csv(&self, u: &UtilityResult) -> PathBuf {
        self.root.join("utility").join(format!(
            "{}__{}__vs__{}__{}.csv",
            u.task,
            u.model,
            u.baseline,
            u.classifier_kind.as_str()
        ))
    }

    pub fn probe_file(&self, task: &str, model: &str, seed: u64) -> PathBuf {
        self.root
            .join("probes")
            .join(format!("{task}__{model}__seed{seed}.reprb"))
    }
}

pub fn write_splits(out: &OutputLayout, tasks: &[LoadedTask]) -> Result<()> {
    for t in tasks {
        ensure_dir(&out.root.join("splits"))?;
        t.split.save(out.split_csv(&t.name))?;
        write_json(&out.split_audit(&t.name), &t.audit)?;
    }
    Ok(())
}

pub fn write_evaluations(out: &OutputLayout, cfg: &RunConfig, ev: &Evaluations) -> Result<()> {
    if !ev.frozen.is_empty() {
        write_json(&out.frozen_json(), &ev.frozen)?;
    }
    if !ev.curves.is_empty() {
        write_json(&out.curves_json(), &ev.curves)?;
        for c in &ev.curves {
            let mut buf = Vec::new();
            c.write_csv(&mut buf)?;
            write_text(&out.curve_csv(c), &String::from_utf8_lossy(&buf))?;
        }
    }
    if cfg.save_probes {
        for (task, model, seed, p) in &ev.probes {
            let path = out.probe_file(task, model, *seed);
            if let Some(parent) = path.parent() {
                ensure_dir(parent)?;
            }
            save_embeddings(&p.to_embedding_set(task, *seed)?, &path)?;
        }
    }
    Ok(())
}

pub fn write_utilities(out: &OutputLayout, utilities: &[UtilityResult]) -> Result<()> {
    write_json(&out.utility_json(), utilities)?;
    for u in utilities {
        let mut buf = Vec::new();
        u.write_csv(&mut buf)?;
        write_text(&out.utility_csv(u), &String::from_utf8_lossy(&buf))?;
    }
    Ok(())
}

pub fn write_stats(out: &OutputLayout, stats: &[StatsEntry]) -> Result<()> {
    write_json(&out.stats_json(), stats)
}

/// Writes report.json, report.csv and report.md. None of them contain
/// timestamps or paths.
pub fn write_report(out: &OutputLayout, report: &EvalReport) -> Result<()> {
    write_text(&out.report_json(), &report.to_json()?)?;
    write_text(&out.report_csv(), &report.to_csv()?)?;
    write_text(&out.report_md(), &report.to_markdown())
}

fn read_optional<T: DeserializeOwned + Default>(path: &Path) -> Result<T> {
    if path.exists() {
        read_json(path)
    } else {
        Ok(T::default())
    }
}

pub fn read_frozen(out: &OutputLayout) -> Result<Vec<FrozenResult>> {
    read_optional(&out.frozen_json())
}

pub fn read_curves(out: &OutputLayout) -> Result<Vec<EfficiencyCurve>> {
    read_optional(&out.curves_json())
}

pub fn read_utilities(out: &OutputLayout) -> Result<Vec<UtilityResult>> {
    read_optional(&out.utility_json())
}

pub fn read_stats(out: &OutputLayout) -> Result<Vec<StatsEntry>> {
    read_optional(&out.stats_json())
}

pub fn task_names(cfg: &RunConfig) -> Vec<String> {
    cfg.tasks.iter().map(|t| t.name.clone()).collect()
}

/// Hashes of the configuration and of every input file it references.
pub fn provenance(cfg: &RunConfig, jobs: usize, started_at: String) -> Result<Provenance> {
    let mut inputs = BTreeMap::new();
    for t in &cfg.tasks {
        let mut paths: Vec<&PathBuf> = vec![&t.labels];
        paths.extend(t.embeddings.values());
        paths.extend(t.split.iter());
        for p in paths {
            let bytes = std::fs::read(p).map_err(|e| BenchError::io(p, e))?;
            inputs.insert(p.display().to_string(), sha256_hex(&bytes));
        }
    }
    Ok(Provenance {
        engine: env!("CARGO_PKG_NAME").to_string(),
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(&serde_json::to_vec(cfg)?),
        inputs,
        jobs,
        started_at,
        finished_at: now(),
    })
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Everything produced by [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub provenance: Provenance,
    pub evaluations: Evaluations,
    pub utilities: Vec<UtilityResult>,
    pub stats: Vec<StatsEntry>,
    pub plots: Vec<PathBuf>,
}

/// Full benchmark: split, frozen and few-shot evaluation, utility, statistics,
/// report and plots. Call inside a rayon pool to bound parallelism.
pub fn run(cfg: &RunConfig, jobs: usize) -> Result<RunOutcome> {
    let started = now();
    let out = OutputLayout::new(&cfg.output_dir);
    ensure_dir(&out.root)?;

    let tasks = load_tasks(cfg)?;
    write_splits(&out, &tasks)?;

    let evaluations = evaluate(cfg, &tasks, true, true)?;
    write_evaluations(&out, cfg, &evaluations)?;

    let utilities = if cfg.wants(Evaluation::Utility) {
        let u = compute_utilities(cfg, &evaluations.curves)?;
        write_utilities(&out, &u)?;
        u
    } else {
        Vec::new()
    };
    let stats = if cfg.wants(Evaluation::Stats) {
        let s = compute_stats(cfg, &evaluations.frozen)?;
        write_stats(&out, &s)?;
        s
    } else {
        Vec::new()
    };

    let report = assemble_report(&task_names(cfg), &cfg.models, &evaluations.frozen, &stats, &utilities);
    write_report(&out, &report)?;
    let plots = if evaluations.curves.is_empty() && utilities.is_empty() {
        Vec::new()
    } else {
        emit_plots(&evaluations.curves, &utilities, out.plots_dir())?
    };
    let provenance = provenance(cfg, jobs, started)?;
    write_json(&out.provenance_json(), &provenance)?;

    Ok(RunOutcome {
        report,
        provenance,
        evaluations,
        utilities,
        stats,
        plots,
    })
}

/// Runs `f` on a dedicated pool of `jobs` threads (0 means rayon's default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| BenchError::InvalidInput(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Pipeline step selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Split,
    Eval,
    Fewshot,
    Utility,
    Stats,
    Report,
}

fn require_any(cfg: &RunConfig, stage: &str, evals: &[Evaluation]) -> Result<()> {
    if evals.iter().any(|&e| cfg.wants(e)) {
        Ok(())
    } else {
        Err(BenchError::Config(vec![format!(
            "{stage}: configuration requests none of {evals:?}"
        )]))
    }
}

/// Runs a single step, reading earlier results from the output directory
/// where needed. Returns the paths of the main files written.
pub fn run_stage(cfg: &RunConfig, stage: Stage, jobs: usize) -> Result<Vec<PathBuf>> {
    let out = OutputLayout::new(&cfg.output_dir);
    ensure_dir(&out.root)?;
    match stage {
        Stage::Split => {
            let tasks = load_tasks(cfg)?;
            write_splits(&out, &tasks)?;
            Ok(tasks.iter().map(|t| out.split_csv(&t.name)).collect())
        }
        Stage::Eval => {
            require_any(cfg, "eval", &[Evaluation::KnnFrozen, Evaluation::LinearFrozen])?;
            let tasks = load_tasks(cfg)?;
            let ev = evaluate(cfg, &tasks, true, false)?;
            write_evaluations(&out, cfg, &ev)?;
            Ok(vec![out.frozen_json()])
        }
        Stage::Fewshot => {
            require_any(cfg, "fewshot", &[Evaluation::FewshotKnn, Evaluation::FewshotLinear])?;
            let tasks = load_tasks(cfg)?;
            let ev = evaluate(cfg, &tasks, false, true)?;
            write_evaluations(&out, cfg, &ev)?;
            let mut paths = vec![out.curves_json()];
            paths.extend(emit_plots(&ev.curves, &[], out.plots_dir())?);
            Ok(paths)
        }
        Stage::Utility => {
            require_any(cfg, "utility", &[Evaluation::Utility])?;
            let curves = read_curves(&out)?;
            if curves.is_empty() {
                return Err(BenchError::Validation(format!(
                    "no curves in {}; run the fewshot step first",
                    out.curves_json().display()
                )));
            }
            let utilities = compute_utilities(cfg, &curves)?;
            write_utilities(&out, &utilities)?;
            let mut paths = vec![out.utility_json()];
            paths.extend(emit_plots(&curves, &utilities, out.plots_dir())?);
            Ok(paths)
        }
        Stage::Stats => {
            require_any(cfg, "stats", &[Evaluation::Stats])?;
            let frozen = read_frozen(&out)?;
            if frozen.is_empty() {
                return Err(BenchError::Validation(format!(
                    "no frozen results in {}; run the eval step first",
                    out.frozen_json().display()
                )));
            }
            write_stats(&out, &compute_stats(cfg, &frozen)?)?;
            Ok(vec![out.stats_json()])
        }
        Stage::Report => {
            let started = now();
            let frozen = read_frozen(&out)?;
            let curves = read_curves(&out)?;
            let utilities = read_utilities(&out)?;
            let stats = read_stats(&out)?;
            let report = assemble_report(&task_names(cfg), &cfg.models, &frozen, &stats, &utilities);
            write_report(&out, &report)?;
            if !curves.is_empty() || !utilities.is_empty() {
                emit_plots(&curves, &utilities, out.plots_dir())?;
            }
            write_json(&out.provenance_json(), &provenance(cfg, jobs, started)?)?;
            Ok(vec![out.report_json(), out.report_csv(), out.report_md()])
        }
    }
}
