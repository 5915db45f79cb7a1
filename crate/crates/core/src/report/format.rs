//! Report assembly and rendering: JSON, CSV and a Markdown table whose cells
//! read "mean ± std" in percent.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fewshot::ClassifierKind;
use crate::metrics::ScoreSummary;
use crate::stats::Significance;
use crate::utility::UtilityResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenResult {
    pub task: String,
    pub model: String,
    pub probe: ClassifierKind,
    pub summary: ScoreSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsEntry {
    pub task: String,
    pub probe: ClassifierKind,
    /// Model tags in the order used for the test.
    pub models: Vec<String>,
    pub significance: Option<Significance>,
    /// Why no test result is available, if so.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl StatsEntry {
    pub fn is_starred(&self, model: &str) -> bool {
        let Some(sig) = &self.significance else {
            return false;
        };
        self.models
            .iter()
            .position(|m| m == model)
            .is_some_and(|i| sig.starred[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub task: String,
    pub probe: ClassifierKind,
    pub model: String,
    pub mean: f64,
    pub std: f64,
    pub text: String,
    pub bold: bool,
    pub starred: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub task: String,
    pub classifier_kind: ClassifierKind,
    pub model: String,
    pub baseline: String,
    pub aggregate_mean: Option<f64>,
    pub infinite_count: usize,
    pub points: usize,
}

/// Everything in a report that depends only on configuration and inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: Vec<String>,
    pub models: Vec<String>,
    pub cells: Vec<ReportCell>,
    pub stats: Vec<StatsEntry>,
    pub utilities: Vec<UtilityRow>,
}

/// Run metadata kept apart from the report body so the body stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine: String,
    pub engine_version: String,
    pub config_sha256: String,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub jobs: usize,
    pub started_at: String,
    pub finished_at: String,
}

/// `x` in percent with one decimal, rounded half-up.
///
/// Works in integer micro-percent so values such as 0.6455 that sit just
/// below a tie in binary still round up.
fn percent_1dp(x: f64) -> String {
    let micro = (x * 1e8).round() as i64;
    let tenths = (micro + 50_000).div_euclid(100_000);
    let sign = if tenths < 0 { "-" } else { "" };
    let t = tenths.abs();
    format!("{sign}{}.{}", t / 10, t % 10)
}

/// "84.5 ± 2.9", with a trailing `*` when starred.
pub fn format_cell(summary: &ScoreSummary, starred: bool) -> String {
    let mut s = format!("{} ± {}", percent_1dp(summary.mean), percent_1dp(summary.std));
    if starred {
        s.push('*');
    }
    s
}

fn probe_label(p: ClassifierKind) -> &'static str {
    match p {
        ClassifierKind::Knn => "kNN",
        ClassifierKind::Linear => "linear",
    }
}

/// Builds the report in canonical order: task, then probe (kNN before
/// linear), then model as listed in the configuration.
pub fn assemble_report(
    tasks: &[String],
    models: &[String],
    frozen: &[FrozenResult],
    stats: &[StatsEntry],
    utilities: &[UtilityResult],
) -> EvalReport {
    let mut cells = Vec::new();
    for task in tasks {
        for probe in [ClassifierKind::Knn, ClassifierKind::Linear] {
            let column: Vec<&FrozenResult> = models
                .iter()
                .filter_map(|m| {
                    frozen
                        .iter()
                        .find(|f| &f.task == task && f.probe == probe && &f.model == m)
                })
                .collect();
            let best = column
                .iter()
                .map(|f| f.summary.mean)
                .fold(f64::NEG_INFINITY, f64::max);
            let entry = stats.iter().find(|s| &s.task == task && s.probe == probe);
            for f in column {
                let starred = entry.is_some_and(|e| e.is_starred(&f.model));
                cells.push(ReportCell {
                    task: task.clone(),
                    probe,
                    model: f.model.clone(),
                    mean: f.summary.mean,
                    std: f.summary.std,
                    text: format_cell(&f.summary, starred),
                    bold: f.summary.mean == best,
                    starred,
                });
            }
        }
    }

    let mut stats_sorted = Vec::new();
    for task in tasks {
        for probe in [ClassifierKind::Knn, ClassifierKind::Linear] {
            stats_sorted.extend(stats.iter().filter(|s| &s.task == task && s.probe == probe).cloned());
        }
    }

    let mut util_rows = Vec::new();
    for task in tasks {
        for kind in [ClassifierKind::Knn, ClassifierKind::Linear] {
            for m in models {
                for u in utilities
                    .iter()
                    .filter(|u| &u.task == task && u.classifier_kind == kind && &u.model == m)
                {
                    util_rows.push(UtilityRow {
                        task: task.clone(),
                        classifier_kind: kind,
                        model: m.clone(),
                        baseline: u.baseline.clone(),
                        aggregate_mean: u.aggregate_mean,
                        infinite_count: u.infinite_count,
                        points: u.per_n.len(),
                    });
                }
            }
        }
    }

    EvalReport {
        tasks: tasks.to_vec(),
        models: models.to_vec(),
        cells,
        stats: stats_sorted,
        utilities: util_rows,
    }
}

impl EvalReport {
    pub fn cell(&self, task: &str, probe: ClassifierKind, model: &str) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.task == task && c.probe == probe && c.model == model)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["task", "probe", "model", "mean", "std", "cell", "bold", "starred"])?;
        for c in &self.cells {
            w.write_record([
                c.task.as_str(),
                c.probe.as_str(),
                c.model.as_str(),
                &c.mean.to_string(),
                &c.std.to_string(),
                &c.text,
                &c.bold.to_string(),
                &c.starred.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| crate::BenchError::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let mut columns: Vec<(&str, ClassifierKind)> = Vec::new();
        for t in &self.tasks {
            for p in [ClassifierKind::Knn, ClassifierKind::Linear] {
                if self.cells.iter().any(|c| &c.task == t && c.probe == p) {
                    columns.push((t, p));
                }
            }
        }

        let mut md = String::from("# Frozen evaluation (macro-F1, %)\n\n");
        if columns.is_empty() {
            md.push_str("No frozen evaluations.\n");
        } else {
            md.push_str("| Model |");
            for (t, p) in &columns {
                let _ = write!(md, " {t} ({}) |", probe_label(*p));
            }
            md.push_str("\n|---|");
            md.push_str(&"---:|".repeat(columns.len()));
            md.push('\n');
            for m in &self.models {
                let _ = write!(md, "| {m} |");
                for &(t, p) in &columns {
                    match self.cell(t, p, m) {
                        Some(c) => {
                            let text = c.text.replace('*', "\\*");
                            if c.bold {
                                let _ = write!(md, " **{text}** |");
                            } else {
                                let _ = write!(md, " {text} |");
                            }
                        }
                        None => md.push_str(" – |"),
                    }
                }
                md.push('\n');
            }
            md.push_str("\nBold: best mean per column. \\*: best mean and significantly different (Tukey HSD) from the compared models.\n");
        }

        if !self.stats.is_empty() {
            md.push_str("\n## Significance\n\n| Task | Probe | ANOVA F | p | Starred |\n|---|---|---:|---:|---|\n");
            for s in &self.stats {
                let (f, p, starred) = match &s.significance {
                    Some(sig) => {
                        let starred: Vec<&str> = s
                            .models
                            .iter()
                            .zip(&sig.starred)
                            .filter(|(_, &st)| st)
                            .map(|(m, _)| m.as_str())
                            .collect();
                        (
                            format!("{:.3}", sig.anova.f_stat),
                            format!("{:.3e}", sig.anova.p_value),
                            if starred.is_empty() { "none".to_string() } else { starred.join(", ") },
                        )
                    }
                    None => (
                        "–".into(),
                        "–".into(),
                        s.note.clone().unwrap_or_else(|| "none".into()),
                    ),
                };
                let _ = writeln!(md, "| {} | {} | {f} | {p} | {starred} |", s.task, probe_label(s.probe));
            }
        }

        if !self.utilities.is_empty() {
            md.push_str("\n## Utility\n\n| Task | Classifier | Model | Baseline | Mean utility | Infinite points |\n|---|---|---|---|---:|---:|\n");
            for u in &self.utilities {
                let mean = u.aggregate_mean.map_or("–".to_string(), |v| format!("{v:.3}"));
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {} | {mean} | {}/{} |",
                    u.task,
                    probe_label(u.classifier_kind),
                    u.model,
                    u.baseline,
                    u.infinite_count,
                    u.points
                );
            }
        }
        md
    }
}
