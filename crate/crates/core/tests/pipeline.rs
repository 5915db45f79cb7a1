use std::path::Path;
use std::process::Command;

use reprbench::data::{load_embeddings, SplitTag};
use reprbench::fewshot::ClassifierKind;
use reprbench::probe::ProbeModel;
use reprbench::report::{self, OutputLayout, RunConfig};
use reprbench::split::SplitAssignment;
use reprbench::synthetic::{write_demo, DemoSpec};

fn small_demo(dir: &Path) -> std::path::PathBuf {
    let spec = DemoSpec {
        tasks: 1,
        per_class: 30,
        repeats: 4,
        grid: vec![1, 2, 5],
        ..DemoSpec::default()
    };
    write_demo(dir, &spec).unwrap()
}

fn edit_config(path: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reprbench"))
}

#[test]
fn single_model_knn_only_gives_one_cell() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_demo(dir.path());
    edit_config(&path, |v| {
        v["models"] = serde_json::json!(["strong"]);
        v["tasks"][0]["embeddings"].as_object_mut().unwrap().remove("weak");
        v["evaluations"] = serde_json::json!(["knn_frozen"]);
        v.as_object_mut().unwrap().remove("baseline_model");
    });
    let cfg = RunConfig::load(&path).unwrap();
    let out = report::run(&cfg, 0).unwrap();
    assert_eq!(out.report.cells.len(), 1);
    assert_eq!(out.report.cells[0].probe, ClassifierKind::Knn);
    assert!(out.report.cells[0].bold);
    assert!(!out.report.cells[0].starred);
    assert!(out.plots.is_empty());
}

#[test]
fn rerun_gives_identical_report_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_demo(dir.path());
    let cfg = RunConfig::load(&path).unwrap();
    let layout = OutputLayout::new(&cfg.output_dir);
    report::run(&cfg, 2).unwrap();
    let first: Vec<Vec<u8>> = [layout.report_json(), layout.report_csv(), layout.report_md()]
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect();
    let svg_first = std::fs::read(layout.plots_dir().join("task0_knn_curves.svg")).unwrap();
    report::run(&cfg, 1).unwrap();
    let second: Vec<Vec<u8>> = [layout.report_json(), layout.report_csv(), layout.report_md()]
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect();
    assert_eq!(first, second);
    assert_eq!(svg_first, std::fs::read(layout.plots_dir().join("task0_knn_curves.svg")).unwrap());
}

#[test]
fn report_csv_numbers_match_frozen_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(small_demo(dir.path())).unwrap();
    let out = report::run(&cfg, 0).unwrap();
    let csv = std::fs::read_to_string(OutputLayout::new(&cfg.output_dir).report_csv()).unwrap();
    for (line, f) in csv.lines().skip(1).zip(&out.evaluations.frozen) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[3].parse::<f64>().unwrap(), f.summary.mean);
        assert_eq!(fields[4].parse::<f64>().unwrap(), f.summary.std);
        let mean_pct: f64 = fields[5].split(' ').next().unwrap().parse().unwrap();
        assert!((mean_pct - 100.0 * f.summary.mean).abs() <= 0.05 + 1e-9);
    }
}

#[test]
fn provided_split_file_is_used_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_demo(dir.path());
    let cfg = RunConfig::load(&path).unwrap();
    report::run(&cfg, 0).unwrap();
    let generated = OutputLayout::new(&cfg.output_dir).split_csv("task0");
    let mut split = SplitAssignment::load(&generated).unwrap();
    // move one whole patient from train to test
    let moved: Vec<String> = split
        .iter()
        .filter(|(id, tag)| *tag == SplitTag::Train && id.as_str() <= "s00001")
        .map(|(id, _)| id.clone())
        .collect();
    let mut map: std::collections::BTreeMap<String, SplitTag> = split.iter().map(|(k, v)| (k.clone(), v)).collect();
    for id in &moved {
        map.insert(id.clone(), SplitTag::Test);
    }
    split = SplitAssignment::from_map(map);
    let custom = dir.path().join("custom_split.csv");
    split.save(&custom).unwrap();
    edit_config(&path, |v| {
        v["tasks"][0]["split"] = serde_json::json!("custom_split.csv");
        v["output_dir"] = serde_json::json!("out2");
    });
    let cfg = RunConfig::load(&path).unwrap();
    report::run(&cfg, 0).unwrap();
    let written = SplitAssignment::load(OutputLayout::new(&cfg.output_dir).split_csv("task0")).unwrap();
    assert_eq!(written.test_fingerprint(), split.test_fingerprint());
}

#[test]
fn saved_probes_reload() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_demo(dir.path());
    edit_config(&path, |v| v["save_probes"] = serde_json::json!(true));
    let cfg = RunConfig::load(&path).unwrap();
    let out = report::run(&cfg, 0).unwrap();
    let layout = OutputLayout::new(&cfg.output_dir);
    assert_eq!(out.evaluations.probes.len(), 2 * cfg.seeds.len());
    let (task, model, seed, probe) = &out.evaluations.probes[0];
    let set = load_embeddings(layout.probe_file(task, model, *seed)).unwrap();
    let classes: Vec<String> = (0..4).map(reprbench::synthetic::class_name).collect();
    let back = ProbeModel::from_embedding_set(&set, &classes).unwrap();
    assert_eq!(back.class_index, probe.class_index);
    for (a, b) in back.weights.as_slice().iter().zip(probe.weights.as_slice()) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
    }
}

#[test]
fn plots_are_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(small_demo(dir.path())).unwrap();
    let out = report::run(&cfg, 0).unwrap();
    assert_eq!(out.plots.len(), 4);
    for p in &out.plots {
        let text = std::fs::read_to_string(p).unwrap();
        roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn cli_staged_commands_match_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_demo(dir.path());
    let run = bin()
        .args(["run", "--config"])
        .arg(&path)
        .args(["--jobs", "2"])
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("| strong |"));

    let staged = dir.path().join("staged");
    for stage in ["split", "eval", "fewshot", "utility", "stats", "report"] {
        let o = bin()
            .args([stage, "--config"])
            .arg(&path)
            .arg("--out")
            .arg(&staged)
            .output()
            .unwrap();
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["report.json", "report.csv", "report.md"] {
        assert_eq!(
            std::fs::read(dir.path().join("out").join(f)).unwrap(),
            std::fs::read(staged.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn cli_seed_base_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_demo(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, base) in [(&a, "0"), (&b, "100")] {
        let o = bin()
            .args(["eval", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(out)
            .args(["--seed-base", base])
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    assert_ne!(
        std::fs::read(a.join("results/frozen.json")).unwrap(),
        std::fs::read(b.join("results/frozen.json")).unwrap()
    );
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"tasks": [], "models": [], "seeds": []}"#).unwrap();
    let o = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("tasks") && err.contains("models") && err.contains("seeds"), "{err}");

    let o = bin().args(["run", "--config"]).arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(3));

    let path = small_demo(dir.path());
    std::fs::remove_file(dir.path().join("task0_weak.reprb")).unwrap();
    let o = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(3));

    let o = bin().args(["stats", "--config"]).arg(&path).arg("--out").arg(dir.path().join("empty")).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}
