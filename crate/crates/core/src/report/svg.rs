//! Self-contained SVG figures: label-efficiency curves on a log-x axis and
//! utility bar charts. Every figure embeds its data as XML comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{BenchError, Result};
use crate::fewshot::{ClassifierKind, EfficiencyCurve};
use crate::utility::{Extended, UtilityResult};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Text safe inside `<!-- -->`.
fn comment_safe(s: &str) -> String {
    let mut t = s.replace("--", "- -");
    if t.ends_with('-') {
        t.push(' ');
    }
    t
}

fn header(title: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    )
}

fn plot_right() -> f64 {
    WIDTH - RIGHT
}

fn plot_bottom() -> f64 {
    HEIGHT - BOTTOM
}

fn legend(svg: &mut String, entries: &[(String, &str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = plot_right() + 12.0;
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"12\" height=\"8\" fill=\"{color}\"/><text x=\"{:.1}\" y=\"{y:.1}\">{}</text>",
            y - 8.0,
            x + 16.0,
            esc(name)
        );
    }
}

fn axes(svg: &mut String, x_label: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        "<g class=\"axes\" stroke=\"black\" fill=\"none\"><line x1=\"{LEFT}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\"/><line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{b}\"/></g>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"15\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {:.1})\">{}</text>",
        (LEFT + plot_right()) / 2.0,
        HEIGHT - 12.0,
        esc(x_label),
        (TOP + plot_bottom()) / 2.0,
        (TOP + plot_bottom()) / 2.0,
        esc(y_label),
        b = plot_bottom(),
        r = plot_right(),
    );
}

/// Score-vs-n figure for curves sharing a task and classifier kind.
pub fn curves_svg(task: &str, kind: ClassifierKind, curves: &[&EfficiencyCurve]) -> String {
    let ns: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.n_per_class as f64))
        .collect();
    let (mut lo, mut hi) = ns
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &n| (a.min(n), b.max(n)));
    if !lo.is_finite() {
        (lo, hi) = (1.0, 10.0);
    }
    if hi <= lo {
        hi = lo * 10.0;
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let x = |n: f64| LEFT + (n.ln() - llo) / (lhi - llo) * (plot_right() - LEFT);
    let y = |s: f64| plot_bottom() - s.clamp(0.0, 1.0) * (plot_bottom() - TOP);

    let mut svg = header(&format!("{task}: {} label efficiency", kind.as_str()));
    axes(&mut svg, "labelled samples per class (log scale)", "macro-F1");
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{tick:.2}</text>",
            LEFT - 4.0,
            y(tick) + 4.0
        );
    }
    let mut ticks: Vec<usize> = curves.iter().flat_map(|c| c.grid()).collect();
    ticks.sort_unstable();
    ticks.dedup();
    for t in ticks {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{t}</text>",
            x(t as f64),
            plot_bottom() + 14.0
        );
    }

    let mut entries = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        entries.push((c.model.clone(), color));
        let _ = writeln!(svg, "<!-- data model={} test={} -->", comment_safe(&c.model), c.test_fingerprint);
        for p in &c.points {
            let _ = writeln!(
                svg,
                "<!-- n={} effective_n={} mean={} stderr={} repeats={} -->",
                p.n_per_class, p.effective_n, p.mean, p.standard_error, p.repeats
            );
        }
        let _ = writeln!(svg, "<g class=\"curve\" data-model=\"{}\">", esc(&c.model));
        if c.points.len() > 1 {
            let mut band = String::new();
            for p in &c.points {
                let _ = write!(band, "{:.2},{:.2} ", x(p.n_per_class as f64), y(p.mean + p.standard_error));
            }
            for p in c.points.iter().rev() {
                let _ = write!(band, "{:.2},{:.2} ", x(p.n_per_class as f64), y(p.mean - p.standard_error));
            }
            let _ = writeln!(
                svg,
                "<polygon class=\"band\" points=\"{}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>",
                band.trim_end()
            );
            let line: Vec<String> = c
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", x(p.n_per_class as f64), y(p.mean)))
                .collect();
            let _ = writeln!(
                svg,
                "<polyline class=\"line\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                line.join(" ")
            );
        }
        for p in &c.points {
            let _ = writeln!(
                svg,
                "<circle class=\"marker\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                x(p.n_per_class as f64),
                y(p.mean)
            );
        }
        svg.push_str("</g>\n");
    }
    legend(&mut svg, &entries);
    svg.push_str("</svg>\n");
    svg
}

/// Grouped utility bars, one group per grid value. Infinite utilities are
/// drawn as hatched bars running to the top of the plot with a cap line.
pub fn utility_svg(task: &str, kind: ClassifierKind, results: &[&UtilityResult]) -> String {
    let finite: Vec<f64> = results
        .iter()
        .flat_map(|r| r.per_n.iter().filter_map(|p| p.utility.finite()))
        .collect();
    let vmax = finite.iter().copied().fold(1.0_f64, f64::max) * 1.15;
    let vmin = finite.iter().copied().fold(0.0_f64, f64::min).min(-1.0);
    let y = |v: f64| plot_bottom() - (v - vmin) / (vmax - vmin) * (plot_bottom() - TOP);

    let mut ns: Vec<usize> = results.iter().flat_map(|r| r.per_n.iter().map(|p| p.n)).collect();
    ns.sort_unstable();
    ns.dedup();

    let baseline = results.first().map(|r| r.baseline.as_str()).unwrap_or("");
    let mut svg = header(&format!("{task}: {} utility vs {baseline}", kind.as_str()));
    svg.push_str(
        "<defs><pattern id=\"hatch\" patternUnits=\"userSpaceOnUse\" width=\"6\" height=\"6\" patternTransform=\"rotate(45)\">\
         <line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"black\" stroke-width=\"2\"/></pattern></defs>\n",
    );
    axes(&mut svg, "labelled samples per class", "utility");
    let zero = y(0.0);
    let _ = writeln!(
        svg,
        "<line class=\"zero\" x1=\"{LEFT}\" y1=\"{zero:.2}\" x2=\"{:.1}\" y2=\"{zero:.2}\" stroke=\"gray\" stroke-dasharray=\"4 2\"/>",
        plot_right()
    );
    for v in [vmin, 0.0, vmax] {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>",
            LEFT - 4.0,
            y(v) + 4.0
        );
    }

    let group_w = (plot_right() - LEFT) / ns.len().max(1) as f64;
    let bar_w = group_w * 0.8 / results.len().max(1) as f64;
    for (gi, n) in ns.iter().enumerate() {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{n}</text>",
            LEFT + group_w * (gi as f64 + 0.5),
            plot_bottom() + 14.0
        );
    }

    let mut entries = Vec::new();
    for (ri, r) in results.iter().enumerate() {
        let color = PALETTE[ri % PALETTE.len()];
        entries.push((r.model.clone(), color));
        let _ = writeln!(svg, "<!-- data model={} baseline={} -->", comment_safe(&r.model), comment_safe(&r.baseline));
        let _ = writeln!(svg, "<g class=\"utility\" data-model=\"{}\">", esc(&r.model));
        for p in &r.per_n {
            let _ = writeln!(
                svg,
                "<!-- n={} target={} needed={} utility={} -->",
                p.n, p.target_score, p.baseline_labels_needed, p.utility
            );
            let gi = ns.iter().position(|&n| n == p.n).unwrap_or(0);
            let bx = LEFT + group_w * (gi as f64 + 0.1) + bar_w * ri as f64;
            match p.utility {
                Extended::Finite(v) => {
                    let (top, bottom) = if v >= 0.0 { (y(v), zero) } else { (zero, y(v)) };
                    let _ = writeln!(
                        svg,
                        "<rect class=\"bar\" x=\"{bx:.2}\" y=\"{top:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"{color}\"/>",
                        bottom - top
                    );
                }
                Extended::Infinite => {
                    let _ = writeln!(
                        svg,
                        "<rect class=\"bar infinite\" x=\"{bx:.2}\" y=\"{TOP:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"url(#hatch)\" stroke=\"{color}\"/>\n\
                         <line class=\"cap\" x1=\"{bx:.2}\" y1=\"{TOP:.2}\" x2=\"{:.2}\" y2=\"{TOP:.2}\" stroke=\"{color}\" stroke-width=\"3\"/>\n\
                         <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">∞</text>",
                        zero - TOP,
                        bx + bar_w,
                        bx + bar_w / 2.0,
                        TOP - 4.0
                    );
                }
            }
        }
        svg.push_str("</g>\n");
    }
    legend(&mut svg, &entries);
    svg.push_str("</svg>\n");
    svg
}

fn write(path: PathBuf, body: &str) -> Result<PathBuf> {
    std::fs::write(&path, body).map_err(|e| BenchError::io(&path, e))?;
    Ok(path)
}

/// Writes one curve figure and one utility figure per (task, classifier kind).
/// Returns the written paths in a stable order.
pub fn emit_plots(
    curves: &[EfficiencyCurve],
    utilities: &[UtilityResult],
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut written = Vec::new();

    let mut by_key: BTreeMap<(&str, ClassifierKind), Vec<&EfficiencyCurve>> = BTreeMap::new();
    for c in curves {
        by_key.entry((&c.task, c.classifier_kind)).or_default().push(c);
    }
    for ((task, kind), group) in by_key {
        let path = dir.join(format!("{task}_{}_curves.svg", kind.as_str()));
        written.push(write(path, &curves_svg(task, kind, &group))?);
    }

    let mut by_key: BTreeMap<(&str, ClassifierKind), Vec<&UtilityResult>> = BTreeMap::new();
    for u in utilities {
        by_key.entry((&u.task, u.classifier_kind)).or_default().push(u);
    }
    for ((task, kind), group) in by_key {
        let path = dir.join(format!("{task}_{}_utility.svg", kind.as_str()));
        written.push(write(path, &utility_svg(task, kind, &group))?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::tests::curve;
    use crate::utility::utility_score;

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed SVG")
    }

    fn count(doc: &roxmltree::Document, tag: &str, class: &str) -> usize {
        doc.descendants()
            .filter(|n| n.has_tag_name(tag) && n.attribute("class") == Some(class))
            .count()
    }

    #[test]
    fn single_point_curve_has_marker_but_no_band() {
        let c = curve("m", &[(5, 0.6)]);
        let svg = curves_svg("t", ClassifierKind::Knn, &[&c]);
        let doc = parse(&svg);
        assert_eq!(count(&doc, "circle", "marker"), 1);
        assert_eq!(count(&doc, "polygon", "band"), 0);
    }

    #[test]
    fn multi_point_curves_have_bands_and_data_comments() {
        let a = curve("a<&>", &[(1, 0.3), (2, 0.5), (5, 0.7)]);
        let b = curve("b--x", &[(1, 0.2), (2, 0.4), (5, 0.6)]);
        let svg = curves_svg("t", ClassifierKind::Linear, &[&a, &b]);
        let doc = parse(&svg);
        assert_eq!(count(&doc, "polygon", "band"), 2);
        assert_eq!(count(&doc, "circle", "marker"), 6);
        let comments: Vec<&str> = doc
            .descendants()
            .filter(|n| n.is_comment())
            .filter_map(|n| n.text())
            .collect();
        assert!(comments.iter().any(|c| c.contains("n=2 effective_n=2 mean=0.5")));
    }

    #[test]
    fn infinite_utility_is_hatched_and_capped() {
        let m = curve("m", &[(1, 0.5), (2, 0.95)]);
        let b = curve("b", &[(1, 0.4), (2, 0.5), (5, 0.6)]);
        let u = utility_score(&m, &b).unwrap();
        let svg = utility_svg("t", ClassifierKind::Knn, &[&u]);
        let doc = parse(&svg);
        let inf: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("bar infinite"))
            .collect();
        assert_eq!(inf.len(), 1);
        assert_eq!(inf[0].attribute("fill"), Some("url(#hatch)"));
        assert_eq!(count(&doc, "line", "cap"), 1);
        assert_eq!(count(&doc, "rect", "bar"), 1);
        assert!(doc.descendants().any(|n| n.attribute("id") == Some("hatch")));
    }

    #[test]
    fn emit_writes_one_file_per_task_and_kind() {
        let dir = tempfile::tempdir().unwrap();
        let a = curve("a", &[(1, 0.3), (2, 0.5)]);
        let b = curve("b", &[(1, 0.2), (2, 0.4)]);
        let u = utility_score(&a, &b).unwrap();
        let paths = emit_plots(&[a, b], &[u], dir.path()).unwrap();
        let names: Vec<String> = paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["t_knn_curves.svg", "t_knn_utility.svg"]);
        for p in paths {
            parse(&std::fs::read_to_string(p).unwrap());
        }
    }
}
