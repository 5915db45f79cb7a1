//! Utility score: how many more labels a baseline representation needs to
//! match another representation's score, minus one.
//!
//! Baseline curves are made monotone with a running maximum and inverted by
//! interpolating scores linearly in `ln n` between grid points.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{BenchError, Result};
use crate::fewshot::{ClassifierKind, EfficiencyCurve};

/// A real quantity that may be unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == Extended::Infinite
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => s.serialize_f64(*v),
            Extended::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Extended::Finite(v)),
            Raw::Text(t) if t == "inf" => Ok(Extended::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityPoint {
    pub n: usize,
    pub target_score: f64,
    pub baseline_labels_needed: Extended,
    pub utility: Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityResult {
    pub task: String,
    pub model: String,
    pub baseline: String,
    pub classifier_kind: ClassifierKind,
    pub per_n: Vec<UtilityPoint>,
    /// Mean over finite utilities; `None` when every point is infinite.
    pub aggregate_mean: Option<f64>,
    pub infinite_count: usize,
}

impl UtilityResult {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "target", "needed", "utility"])?;
        for p in &self.per_n {
            w.write_record([
                p.n.to_string(),
                p.target_score.to_string(),
                p.baseline_labels_needed.to_string(),
                p.utility.to_string(),
            ])?;
        }
        w.flush().map_err(|e| BenchError::io("<utility csv>", e))?;
        Ok(())
    }
}

/// Replaces point means with their running maximum over ascending n.
pub fn monotone_envelope(curve: &EfficiencyCurve) -> EfficiencyCurve {
    let mut out = curve.clone();
    let mut best = f64::NEG_INFINITY;
    for p in &mut out.points {
        best = best.max(p.mean);
        p.mean = best;
    }
    out
}

/// Smallest (real-valued) n at which the baseline envelope reaches `target`.
pub fn labels_to_match(baseline: &EfficiencyCurve, target: f64) -> Result<Extended> {
    if !target.is_finite() {
        return Err(BenchError::InvalidInput(format!("non-finite target score {target}")));
    }
    let env = monotone_envelope(baseline);
    let pts = &env.points;
    let first = pts
        .first()
        .ok_or_else(|| BenchError::InvalidInput("baseline curve is empty".into()))?;
    if target <= first.mean {
        return Ok(Extended::Finite(first.n_per_class as f64));
    }
    for w in pts.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        if target <= hi.mean {
            if target <= lo.mean {
                return Ok(Extended::Finite(lo.n_per_class as f64));
            }
            if target == hi.mean {
                return Ok(Extended::Finite(hi.n_per_class as f64));
            }
            let t = (target - lo.mean) / (hi.mean - lo.mean);
            let (a, b) = ((lo.n_per_class as f64).ln(), (hi.n_per_class as f64).ln());
            return Ok(Extended::Finite((a + t * (b - a)).exp()));
        }
    }
    Ok(Extended::Infinite)
}

/// Utility of `model_curve` relative to `baseline_curve` at every model grid point.
pub fn utility_score(model_curve: &EfficiencyCurve, baseline_curve: &EfficiencyCurve) -> Result<UtilityResult> {
    if model_curve.task != baseline_curve.task
        || model_curve.test_fingerprint != baseline_curve.test_fingerprint
    {
        return Err(BenchError::InvalidInput(format!(
            "utility across different tasks or test splits ({} vs {})",
            model_curve.task, baseline_curve.task
        )));
    }
    if model_curve.classifier_kind != baseline_curve.classifier_kind {
        return Err(BenchError::InvalidInput("utility across different classifier kinds".into()));
    }
    let mut per_n = Vec::with_capacity(model_curve.points.len());
    for p in &model_curve.points {
        let needed = labels_to_match(baseline_curve, p.mean)?;
        let utility = match needed {
            Extended::Finite(v) => Extended::Finite(v / p.n_per_class as f64 - 1.0),
            Extended::Infinite => Extended::Infinite,
        };
        per_n.push(UtilityPoint {
            n: p.n_per_class,
            target_score: p.mean,
            baseline_labels_needed: needed,
            utility,
        });
    }
    let finite: Vec<f64> = per_n.iter().filter_map(|p| p.utility.finite()).collect();
    Ok(UtilityResult {
        task: model_curve.task.clone(),
        model: model_curve.model.clone(),
        baseline: baseline_curve.model.clone(),
        classifier_kind: model_curve.classifier_kind,
        aggregate_mean: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        infinite_count: per_n.len() - finite.len(),
        per_n,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::fewshot::CurvePoint;
    use proptest::prelude::*;

    pub(crate) fn curve(model: &str, pts: &[(usize, f64)]) -> EfficiencyCurve {
        EfficiencyCurve {
            task: "t".into(),
            model: model.into(),
            classifier_kind: ClassifierKind::Knn,
            test_fingerprint: "fp".into(),
            points: pts
                .iter()
                .map(|&(n, mean)| CurvePoint {
                    n_per_class: n,
                    effective_n: n,
                    mean,
                    standard_error: 0.0,
                    repeats: 2,
                    scores: vec![mean, mean],
                    k_used: None,
                })
                .collect(),
        }
    }

    fn means(c: &EfficiencyCurve) -> Vec<f64> {
        c.points.iter().map(|p| p.mean).collect()
    }

    #[test]
    fn envelope_cases() {
        let c = curve("m", &[(1, 0.5), (2, 0.4), (5, 0.6)]);
        assert_eq!(means(&monotone_envelope(&c)), vec![0.5, 0.5, 0.6]);
        let up = curve("m", &[(1, 0.1), (2, 0.4), (5, 0.6)]);
        assert_eq!(monotone_envelope(&up), up);
        let flat = curve("m", &[(1, 0.3), (2, 0.3)]);
        assert_eq!(monotone_envelope(&flat), flat);
    }

    #[test]
    fn inversion_cases() {
        let b = curve("b", &[(10, 0.7), (30, 0.8)]);
        assert_eq!(labels_to_match(&b, 0.8).unwrap(), Extended::Finite(30.0));
        assert_eq!(labels_to_match(&b, 0.7).unwrap(), Extended::Finite(10.0));
        assert_eq!(labels_to_match(&b, 0.1).unwrap(), Extended::Finite(10.0));
        assert_eq!(labels_to_match(&b, 0.9).unwrap(), Extended::Infinite);
        // midpoint in score is the geometric mean in n
        let Extended::Finite(mid) = labels_to_match(&b, 0.75).unwrap() else { panic!() };
        assert!((mid - 300f64.sqrt()).abs() < 1e-9);
        assert!(labels_to_match(&b, f64::NAN).is_err());
    }

    #[test]
    fn hand_worked_utility() {
        let m = curve("m", &[(10, 0.8)]);
        let b = curve("b", &[(10, 0.7), (30, 0.8)]);
        let u = utility_score(&m, &b).unwrap();
        assert_eq!(u.per_n[0].baseline_labels_needed, Extended::Finite(30.0));
        assert!((u.per_n[0].utility.finite().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_curves_have_zero_utility() {
        let c = curve("m", &[(1, 0.3), (2, 0.45), (5, 0.6), (10, 0.62)]);
        let u = utility_score(&c, &c).unwrap();
        assert!(u.per_n.iter().all(|p| p.utility == Extended::Finite(0.0)));
        assert_eq!(u.aggregate_mean, Some(0.0));
    }

    #[test]
    fn unreachable_target_is_infinite_and_excluded() {
        let m = curve("m", &[(1, 0.5), (2, 0.95)]);
        let b = curve("b", &[(1, 0.4), (2, 0.5), (5, 0.6)]);
        let u = utility_score(&m, &b).unwrap();
        assert_eq!(u.per_n[1].utility, Extended::Infinite);
        assert_eq!(u.infinite_count, 1);
        assert!((u.aggregate_mean.unwrap() - 1.0).abs() < 1e-12);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("2,0.95,inf,inf\n"));
    }

    #[test]
    fn mismatched_tasks_rejected() {
        let m = curve("m", &[(1, 0.5)]);
        let mut b = curve("b", &[(1, 0.5)]);
        b.test_fingerprint = "other".into();
        assert!(utility_score(&m, &b).is_err());
    }

    #[test]
    fn extended_serde() {
        let v = serde_json::to_string(&[Extended::Finite(1.5), Extended::Infinite]).unwrap();
        assert_eq!(v, r#"[1.5,"inf"]"#);
        let back: Vec<Extended> = serde_json::from_str(&v).unwrap();
        assert_eq!(back, vec![Extended::Finite(1.5), Extended::Infinite]);
    }

    proptest! {
        #[test]
        fn log_linear_shift_gives_alpha_minus_one(
            a in 0.1f64..0.3, slope in 0.01f64..0.1, alpha in 1.5f64..4.0
        ) {
            let grid = [1usize, 2, 5, 10, 20, 50, 100];
            let f = |n: f64| a + slope * n.ln();
            let base = curve("b", &grid.iter().map(|&n| (n, f(n as f64))).collect::<Vec<_>>());
            // model with n labels matches baseline with alpha·n labels
            let model = curve("m", &grid.iter().map(|&n| (n, f(alpha * n as f64))).collect::<Vec<_>>());
            let u = utility_score(&model, &base).unwrap();
            for p in &u.per_n {
                if let Some(v) = p.utility.finite() {
                    prop_assert!((v - (alpha - 1.0)).abs() <= 0.02 * (alpha - 1.0));
                }
            }
        }

        #[test]
        fn raising_a_score_never_lowers_utility(
            base in prop::collection::vec(0.0f64..1.0, 4), s in 0.0f64..1.0, bump in 0.0f64..0.3
        ) {
            let b = curve("b", &[(1, base[0]), (2, base[1]), (5, base[2]), (10, base[3])]);
            let lo = utility_score(&curve("m", &[(2, s)]), &b).unwrap().per_n[0].utility;
            let hi = utility_score(&curve("m", &[(2, s + bump)]), &b).unwrap().per_n[0].utility;
            match (lo, hi) {
                (Extended::Finite(x), Extended::Finite(y)) => prop_assert!(y >= x - 1e-12),
                (Extended::Infinite, Extended::Finite(_)) => prop_assert!(false),
                _ => {}
            }
        }
    }
}
