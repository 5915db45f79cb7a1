use serde::{Deserialize, Serialize};

use super::anova::{check_groups, one_way_anova, AnovaResult};
use super::distributions::studentized_range_sf;
use crate::error::{BenchError, Result};
use crate::metrics::ScoreSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub group_a: usize,
    pub group_b: usize,
    /// mean_a − mean_b
    pub mean_diff: f64,
    pub q_stat: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyResult {
    pub alpha: f64,
    pub pairs: Vec<PairComparison>,
}

impl TukeyResult {
    pub fn pair(&self, a: usize, b: usize) -> Option<&PairComparison> {
        self.pairs
            .iter()
            .find(|p| (p.group_a, p.group_b) == (a, b) || (p.group_a, p.group_b) == (b, a))
    }
}

/// All-pairs Tukey HSD (Tukey–Kramer for unequal group sizes).
pub fn tukey_hsd<G: AsRef<[f64]>>(groups: &[G], alpha: f64) -> Result<TukeyResult> {
    let anova = one_way_anova(groups)?;
    Ok(tukey_from_anova(groups, &anova, alpha))
}

fn tukey_from_anova<G: AsRef<[f64]>>(groups: &[G], anova: &AnovaResult, alpha: f64) -> TukeyResult {
    let k = groups.len();
    let means: Vec<f64> = groups
        .iter()
        .map(|g| g.as_ref().iter().sum::<f64>() / g.as_ref().len() as f64)
        .collect();
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            let (na, nb) = (groups[a].as_ref().len() as f64, groups[b].as_ref().len() as f64);
            let mean_diff = means[a] - means[b];
            let se = (anova.ms_within / 2.0 * (1.0 / na + 1.0 / nb)).sqrt();
            let q_stat = mean_diff.abs() / se;
            let p_adjusted = studentized_range_sf(q_stat, k, anova.df_within as f64);
            pairs.push(PairComparison {
                group_a: a,
                group_b: b,
                mean_diff,
                q_stat,
                p_adjusted,
                significant: p_adjusted < alpha,
            });
        }
    }
    TukeyResult { alpha, pairs }
}

/// Which comparisons the best model must win to earn a star.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StarRule {
    /// Significantly different from every other model.
    #[default]
    VsAll,
    /// Significantly different from the second-best model.
    VsRunnerUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub anova: AnovaResult,
    pub tukey: TukeyResult,
    pub best: usize,
    /// One flag per model, in input order.
    pub starred: Vec<bool>,
}

/// Stars the model with the best mean when Tukey separates it from the others.
///
/// Every model must carry the same number of per-seed scores. When all scores
/// are identical across models nothing is starred and no test is run.
pub fn annotate_significance(
    models: &[ScoreSummary],
    alpha: f64,
    rule: StarRule,
) -> Result<Option<Significance>> {
    if models.len() < 2 {
        return Err(BenchError::InvalidInput("significance needs at least 2 models".into()));
    }
    let n = models[0].per_seed.len();
    if models.iter().any(|m| m.per_seed.len() != n) {
        return Err(BenchError::InvalidInput("models differ in seed count".into()));
    }
    let groups: Vec<&[f64]> = models.iter().map(|m| m.per_seed.as_slice()).collect();
    check_groups(&groups)?;
    let first = groups[0][0];
    if groups.iter().all(|g| g.iter().all(|&v| v == first)) {
        return Ok(None);
    }
    let anova = one_way_anova(&groups)?;
    let tukey = tukey_from_anova(&groups, &anova, alpha);

    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&a, &b| models[b].mean.total_cmp(&models[a].mean).then(a.cmp(&b)));
    let best = order[0];
    let rivals: Vec<usize> = match rule {
        StarRule::VsAll => order[1..].to_vec(),
        StarRule::VsRunnerUp => vec![order[1]],
    };
    let wins = models[best].mean > models[order[1]].mean
        && rivals
            .iter()
            .all(|&r| tukey.pair(best, r).is_some_and(|p| p.significant));
    let mut starred = vec![false; models.len()];
    starred[best] = wins;
    Ok(Some(Significance {
        anova,
        tukey,
        best,
        starred,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::aggregate;
    use crate::stats::distributions::t_two_sided;

    #[test]
    fn identical_pair_in_three_groups() {
        let g = [vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let r = tukey_hsd(&g, 0.05).unwrap();
        let p = r.pair(0, 1).unwrap();
        assert_eq!((p.mean_diff, p.q_stat), (0.0, 0.0));
        assert_eq!(p.p_adjusted, 1.0);
    }

    #[test]
    fn well_separated_groups_all_significant() {
        let g = [
            vec![0.0, 0.01, -0.01],
            vec![10.0, 10.01, 9.99],
            vec![20.0, 20.01, 19.99],
        ];
        let r = tukey_hsd(&g, 0.05).unwrap();
        assert!(r.pairs.iter().all(|p| p.significant && p.p_adjusted < 1e-6));
    }

    #[test]
    fn two_groups_match_t_test() {
        let a = [0.71, 0.74, 0.69, 0.73, 0.75];
        let b = [0.70, 0.66, 0.68, 0.72, 0.65];
        let r = tukey_hsd(&[&a[..], &b[..]], 0.05).unwrap();
        let anova = one_way_anova(&[&a[..], &b[..]]).unwrap();
        let t = anova.f_stat.sqrt();
        let p = &r.pairs[0];
        assert!((p.q_stat - std::f64::consts::SQRT_2 * t).abs() < 1e-9);
        assert!((p.p_adjusted - t_two_sided(t, 8.0)).abs() < 1e-3);
    }

    #[test]
    fn group_order_only_permutes_labels() {
        let g = [vec![1.0, 1.4, 0.9], vec![2.0, 2.2, 1.7], vec![1.5, 1.1, 1.3, 1.6]];
        let r1 = tukey_hsd(&g, 0.05).unwrap();
        let r2 = tukey_hsd(&[g[2].clone(), g[0].clone(), g[1].clone()], 0.05).unwrap();
        // old (a, b) -> new indices: 0->1, 1->2, 2->0
        let map = [1usize, 2, 0];
        for p in &r1.pairs {
            let q = r2.pair(map[p.group_a], map[p.group_b]).unwrap();
            assert!((p.p_adjusted - q.p_adjusted).abs() < 1e-12);
            assert!((p.q_stat - q.q_stat).abs() < 1e-12);
        }
    }

    fn summaries(groups: &[Vec<f64>]) -> Vec<ScoreSummary> {
        groups.iter().map(|g| aggregate(g).unwrap()).collect()
    }

    #[test]
    fn dominant_model_is_starred() {
        let s = summaries(&[
            vec![0.0, 0.01, -0.01],
            vec![10.0, 10.01, 9.99],
            vec![20.0, 20.01, 19.99],
        ]);
        let sig = annotate_significance(&s, 0.05, StarRule::VsAll).unwrap().unwrap();
        assert_eq!(sig.starred, vec![false, false, true]);
    }

    #[test]
    fn identical_models_get_no_star() {
        let s = summaries(&[vec![0.5, 0.6, 0.7], vec![0.5, 0.6, 0.7]]);
        let sig = annotate_significance(&s, 0.05, StarRule::VsAll).unwrap().unwrap();
        assert_eq!(sig.starred, vec![false, false]);
        let flat = summaries(&[vec![0.5; 3], vec![0.5; 3]]);
        assert!(annotate_significance(&flat, 0.05, StarRule::VsAll).unwrap().is_none());
    }

    #[test]
    fn single_model_rejected() {
        assert!(annotate_significance(&summaries(&[vec![0.1, 0.2]]), 0.05, StarRule::VsAll).is_err());
    }
}
