use serde::{Deserialize, Serialize};

use super::distributions::f_sf;
use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    /// Within-group mean square, reused by the post-hoc test.
    pub ms_within: f64,
}

pub(crate) fn check_groups<G: AsRef<[f64]>>(groups: &[G]) -> Result<()> {
    if groups.len() < 2 {
        return Err(BenchError::InvalidInput(format!(
            "ANOVA needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    for (i, g) in groups.iter().enumerate() {
        let g = g.as_ref();
        if g.len() < 2 {
            return Err(BenchError::InvalidInput(format!("group {i} has fewer than 2 values")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(BenchError::InvalidInput(format!("group {i} holds a non-finite value")));
        }
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Classical one-way ANOVA.
pub fn one_way_anova<G: AsRef<[f64]>>(groups: &[G]) -> Result<AnovaResult> {
    check_groups(groups)?;
    let total: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    let grand = groups.iter().flat_map(|g| g.as_ref()).sum::<f64>() / total as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let g = g.as_ref();
        let m = mean(g);
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let scale = groups
        .iter()
        .flat_map(|g| g.as_ref())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    if ssw <= (scale * 1e-12).powi(2) * total as f64 {
        return Err(BenchError::Numerical(
            "degenerate groups: zero within-group variance".into(),
        ));
    }
    let df_between = groups.len() - 1;
    let df_within = total - groups.len();
    let ms_within = ssw / df_within as f64;
    let f_stat = (ssb / df_between as f64) / ms_within;
    Ok(AnovaResult {
        f_stat,
        df_between,
        df_within,
        p_value: f_sf(f_stat, df_between as f64, df_within as f64),
        ms_within,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::distributions::t_two_sided;
    use proptest::prelude::*;

    #[test]
    fn equal_means_give_f_zero() {
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn hand_worked_two_groups() {
        let r = one_way_anova(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(r.f_stat, 8.0);
        assert_eq!((r.df_between, r.df_within), (1, 2));
        assert!((r.p_value - 0.105_572_809_000_084_1).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(one_way_anova(&[vec![1.0, 2.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0], vec![2.0, 3.0]]).is_err());
        assert!(matches!(
            one_way_anova(&[vec![1.0, 1.0], vec![2.0, 2.0]]),
            Err(BenchError::Numerical(_))
        ));
    }

    fn pooled_t(a: &[f64], b: &[f64]) -> (f64, f64) {
        let (ma, mb) = (mean(a), mean(b));
        let ss: f64 = a.iter().map(|v| (v - ma).powi(2)).chain(b.iter().map(|v| (v - mb).powi(2))).sum();
        let df = (a.len() + b.len() - 2) as f64;
        let sp2 = ss / df;
        let t = (ma - mb) / (sp2 * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
        (t, df)
    }

    proptest! {
        #[test]
        fn two_group_f_is_t_squared(
            a in prop::collection::vec(-5.0f64..5.0, 2..8),
            b in prop::collection::vec(-5.0f64..5.0, 2..8),
        ) {
            let Ok(r) = one_way_anova(&[a.clone(), b.clone()]) else { return Ok(()); };
            let (t, df) = pooled_t(&a, &b);
            prop_assert!((r.f_stat - t * t).abs() <= 1e-6 * r.f_stat.max(1.0));
            prop_assert!((r.p_value - t_two_sided(t, df)).abs() < 1e-6);
        }
    }
}
