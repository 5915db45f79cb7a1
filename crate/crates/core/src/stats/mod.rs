//! One-way ANOVA and Tukey HSD with native distribution numerics.

mod anova;
pub mod distributions;
pub mod quadrature;
pub mod special;
mod tukey;

pub use anova::{one_way_anova, AnovaResult};
pub use tukey::{annotate_significance, tukey_hsd, PairComparison, StarRule, Significance, TukeyResult};
