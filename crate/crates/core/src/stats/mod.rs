//! Bootstrap summaries, regression fits and classical hypothesis tests.

pub mod bootstrap;
pub mod descriptive;
pub mod hypothesis;
pub mod regression;
pub mod special;

pub use bootstrap::{bootstrap, BootstrapSummary, DEFAULT_ITERATIONS, DEFAULT_SEED};
pub use descriptive::{mean, sample_sd, MeanSd};
pub use hypothesis::{
    anova_oneway, apply_bonferroni, bonferroni, chi_square, chi_square_2xk, levene, pooled_t, welch_t, Df,
    TestResult,
};
pub use regression::{bland_altman, fit_logistic, ols_r2, BlandAltman, LogisticFit, OlsFit};
