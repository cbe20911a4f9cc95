//! Joint double maximum test for one-way layouts.
//!
//! Three rank scores of the pooled response (mid-ranks, Ansari-Bradley,
//! Savage) are each fitted with a cell-means model; contrasts of the group
//! means from all three models are stacked, their joint covariance is
//! estimated from the stacked estimating functions, and single-step max-T
//! adjusted p-values and simultaneous confidence limits follow from the
//! resulting multivariate t distribution.
//!
//! The crate also carries the reference competitors (Kruskal-Wallis and a
//! relative-effects multiple contrast test) and a Fleishman-based Monte
//! Carlo harness for size and power.

pub mod classical;
pub mod contrasts;
pub mod data;
pub mod dist;
pub mod error;
pub mod marginal;
pub mod maxt;
pub mod mvt;
pub mod scores;
pub mod sim;

pub use classical::{kw_test, relative_effects_mctp, KwResult, PermutationPlan, RelEffectResult};
pub use contrasts::{dunnett_contrasts, grand_mean_contrasts, ContrastKind, ContrastMatrix};
pub use data::{load_dataset, summarize, Dataset, GroupSummary};
pub use error::{Error, Result};
pub use marginal::{fit_marginal, stacked_covariance, DfPolicy, EffectKind, MarginalFit, StackedInference};
pub use maxt::{
    adjusted_p_values, export_ci_plotdata, joint_double_max_test, joint_double_max_test_with, simultaneous_ci,
    write_intervals_csv, Alternative, Interval, JointOptions, TestReport,
};
pub use mvt::{equicoordinate_quantile, mvt_probability, MvtOptions, MvtSpec, ProbResult, Tail};
pub use scores::{ansari_scores, midranks, savage_scores, ScoreSet};
pub use sim::{
    fleishman_coefficients, run_power_study, Distribution, FleishmanCoeffs, GlobalTest, PowerReport, ScenarioConfig,
};
