//! Visit-level metrics, bootstrap comparison with paired t-tests, and case
//! study reports.

mod bootstrap;
mod case_study;
mod metrics;
mod stats;

pub use bootstrap::{
    bootstrap_compare, bootstrap_seeds, bootstrap_summary, resample, Comparison, MeanStd, RunSummary,
    DEFAULT_REPEATS,
};
pub use case_study::{case_study_report, CaseStudy, CaseVisit};
pub use metrics::{
    ddi_rate, evaluate_patients, evaluate_split, f1_atc3, interacting_pairs, jaccard_atc3, visit_metrics, Metric,
    SplitMetrics, VisitMetrics,
};
pub use stats::{inc_beta, ln_gamma, mean_sd, paired_t_test, t_two_sided_p, TTest};
