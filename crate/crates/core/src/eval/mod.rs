//! Subject-grouped cross-validation, hyperparameter search, metrics and the
//! threshold sweep.

pub mod experiment;
pub mod folds;
pub mod grid;
pub mod metrics;

pub use experiment::{
    plan_cv, run_experiment, run_single_modality, sweep_threshold, CvPlan, DecisionRecord,
    ExperimentConfig, ExperimentOutcome, FoldPlan, Modality, MultimodalSet, SweepOutcome, SweepRow,
    zoning_set, DEFAULT_INNER_K, DEFAULT_K,
};
pub use folds::{assign_groups, stratified_group_kfold, FoldAssignment};
pub use grid::{grid_search, GridResult};
pub use metrics::{metrics_from_confusion, Confusion, EvalReport, Metrics, ScopeReport};
