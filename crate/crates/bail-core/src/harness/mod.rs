//! Experiment harness: policy evaluation, end-to-end pipelines, scoring,
//! cross-run comparison, and the theorem verification report.

mod compare;
mod eval;
mod pipeline;
mod verify;

pub use compare::{compare_runs, compare_scores, Comparison, ComparisonRow};
pub use eval::{evaluate_policy, EvalRecord};
pub use pipeline::{
    parse_policy_base, run_pipeline, run_seed_with_returns, Algorithm, BatchSource, FinalScore,
    ReturnsMode, RunConfig, RunSummary, SeedReport, SeedRunOutcome,
};
pub use verify::{pearson, verify_theorems, CheckOutcome, VerifyConfig, VerifyReport};
