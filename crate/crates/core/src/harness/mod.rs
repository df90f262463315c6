//! Evaluation, ablations, metrics and significance testing.

mod ablation;
mod attention;
mod compare;
mod evaluate;
mod instances;
mod metrics;
mod wilcoxon;

pub use ablation::{AblationVariant, Controller, ControllerOutput};
pub use attention::{argmax_source_rate, collect_attention, write_attention, ATTENTION_HEADER};
pub use compare::{compare, Comparison, InstanceComparison, Verdict, SIGNIFICANCE};
pub use evaluate::{
    evaluate, evaluate_run, read_results, run_seed, write_convergence, write_results, EvalSettings, ResultRecord,
    RunOutput, StepRecord, CONVERGENCE_HEADER, RESULTS_HEADER,
};
pub use instances::{duplicate_pair_instance, sample_subset, split_train_test};
pub use metrics::{kt_success_ratio, normalized_perf, perf_ratio, EvaluationResult};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult, MIN_NONZERO_PAIRS};
