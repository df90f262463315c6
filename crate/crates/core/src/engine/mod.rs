//! The low-level multitask optimizer: one DE population per sub-task,
//! explicit knowledge transfer driven by an [`ActionBundle`] each
//! generation, pairwise selection, state features and rewards.

pub mod action;
pub mod features;
pub mod operators;
pub mod population;
pub mod state;
pub mod trace;

pub use action::{ActionBundle, ActionMeans, TransferOperator};
pub use features::{StateFeatures, NUM_FEATURES};
pub use population::Population;
pub use state::{
    compute_reward, reward_terms, task_stream_seed, EmtState, EngineConfig, StepOutcome,
    TransferCount, TransferLedger,
};
pub use trace::{trace_rows, write_trace, TraceRow};
