//! Proximal policy optimization over EMT episodes.

mod config;
mod train;
mod update;

pub use config::{PpoConfig, TrainingConfig};
pub use train::{
    checkpoint_path, initial_policy, run_episode, train, train_from, write_training_log, EpisodeFailure,
    EpisodeSummary, TrainLogRow, TrainOptions, TrainOutcome,
};
pub use update::{
    compute_advantages, evaluate_loss, gae, ppo_loss, ppo_update, LossStats, LossTerms, Transition, UpdateStats,
};
