//! Multi-population differential evolution with learned inter-task
//! knowledge transfer.
//!
//! The crate is organized bottom-up:
//!
//! * [`nn`]: matrices, a reverse-mode tape, layers and Adam.
//! * [`benchmark`]: the seven base functions, rotations, shifts and the
//!   generated multitask problem sets.
//! * [`engine`]: K parallel DE populations, transfer operators, state
//!   features and rewards.
//! * [`policy`]: the routing / knowledge-control / strategy network.
//! * [`ppo`]: rollout collection and clipped-surrogate training.
//! * [`harness`]: evaluation, ablations, metrics and significance tests.

pub mod benchmark;
pub mod engine;
mod error;
pub mod harness;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod seeds;

pub use error::{Error, Result};
