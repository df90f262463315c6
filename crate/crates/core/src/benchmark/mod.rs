//! Base functions, rotations, shifts and the generated multitask problem sets.

pub mod functions;
pub mod problem;
pub mod transform;

pub use functions::{BasicFunction, SCHWEFEL_OPTIMUM};
pub use problem::{
    enumerate_combinations, generate_awcci, generate_instance, read_dataset, write_dataset,
    MtoInstance, SubTask,
};
pub use transform::{decode, encode, make_rotation, make_shift, orthogonality_error, ShiftLevel};
