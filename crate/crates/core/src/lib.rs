pub mod checkpoint;
pub mod config;
pub mod distill;
pub mod envsim;
pub mod error;
pub mod evalkit;
pub mod nnkit;
pub mod pipeline;
pub mod repr;
pub mod seed;
pub mod teacher;

pub use error::{Error, Result};
