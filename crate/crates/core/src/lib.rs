pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod field;
pub mod glue;
pub mod mixing_blocks;
pub mod smooth;
pub mod solver;

pub use error::{LabError, Result};
pub use field::ScalarField2D;
