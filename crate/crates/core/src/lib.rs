#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod dense;
pub mod eigen;
pub mod energy;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod optimizer;
pub mod runner;

pub use error::{Error, Result};
