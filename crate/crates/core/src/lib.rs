#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod groundstate;
pub mod model;
pub mod operators;

pub use error::{Error, Result};
