#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chernoff;
pub mod cli;
pub mod config;
pub mod error;
pub mod keyrate;
pub mod matrix;
pub mod prep;
pub mod quadrature;
pub mod trojan;

pub use error::{Error, Result};
