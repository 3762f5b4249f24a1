#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN-rejecting guards are intentional

pub mod coefficients;
pub mod config;
pub mod distributions;
pub mod error;
pub mod harness;
pub mod quadrature;
pub mod rng;
pub mod sample;
pub mod samplers;
pub mod special;
pub mod statistics;

pub use error::{Error, Result};
