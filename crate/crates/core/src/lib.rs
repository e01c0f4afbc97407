//! Mirror-descent temporal-difference learning with sparse value-function
//! approximation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basis;
pub mod envs;
pub mod error;
pub mod geometry;
pub mod harness;
mod kv;
pub mod learners;

pub use error::{Error, Result};
