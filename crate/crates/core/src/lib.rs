#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod cli;
pub mod cmdp;
pub mod envs;
pub mod error;
pub mod nn;
pub mod riskmodel;
pub mod shaping;
pub mod tensorfile;
pub mod trainer;

pub use error::{Error, Result};
