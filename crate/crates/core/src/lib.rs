#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod codec;
pub mod dist;
pub mod error;
pub mod freezing;
pub mod io;
pub mod polarization;
pub mod simulator;

pub use error::{Error, Result};
