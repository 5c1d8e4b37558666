// Negated comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_loop;
pub mod dataset;
pub mod eval;
pub mod driver;
pub mod error;
pub mod io;
pub mod mlp;
pub mod pfc;
pub mod pipeline;
pub mod road;
pub mod vehicle;

pub use error::{Error, Result};
