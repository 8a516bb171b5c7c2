//! Consistent scoring functions, empirical functionals and deep regression
//! models for quantiles and the composite triplet (lower ES, quantile, upper ES)
//! of positive responses.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data_io;
pub mod error;
pub mod functionals;
pub mod identification;
pub mod network;
pub mod phi_select;
pub mod scores;
pub mod train;

pub use error::{Error, Result};
pub use scores::{CompositeTriplet, PhiIndex, ScoreForm, ScoreSpec};
