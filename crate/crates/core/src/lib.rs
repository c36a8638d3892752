//! Extreme value analysis of covariate-dependent and multivariate tails.

// `!(x > a)` comparisons deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod condex;
pub mod dependence;
pub mod error;
pub mod gpd;
pub mod marginal;
pub mod margins;
pub mod minproj;
pub mod numeric;
pub mod optim;
pub mod reference;
pub mod resampling;
pub mod scoring;
pub mod selection;
pub mod series;
pub mod synth;
pub mod threshold_select;
pub mod workflow;

pub use error::{Error, Result};
