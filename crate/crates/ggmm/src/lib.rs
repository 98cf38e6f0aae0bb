//! Sparse Gaussian graphical mixture models.
//!
//! Heterogeneous zero-mean data are modeled as a K-component Gaussian mixture
//! whose components differ in their precision matrices; the nonzero
//! off-diagonal precision entries of each component form its
//! conditional-independence network. Estimation is a penalized EM algorithm
//! whose M-step solves one L1-penalized covariance-selection problem per
//! component, with the penalty rescaled by that component's share of the data.

// negated float comparisons like !(v > 0.0) are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// matrix kernels index several arrays with one loop variable
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod evalmetrics;
pub mod glasso;
pub mod io;
pub mod mixture;
pub mod modelsel;
pub mod seedmix;
pub mod simulate;
pub mod symlin;

pub use error::{Error, Result};
