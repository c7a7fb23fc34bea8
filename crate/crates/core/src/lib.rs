//! Penalty selection for sparse Gaussian graphical models.
//!
//! The crate fits ℓ1-regularised precision matrices along a grid of
//! penalties ([`estimator`]), summarises each estimated graph
//! ([`netstats`], [`agnes`]) and picks a penalty with one of several
//! criteria ([`selector`]). [`simgen`] generates clustered networks with
//! matching precision matrices and Gaussian samples, and [`evalharness`]
//! scores selections against the truth.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod agnes;
pub mod estimator;
pub mod evalharness;
pub mod io;
pub mod netstats;
mod par;
pub mod rng;
pub mod selector;
pub mod simgen;
