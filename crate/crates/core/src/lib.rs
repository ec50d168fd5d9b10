//! Near-field acoustic synthesis with layer potentials.
//!
//! A time-harmonic field outside a small source sphere is represented by a
//! combined double/single layer potential whose density is expanded in
//! spherical harmonics. The density is chosen by Tikhonov-regularized least
//! squares so that the field matches a target on one region and stays small
//! on another.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod geometry;
pub mod inverse;
pub mod parallel;
pub mod potentials;
pub mod scenario;
pub mod specfun;

pub use error::{NfsError, Result};
