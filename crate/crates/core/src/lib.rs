//! Direction-of-arrival estimation on arbitrary planar sensor arrays.
//!
//! The crate is organised around the processing chain:
//!
//! - [`geometry`]: sensor layouts (random, circular, concentric, spiral, linear, external CSV)
//! - [`manifold`]: steering vectors over a full azimuth grid
//! - [`scenesim`]: synthetic sparse scenes `X = A S + N`
//! - [`ssfns`]: spatial signal focusing and noise suppression (iterative null-space masking)
//! - [`baselines`]: CBF, MVDR, MUSIC and a group-Lasso sparse estimator
//! - [`metrics`]: array and estimator figures of merit
//!
//! All matrices are dense `nalgebra` matrices of `Complex<f64>`.

// `!(x > y)` is used on purpose so that NaN falls on the rejecting side
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod manifold;
pub mod metrics;
pub mod scenesim;
pub mod ssfns;

pub use error::{DoaError, Result};

pub type C64 = num_complex::Complex<f64>;
pub type CMatrix = nalgebra::DMatrix<C64>;
pub type CVector = nalgebra::DVector<C64>;
