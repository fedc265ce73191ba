//! Rank-constrained convex minimization by projected gradient descent with
//! randomized approximate projections.
//!
//! The core loop ([`solvers::maple_run`]) minimizes a smooth convex function
//! `F` over matrices of rank at most `r` by iterating
//! `L ← T(L − η ∇F(L))`, where `T` is an *approximate* rank-`r` tail
//! projection computed by a block Krylov sketch ([`rsvd::bksvd`]) instead of
//! a full SVD. Running the projection at an inflated rank (a small constant
//! multiple of the target rank) absorbs the sketching error, so the iteration
//! keeps the linear convergence of exact projected gradient descent while
//! each step costs a few matrix–block products.
//!
//! The supporting cast:
//!
//! * [`matcore`] — dense matrices, exact decompositions, file formats;
//! * [`rsvd`] — the randomized block Krylov subspace sketch and the
//!   approximate tail projection built on it;
//! * [`operators`] — fast subsampled-Hadamard and dense measurement
//!   operators for matrix sensing;
//! * [`losses`] — the objective functions: nonlinear affine rank
//!   minimization, logistic PCA, and Gaussian precision-matrix estimation;
//! * [`solvers`] — the projected-gradient solver, an exact-projection
//!   variant, a factorized-gradient baseline, and step-size diagnostics;
//! * [`synth`] — synthetic problem generators and recovery metrics.
//!
//! Everything is deterministic given the seeds: random state flows through
//! [`rng::StreamRng`] only, so a run reproduces bit-for-bit.

pub mod error;
pub mod losses;
pub mod matcore;
pub mod operators;
pub mod rng;
pub mod rsvd;
pub mod solvers;
pub mod synth;

pub use error::{Error, Result};
pub use matcore::DenseMatrix;
