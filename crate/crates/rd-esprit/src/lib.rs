//! R-D harmonic retrieval with ESPRIT-type estimators and their first-order
//! performance analysis.
//!
//! The library covers the full pipeline:
//!
//! 1. [`tensor`] — dense complex multilinear algebra: cyclic unfoldings,
//!    n-mode products, truncated HOSVD, commutation/exchange matrices,
//!    Kronecker and Khatri-Rao products.
//! 2. [`model`] — synthesis of the R-D superposition of undamped exponentials
//!    observed on an outer-product sampling grid, with configurable source
//!    correlation and noise second-order statistics (covariance and
//!    pseudo-covariance).
//! 3. [`subspace`] — SVD- and HOSVD-based signal subspace estimation,
//!    forward-backward averaging, and phase-aligned subspace errors.
//! 4. [`esprit`] — the estimator family: standard, FBA ("unitary"), their
//!    tensor counterparts, and a single-iteration structured least squares
//!    refinement; shift-invariance solves and cross-mode pairing.
//! 5. [`perturb`] — explicit first-order expansions of the subspace and
//!    frequency errors as deterministic functions of a noise realization.
//! 6. [`mse`] — closed-form mean square error predictions for arbitrary
//!    zero-mean noise, deterministic Cramér-Rao bounds, and single-source
//!    efficiency formulas.
//! 7. [`sweep`] — Monte-Carlo sweep harness producing CSV, with empirical,
//!    semi-analytical, and analytical evaluation modes.

pub mod error;
pub mod esprit;
pub mod model;
pub mod mse;
pub mod perturb;
pub mod subspace;
pub mod sweep;
pub mod tensor;

/// Complex scalar used throughout: double-precision pair.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = faer::Mat<C64>;
/// Dense real matrix.
pub type RMat = faer::Mat<f64>;

pub use error::Error;
/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
