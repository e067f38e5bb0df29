//! Numerical toolkit for spaces of unit-norm tight frames with prescribed
//! column norms: frame synthesis, the norm-squared flow of the diagonal
//! moment map on the Grassmannian, its critical strata, and path/loop
//! experiments on the level sets.

pub mod acceptance;
pub mod cli;
pub mod error;
pub mod flow;
pub mod hermitian;
pub mod homotopy;
pub mod io;
pub mod polytope;
pub mod rng;
pub mod schur_horn;
pub mod strata;

pub use error::{FrameError, Result};
