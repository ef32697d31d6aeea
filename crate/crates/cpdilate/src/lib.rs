//! Dilation calculus for completely positive matrices of maps on Hilbert
//! C*-modules over finite-dimensional block algebras.
//!
//! The crate builds minimal Stinespring-type dilations of matrix-completely
//! positive map pairs, decides unitary equivalence and domination, computes
//! commutants and Radon-Nikodym derivatives, and exposes everything through
//! the `cpdilate` command-line tool with residual certificates.
//!
//! All numerics are generic over the real scalar (`f32` or `f64`) via the
//! [`scalar::Real`] trait; `f64` aliases live at the crate root.

pub mod algebra;
pub mod certificate;
pub mod cli;
pub mod cpmatrix;
pub mod error;
pub mod flag;
pub mod instance;
pub mod ksgns;
pub mod linalg;
pub mod module;
pub mod radon_nikodym;
pub mod scalar;

pub use error::{CpError, Result};
pub use linalg::{CMatrix, Tolerances};

/// Double-precision aliases used by the CLI and most callers.
pub type CMatrix64 = linalg::CMatrix<f64>;
pub type Tolerances64 = linalg::Tolerances<f64>;
pub type AlgElement64 = algebra::AlgElement<f64>;
pub type ModuleElement64 = module::ModuleElement<f64>;
pub type FlagOperator64 = flag::FlagOperator<f64>;

/// Single-precision aliases.
pub type CMatrix32 = linalg::CMatrix<f32>;
pub type Tolerances32 = linalg::Tolerances<f32>;
