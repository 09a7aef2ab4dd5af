//! Low-rank matrix approximation by weighted Schatten p-norm minimization.
//!
//! The crate is layered bottom-up:
//!
//! - [`rng`]: seeded splitmix64 streams — every stochastic artifact in the
//!   crate is reproducible from a 64-bit seed;
//! - [`matrix`]: dense column-major matrices, the universal numeric carrier;
//! - [`svd`]: deterministic thin SVD (Householder QR + one-sided Jacobi) and a
//!   symmetric Jacobi eigensolver;
//! - [`gst`]: the scalar generalized soft-thresholding solver;
//! - [`wsnm`]: the weighted Schatten p-norm and its matrix proximal operator;
//! - [`rpca`]: robust PCA (low-rank + sparse decomposition) by inexact
//!   augmented-Lagrangian alternating minimization;
//! - [`image`]: grayscale images, PGM / WSNMF64 I/O, PSNR, synthetic scenes;
//! - [`denoise`]: the nonlocal patch-group image denoiser;
//! - [`bench`]: synthetic recovery benchmarks, phase sweeps, and
//!   foreground-mask metrics.

use std::fmt;

pub mod bench;
pub mod denoise;
pub mod gst;
pub mod image;
pub mod matrix;
pub mod rng;
pub mod rpca;
pub mod svd;
pub mod wsnm;

pub use matrix::DenseMatrix;
pub use svd::SvdFactors;
pub use wsnm::WeightVector;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition; the message names the
    /// offending parameter.
    InvalidInput(String),
    /// A weight vector failed the non-descending order check.
    WeightOrder {
        index: usize,
        previous: f64,
        value: f64,
    },
    /// The Jacobi sweep budget was exhausted before the off-diagonal mass
    /// fell below tolerance.
    SvdNoConvergence { off_diagonal: f64, sweeps: usize },
    /// A solver iterate became non-finite.
    NonFinite {
        context: &'static str,
        iteration: usize,
    },
    /// A file was not in the expected format.
    Format(String),
    /// Underlying I/O failure (message includes the path).
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::WeightOrder {
                index,
                previous,
                value,
            } => write!(
                f,
                "weights are not non-descending: w[{}] = {} < w[{}] = {}",
                index,
                value,
                index - 1,
                previous
            ),
            Error::SvdNoConvergence {
                off_diagonal,
                sweeps,
            } => write!(
                f,
                "SVD did not converge within {sweeps} sweeps (off-diagonal {off_diagonal:.3e})"
            ),
            Error::NonFinite { context, iteration } => {
                write!(f, "non-finite value in {context} at iteration {iteration}")
            }
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
