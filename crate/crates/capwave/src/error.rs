//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong while building grids, solving the slab
/// problem, evaluating functionals or running the minimiser.
#[derive(Debug, Error)]
pub enum Error {
    /// A field that must be mean-free has a non-negligible zero mode.
    #[error("field mean {mean:.3e} is not zero (required for this operation)")]
    MeanNotZero { mean: f64 },

    /// Two fields or grids that must share a shape do not.
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    /// The surface displacement leaves the regime where the flattening
    /// transform is invertible with margin: min(1 + eta) <= 1/2.
    #[error("surface displacement too large: min(1 + eta) = {min:.4} <= 0.5")]
    EtaTooLarge { min: f64 },

    /// The slab fixed-point iteration stopped contracting.
    #[error("slab solve diverged after {iterations} iterations (last update norm {residual:.3e})")]
    SeriesDiverged { iterations: usize, residual: f64 },

    /// The zero-wavenumber column of the slab problem is only solvable for
    /// mean-free Neumann data.
    #[error("k = 0 solvability violated: boundary datum has mean {residual:.3e}")]
    IncompatibleMeanMode { residual: f64 },

    /// The momentum functional vanished (or was non-positive), so the wave
    /// speed mu / L is undefined.
    #[error("momentum functional L(eta) = {value:.3e} is not positive")]
    ZeroL { value: f64 },

    /// The squared H^3 norm reached or exceeded the outer penalty radius.
    #[error("H^3 norm squared {norm_sq:.6} outside penalty ball (limit {ball_sq:.6})")]
    OutsideBall { norm_sq: f64, ball_sq: f64 },

    /// Conjugate-gradient inversion of the Neumann-Dirichlet operator stalled.
    #[error("operator inversion stalled after {iterations} iterations (residual {residual:.3e})")]
    InversionStalled { iterations: usize, residual: f64 },

    /// Scale refinement for the explicit seed could not bracket a root.
    #[error("seed scale root not bracketed in [{lo:.4e}, {hi:.4e}]")]
    RootNotBracketed { lo: f64, hi: f64 },

    /// The computational box cannot hold the requested seed profile.
    #[error("box too small for seed: boundary amplitude is {boundary_ratio:.3e} of the peak")]
    BoxTooSmall { boundary_ratio: f64 },

    /// Backtracking line search underflowed without finding descent.
    #[error("line search failed: step underflowed at {step:.3e}")]
    LineSearchFailed { step: f64 },

    /// A configuration value is outside its admissible range.
    #[error("invalid {key}: {message}")]
    InvalidArgument { key: String, message: String },

    /// A field file or header could not be interpreted.
    #[error("file format: {0}")]
    FileFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(key: &str, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub fn shape(context: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
