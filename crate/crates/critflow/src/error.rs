//! Error type shared by all solver and analysis modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Field contains NaN or infinite samples.
    #[error("field contains non-finite values")]
    InvalidField,

    /// Spectrum violates Hermitian symmetry beyond tolerance; an inverse
    /// transform would not produce a real field.
    #[error("spectrum violates Hermitian symmetry (max asymmetry {max_asymmetry:.3e})")]
    AsymmetricSpectrum { max_asymmetry: f64 },

    /// Multiplier rank is incompatible with the field rank.
    #[error("multiplier/field rank mismatch: {0}")]
    RankMismatch(String),

    /// Operation requires a mean-zero field but the zero mode is nonzero.
    #[error("field has nonzero mean {mean:.3e} (operation requires mean zero)")]
    NonZeroMean { mean: f64 },

    /// Two fields live on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Fractional order outside the supported range.
    #[error("unsupported operator order {order}")]
    UnsupportedOrder { order: f64 },

    /// Invalid run-time configuration (empty radii list, bad window, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Exponent constraints of an inequality checker are violated.
    #[error("invalid exponents: {0}")]
    InvalidExponents(String),

    /// An iterative method hit its iteration cap without meeting tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// An iterate of the X-norm recursion exceeded the overflow guard;
    /// the input lies outside the contraction ball.
    #[error("iterate blow-up at depth {depth} (norm {norm:.3e})")]
    IterateBlowup { depth: usize, norm: f64 },

    /// Von Neumann series terms grow instead of decaying.
    #[error("resolvent series diverges at lambda = {lambda_re:.3e}{lambda_im:+.3e}i (term ratio {ratio:.3})")]
    SeriesDiverges {
        lambda_re: f64,
        lambda_im: f64,
        ratio: f64,
    },

    /// Time stepping tripped the blow-up guard.
    #[error("evolution unstable at t = {t:.3e} (norm {norm:.3e})")]
    Unstable { t: f64, norm: f64 },

    /// A field required to be divergence-free is not.
    #[error("field is not solenoidal (spectral divergence {divergence:.3e})")]
    NotSolenoidal { divergence: f64 },

    /// The two mild-solution discretizations disagree beyond tolerance.
    #[error("evolution schemes disagree: relative gap {gap:.3e} exceeds {tol:.3e}")]
    SchemesDisagree { gap: f64, tol: f64 },

    /// Corrupt or foreign file content.
    #[error("format error at byte offset {offset}: {reason}")]
    FormatError { offset: u64, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Wraps a failure with the pipeline stage that produced it.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tag an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// Process exit code per the batch-tool contract: 2 for usage/config
    /// problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::FormatError { .. } => 2,
            Error::NoConvergence { .. }
            | Error::SeriesDiverges { .. }
            | Error::Unstable { .. }
            | Error::IterateBlowup { .. }
            | Error::SchemesDisagree { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
