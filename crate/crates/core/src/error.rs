use thiserror::Error;

use crate::sdp::SdpStatus;

/// Errors raised across the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("Kraus rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),

    #[error("Kraus operators are not complete (residual {0:.3e})")]
    NotComplete(f64),

    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),

    #[error("tensor power exceeds the size budget: dimension {dim} > cap {cap}")]
    SizeBudgetExceeded { dim: usize, cap: usize },

    #[error("not a density matrix: {0}")]
    NotAState(String),

    #[error("derivative of the state is not traceless (trace {0:.3e})")]
    NonTracelessDerivative(f64),

    #[error("QFIM is singular (min eigenvalue {0:.3e}); some parameter combination is unidentifiable")]
    SingularQfim(f64),

    #[error("matrix is singular")]
    Singular,

    #[error("SDP solver failed with status {status:?} (gap {gap:.3e})")]
    SolverFailure { status: SdpStatus, gap: f64 },

    #[error("malformed SDP: {0}")]
    MalformedSdp(String),

    #[error("matrix is not unitary (residual {0:.3e})")]
    NotUnitary(f64),

    #[error("eigen-angle at the branch cut ({0:.12})")]
    BranchAmbiguity(f64),

    #[error("eigen-angle spread {0:.6} exceeds pi")]
    SpreadExceedsPi(f64),

    #[error("channel family is not a single-Kraus unitary family")]
    NotUnitaryFamily,

    #[error("step too large: g(h)/g(h/2) = {ratio:.4} along {direction}")]
    StepTooLarge { ratio: f64, direction: String },

    #[error("extracted matrix has eigenvalue {0:.3e} below the clamp floor")]
    NegativeEigenvalue(f64),

    #[error("closed form is singular at the origin")]
    OriginSingularity,

    #[error("eta = 1 corresponds to no dephasing; the witness is undefined")]
    EtaOne,

    #[error("parameter labels do not match: {0:?} vs {1:?}")]
    LabelMismatch(Vec<String>, Vec<String>),

    #[error("channel has no Kraus data at {} point(s): {}", .0.len(), format_points(.0))]
    MissingPoints(Vec<Vec<f64>>),

    #[error("channel file error: {0}")]
    Schema(String),

    #[error("a built-in channel needs no point plan; use --file")]
    BuiltinSelected,

    #[error("unsupported channel: {0}")]
    UnsupportedChannel(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("{0}")]
    InvalidInput(String),
}

fn format_points(points: &[Vec<f64>]) -> String {
    points
        .iter()
        .map(|p| {
            let coords: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
            format!("[{}]", coords.join(", "))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub type Result<T> = std::result::Result<T, Error>;
