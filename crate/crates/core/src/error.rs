use thiserror::Error;

/// Errors raised by space construction, operator algebra and state checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("invalid dimension {dim}: {reason}")]
    InvalidDimension { dim: usize, reason: &'static str },
    #[error("duplicate subsystem label `{0}`")]
    DuplicateLabel(String),
    #[error("site {site} out of range for a space with {len} subsystems")]
    SiteOutOfRange { site: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operands live on different composite spaces")]
    SpaceMismatch,
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid subsystem selection: {0}")]
    InvalidSelection(String),
}

/// Errors from generator assembly and time propagation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("Hamiltonian is not Hermitian (max deviation {0:e})")]
    NonHermitianHamiltonian(f64),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },
    #[error("superoperator of dimension {dim}^2 exceeds the materialization guard (total_dim <= {limit})")]
    TooLarge { dim: usize, limit: usize },
}

/// Errors from model builders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Errors from reduced-state extraction and correlation measures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrelationError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("invalid bipartition: {0}")]
    InvalidPartition(String),
    #[error("expected a two-qubit state, got subsystem dimensions {0:?}")]
    NotTwoQubit(Vec<usize>),
    #[error("state has eigenvalue {0:e} below the positivity tolerance")]
    NegativeEigenvalue(f64),
}
