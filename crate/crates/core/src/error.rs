use thiserror::Error;

/// Errors raised anywhere in the modelling and tuning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("power flow did not converge after {iterations} iterations (max mismatch {mismatch:.3e} pu)")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("singular power-flow jacobian at bus {bus}")]
    SingularJacobian { bus: u32 },

    #[error("device {device} initialised outside its limits: {detail}")]
    InitOutOfLimits { device: String, detail: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("operating point is not an equilibrium (max residual {0:.3e})")]
    NotEquilibrium(f64),

    #[error("limiter active at operating point: {0}")]
    LimiterActive(String),

    #[error("algebraic jacobian is singular; near-singular subset: {0}")]
    SingularAlgebraic(String),

    #[error("eigen decomposition failed: {0}")]
    Eigen(String),

    #[error("evaluation point {0} is too close to a pole")]
    NearPole(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("simulation failed at t = {time:.4} s: {reason}")]
    Simulation { time: f64, reason: String },

    #[error("probe failed: {0}")]
    Probe(String),

    #[error("tuning failed for {slot}: {reason}")]
    Tuning { slot: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
