//! Crate-wide error type.

/// Errors raised anywhere in the toolbox.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("singular matrix: pivot {pivot:.3e} below threshold {threshold:.3e}")]
    SingularMatrix { pivot: f64, threshold: f64 },
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("state matrix is not stable enough (spectral radius {0})")]
    UnstableA(f64),
    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(&'static str),
    #[error("matrix exponential overflow (norm {0:.3e})")]
    Overflow(f64),
    #[error("rank-deficient least-squares matrix")]
    RankDeficient,
    #[error("ill-posed algebraic loop: {0}")]
    IllPosed(&'static str),
    #[error("system is unstable")]
    UnstableSystem,
    #[error("dc gain undefined: pole at z = 1")]
    PoleAtOne,
    #[error("condensed Hessian not positive definite (min eigenvalue {0:.3e})")]
    IndefiniteH(f64),
    #[error("extracted feedback gain does not stabilize (spectral radius {0})")]
    UnstableClosedLoop(f64),
    #[error("bound vector shape mismatch: {0}")]
    InfeasibleBoundsShape(String),
    #[error("QP primal infeasible")]
    Infeasible,
    #[error("QP iteration limit reached")]
    MaxIterations,
    #[error("augmented model is undetectable at z = 1")]
    UndetectableAugmentation,
    #[error("coprime feedthrough inversion ill-posed")]
    IllPosedFeedthrough,
    #[error("ancillary gain does not stabilize the {0}")]
    UnstableAncillary(&'static str),
    #[error("plant/controller pair is not stabilizing (spectral radius {0})")]
    UnstablePair(f64),
    #[error("feedforward dc gain is singular")]
    SingularDcGain,
    #[error("dual parameter validation failed (impulse mismatch {0:.3e})")]
    ValidationFailed(f64),
    #[error("assembled loop internally unstable (spectral radius {0})")]
    InternalInstability(f64),
    #[error("T22 block is nonzero (impulse norm {0:.3e})")]
    NonzeroT22(f64),
    #[error("weight pole lies outside the unit disc")]
    UnstablePole,
    #[error("degenerate linearization level")]
    DegenerateLevel,
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("solver failed at step {step}: {source}")]
    SolverFailed { step: usize, source: Box<Error> },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
