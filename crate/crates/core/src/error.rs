use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the domain the operation is defined on.
    #[error("parameter `{name}` = {value} is outside its domain {expected}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The circulant embedding produced a materially negative spectral weight.
    #[error("circulant embedding failed: spectral weight {weight:e} (relative) at frequency index {index}")]
    EmbeddingFailure { index: usize, weight: f64 },

    #[error("root finding did not converge at x = {x}")]
    RootFinding { x: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("Hermite rank undetected: |J_q| <= {tol:e} on the grid for every q in 1..={q_max}")]
    RankUndetected { q_max: usize, tol: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("grid does not cover the tails: {0}")]
    TailInadequate(String),

    #[error("chain grid needs Lambda(0) > 0 on the {side} side, found {value:e}")]
    ZeroAnchorMass { side: &'static str, value: f64 },

    #[error("weighted supremum still growing at grid radius {radius:e} (last change {change:e})")]
    BoundednessViolation { radius: f64, change: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
