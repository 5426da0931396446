use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("not Morse: {0}; add a symmetry-breaking perturbation")]
    NotMorse(String),

    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("continuation failed at t = {t}: {reason}")]
    Continuation { t: f64, reason: String },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("undecided orbit count: {0}")]
    Undecided(String),

    #[error("chain complex error: {0}")]
    Complex(String),
}

pub type Result<T> = std::result::Result<T, Error>;
