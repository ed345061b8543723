use thiserror::Error;

/// Errors raised by the model, analysis and integration routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` is not finite ({value})")]
    NonFiniteParam { name: &'static str, value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("antibody level must be non-negative, got {0}")]
    NegativeAntibody(f64),

    #[error("latent model requires the transition rate eta")]
    MissingEta,

    #[error("equilibrium not admissible: {0}")]
    NotAdmissible(String),

    #[error("leading coefficient must be positive, got {0}")]
    NonPositiveLeading(f64),

    #[error("root iteration did not converge after {iterations} iterations")]
    RootsDidNotConverge {
        iterations: usize,
        partial: Vec<num_complex::Complex64>,
    },

    #[error("invalid integration options: {0}")]
    InvalidOptions(String),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("invalid observations: {0}")]
    InvalidObservations(String),

    #[error("invalid fit specification: {0}")]
    InvalidFitSpec(String),

    #[error("no start produced a finite objective")]
    FitFailed,
}

pub type Result<T> = std::result::Result<T, Error>;
