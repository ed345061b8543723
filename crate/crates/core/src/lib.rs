//! Within-host viral dynamics with antibody-dependent enhancement (ADE).
//!
//! The basic model tracks target cells `T`, infected cells `I`, free virus
//! `V` and antibodies `A`:
//!
//! ```text
//! dT/dt = Λ − μT − β(A)VT
//! dI/dt = β(A)VT − δI
//! dV/dt = ωI − cV − bAV
//! dA/dt = aVA − σA,        β(A) = β₀ + β₁A
//! ```
//!
//! A latent variant inserts a non-producing compartment `L` between
//! infection and virion production.
// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibria;
pub mod error;
pub mod fitting;
pub mod integrator;
pub mod model;
mod nelder_mead;
pub mod roots;
pub mod sampling;
pub mod stability;

pub use equilibria::{
    ade_equilibrium, derived_thresholds, equilibrium_residual, immunosuppression_equilibrium,
    no_ade_equilibrium, trivial_equilibrium, DerivedThresholds, EquilibriumKind, EquilibriumPoint,
};
pub use error::{Error, Result};
pub use fitting::{fit, loss, synthesize_observations, FitResult, FitSpec, ObservationSet};
pub use integrator::{integrate, IntegrationOptions, SummaryMetrics, Trajectory};
pub use model::{
    beta_effective, rhs_basic, rhs_latent, validate_params, ModelParams, ModelVariant, State,
    ValidationReport,
};
pub use stability::{
    characteristic_quartic, classify_equilibrium, eigenvalues_quartic, gamma_closed_form_no_ade,
    jacobian_basic, routh_hurwitz_quartic, Classification, QuarticPoly, StabilityReport,
};
