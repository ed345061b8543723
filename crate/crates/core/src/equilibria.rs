//! Reproduction number, threshold viral loads, and the steady states of the
//! basic model in closed form.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{basic_term_scales, rhs_basic, ModelParams, State};

/// Quantities derived from the rate constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedThresholds {
    /// Basic reproduction number `β₀ωΛ/(cδμ)`.
    pub r0: f64,
    /// Viral load above which antibodies grow, `σ/a`.
    pub v_t: f64,
    /// Viral load of the antibody-free steady state, `(R₀ − 1)μ/β₀`.
    pub v_is: f64,
    /// `R₀ − 1 − σβ₀/(μa)`; positive iff `v_is > v_t`.
    pub w: f64,
    /// `δ − μ`.
    pub zeta: f64,
    pub r0_above_one: bool,
    pub assumption1: bool,
    pub assumption2: bool,
}

pub fn derived_thresholds(p: &ModelParams) -> DerivedThresholds {
    let r0 = p.beta0 * p.omega * p.lambda / (p.c * p.delta * p.mu);
    let v_t = p.sigma / p.a;
    let v_is = (r0 - 1.0) * p.mu / p.beta0;
    let w = r0 - 1.0 - p.sigma * p.beta0 / (p.mu * p.a);
    let zeta = p.delta - p.mu;
    DerivedThresholds {
        r0,
        v_t,
        v_is,
        w,
        zeta,
        r0_above_one: r0 > 1.0,
        assumption1: zeta > 0.0,
        assumption2: v_is > v_t,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EquilibriumKind {
    Trivial,
    Immunosuppression,
    NoAde,
    Ade,
}

impl EquilibriumKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EquilibriumKind::Trivial => "trivial",
            EquilibriumKind::Immunosuppression => "immunosuppression",
            EquilibriumKind::NoAde => "no_ade",
            EquilibriumKind::Ade => "ade",
        }
    }
}

/// A steady state together with its scaled residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub kind: EquilibriumKind,
    pub state: State,
    pub residual: f64,
}

/// Residual tolerance applied to every closed-form equilibrium.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Max over the four equations of `|rhs_i| / max(1, Σ|terms_i|)`.
pub fn equilibrium_residual(p: &ModelParams, state: &State) -> f64 {
    let d = rhs_basic(p, state);
    let scales = basic_term_scales(p, state);
    d.iter()
        .zip(scales)
        .map(|(r, s)| r.abs() / s.max(1.0))
        .fold(0.0, f64::max)
}

fn point(
    p: &ModelParams,
    kind: EquilibriumKind,
    t: f64,
    i: f64,
    v: f64,
    a: f64,
) -> Result<EquilibriumPoint> {
    let state = State {
        t: 0.0,
        target: t,
        infected: i,
        virus: v,
        antibody: a,
        latent: None,
    };
    let residual = equilibrium_residual(p, &state);
    if !(residual < RESIDUAL_TOL) {
        return Err(Error::NotAdmissible(format!(
            "{} equilibrium residual {residual:e} exceeds tolerance",
            kind.as_str()
        )));
    }
    Ok(EquilibriumPoint {
        kind,
        state,
        residual,
    })
}

pub fn trivial_equilibrium(p: &ModelParams) -> Result<EquilibriumPoint> {
    point(p, EquilibriumKind::Trivial, p.lambda / p.mu, 0.0, 0.0, 0.0)
}

/// Antibody-free steady state with `V = v_is`.
///
/// `T` is obtained from the infected-cell and virus balances at `A = 0`,
/// which give `T = δc/(β₀ω)`.
pub fn immunosuppression_equilibrium(p: &ModelParams) -> Result<EquilibriumPoint> {
    let th = derived_thresholds(p);
    if !th.r0_above_one {
        return Err(Error::NotAdmissible(format!(
            "immunosuppression equilibrium requires R0 > 1 (R0 = {})",
            th.r0
        )));
    }
    let t = p.delta * p.c / (p.beta0 * p.omega);
    let i = (th.r0 - 1.0) * p.c * p.mu / (p.omega * p.beta0);
    point(p, EquilibriumKind::Immunosuppression, t, i, th.v_is, 0.0)
}

/// Interior steady state without enhancement (`β₁ = 0`).
pub fn no_ade_equilibrium(p: &ModelParams) -> Result<EquilibriumPoint> {
    if p.beta1 != 0.0 {
        return Err(Error::NotAdmissible(format!(
            "no-ADE equilibrium requires beta1 = 0 (beta1 = {})",
            p.beta1
        )));
    }
    let th = derived_thresholds(p);
    if th.v_is < th.v_t {
        return Err(Error::NotAdmissible(format!(
            "assumption 2 fails: v_is = {} < v_t = {}",
            th.v_is, th.v_t
        )));
    }
    let v = th.v_t;
    let denom = p.mu + p.beta0 * v;
    let t = p.lambda / denom;
    let i = p.beta0 * p.lambda * v / (p.delta * denom);
    // Virus balance: ωI = (c + bA)V.
    let a = ((p.omega * p.beta0 * p.lambda / (p.delta * denom) - p.c) / p.b).max(0.0);
    point(p, EquilibriumKind::NoAde, t, i, v, a)
}

/// Coefficients `(c₂, c₁, c₀)` of the antibody-level quadratic at `V = v_t`.
pub fn ade_quadratic(p: &ModelParams) -> (f64, f64, f64) {
    let v = p.sigma / p.a;
    let c2 = p.delta * p.b * p.beta1 * v;
    let c1 = p.delta * (p.c * p.beta1 * v + p.b * p.mu + p.b * p.beta0 * v)
        - p.omega * p.lambda * p.beta1;
    let c0 = p.delta * p.c * (p.mu + p.beta0 * v) - p.omega * p.lambda * p.beta0;
    (c2, c1, c0)
}

/// Interior steady state with enhancement (`β₁ > 0`).
pub fn ade_equilibrium(p: &ModelParams) -> Result<EquilibriumPoint> {
    if !(p.beta1 > 0.0) {
        return Err(Error::NotAdmissible(
            "ADE equilibrium requires beta1 > 0; use no_ade_equilibrium".into(),
        ));
    }
    let th = derived_thresholds(p);
    if !th.assumption2 {
        return Err(Error::NotAdmissible(format!(
            "assumption 2 fails: v_is = {} <= v_t = {}",
            th.v_is, th.v_t
        )));
    }
    let (c2, c1, c0) = ade_quadratic(p);
    // Roots have product c0/c2 < 0, so exactly one is positive.
    if !(c0 / c2 < 0.0) {
        return Err(Error::NotAdmissible(format!(
            "antibody quadratic has no sign change (c0 = {c0:e}, c2 = {c2:e})"
        )));
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    let sign = if c1 < 0.0 { -1.0 } else { 1.0 };
    let q = -0.5 * (c1 + sign * disc.sqrt());
    let (r1, r2) = (q / c2, c0 / q);
    let a = if r1 > 0.0 { r1 } else { r2 };

    let v = th.v_t;
    let beta = p.beta0 + p.beta1 * a;
    let t = p.delta * (p.c + p.b * a) / (p.omega * beta);
    let i = v * (p.c + p.b * a) / p.omega;
    point(p, EquilibriumKind::Ade, t, i, v, a)
}

/// The interior steady state appropriate for `p.beta1`.
pub fn interior_equilibrium(p: &ModelParams) -> Result<EquilibriumPoint> {
    if p.beta1 > 0.0 {
        ade_equilibrium(p)
    } else {
        no_ade_equilibrium(p)
    }
}

/// All admissible equilibria, with the reason each missing one was rejected.
pub fn all_equilibria(p: &ModelParams) -> Vec<(EquilibriumKind, Result<EquilibriumPoint>)> {
    vec![
        (EquilibriumKind::Trivial, trivial_equilibrium(p)),
        (
            EquilibriumKind::Immunosuppression,
            immunosuppression_equilibrium(p),
        ),
        (EquilibriumKind::NoAde, no_ade_equilibrium(p)),
        (EquilibriumKind::Ade, ade_equilibrium(p)),
    ]
}
