//! Parameter and state types, and the right-hand sides of the basic
//! (T, I, V, A) and latent (T, L, I, V, A) systems.
//!
//! Units: time in days, cells and virions per ml, antibodies in arbitrary
//! units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rate constants of the within-host model.
///
/// `beta1 = 0` is the no-enhancement case. `eta` is only used by the latent
/// variant. Omitted fields deserialize to the baseline set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Target-cell production rate (cells/ml/day).
    pub lambda: f64,
    /// Target-cell death rate (1/day).
    pub mu: f64,
    /// Baseline infection rate (ml/virion/day).
    pub beta0: f64,
    /// Antibody-dependent enhancement of the infection rate.
    pub beta1: f64,
    /// Infected-cell death rate (1/day).
    pub delta: f64,
    /// Virion production per infected cell (1/day).
    pub omega: f64,
    /// Virion clearance rate (1/day).
    pub c: f64,
    /// Antibody neutralization rate.
    pub b: f64,
    /// Antibody stimulation rate.
    pub a: f64,
    /// Antibody decay rate (1/day).
    pub sigma: f64,
    /// Latent-to-productive transition rate (1/day).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl ModelParams {
    /// Baseline calibration to the primary-infection viral-load series
    /// (no enhancement).
    pub const fn baseline() -> Self {
        ModelParams {
            lambda: 9.66e6,
            mu: 9.66,
            beta0: 1.28e-6,
            beta1: 0.0,
            delta: 16.22,
            omega: 59.74,
            c: 1.45,
            b: 0.52,
            a: 9.15e-7,
            sigma: 0.02,
            eta: None,
        }
    }

    /// Small-scale parameter set with an unstable enhancement equilibrium.
    pub const fn counterexample() -> Self {
        ModelParams {
            lambda: 4.0,
            mu: 1e-3,
            beta0: 0.0011,
            beta1: 0.01188,
            delta: 2.0,
            omega: 1.0,
            c: 1.0,
            b: 1.0,
            a: 1.0,
            sigma: 1.0,
            eta: None,
        }
    }

    pub fn with_beta1(self, beta1: f64) -> Self {
        ModelParams { beta1, ..self }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        ModelParams {
            eta: Some(eta),
            ..self
        }
    }

    /// Named access used by sweeps and fitting. `eta` reads as NaN when absent.
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "lambda" => self.lambda,
            "mu" => self.mu,
            "beta0" => self.beta0,
            "beta1" => self.beta1,
            "delta" => self.delta,
            "omega" => self.omega,
            "c" => self.c,
            "b" => self.b,
            "a" => self.a,
            "sigma" => self.sigma,
            "eta" => self.eta.unwrap_or(f64::NAN),
            _ => return None,
        })
    }

    /// Sets a named parameter; returns `false` for an unknown name.
    pub fn set(&mut self, name: &str, value: f64) -> bool {
        match name {
            "lambda" => self.lambda = value,
            "mu" => self.mu = value,
            "beta0" => self.beta0 = value,
            "beta1" => self.beta1 = value,
            "delta" => self.delta = value,
            "omega" => self.omega = value,
            "c" => self.c = value,
            "b" => self.b = value,
            "a" => self.a = value,
            "sigma" => self.sigma = value,
            "eta" => self.eta = Some(value),
            _ => return false,
        }
        true
    }

    pub const NAMES: [&'static str; 11] = [
        "lambda", "mu", "beta0", "beta1", "delta", "omega", "c", "b", "a", "sigma", "eta",
    ];

    fn fields(&self) -> [(&'static str, Option<f64>); 11] {
        [
            ("lambda", Some(self.lambda)),
            ("mu", Some(self.mu)),
            ("beta0", Some(self.beta0)),
            ("beta1", Some(self.beta1)),
            ("delta", Some(self.delta)),
            ("omega", Some(self.omega)),
            ("c", Some(self.c)),
            ("b", Some(self.b)),
            ("a", Some(self.a)),
            ("sigma", Some(self.sigma)),
            ("eta", self.eta),
        ]
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Which system of equations to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    #[default]
    Basic,
    Latent,
}

/// Instantaneous compartment values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    #[serde(default)]
    pub t: f64,
    /// Target cells (cells/ml).
    #[serde(rename = "T")]
    pub target: f64,
    /// Productively infected cells (cells/ml).
    #[serde(rename = "I")]
    pub infected: f64,
    /// Free virus (copies/ml).
    #[serde(rename = "V")]
    pub virus: f64,
    /// Antibody level.
    #[serde(rename = "A")]
    pub antibody: f64,
    /// Latent infected cells, latent variant only.
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<f64>,
}

impl State {
    /// A validated basic-model state at time `t`.
    pub fn basic(t: f64, target: f64, infected: f64, virus: f64, antibody: f64) -> Result<Self> {
        let s = State {
            t,
            target,
            infected,
            virus,
            antibody,
            latent: None,
        };
        s.validate(ModelVariant::Basic)?;
        Ok(s)
    }

    /// A validated latent-model state at time `t`.
    pub fn latent(
        t: f64,
        target: f64,
        latent: f64,
        infected: f64,
        virus: f64,
        antibody: f64,
    ) -> Result<Self> {
        let s = State {
            t,
            target,
            infected,
            virus,
            antibody,
            latent: Some(latent),
        };
        s.validate(ModelVariant::Latent)?;
        Ok(s)
    }

    /// Primary-infection initial condition: `T(0) = Λ/μ` with the calibrated
    /// I(0), V(0), A(0).
    pub fn baseline_initial(p: &ModelParams) -> Self {
        State {
            t: 0.0,
            target: p.lambda / p.mu,
            infected: 372.11,
            virus: 994.84,
            antibody: 1.17,
            latent: None,
        }
    }

    /// Adds an empty latent compartment.
    pub fn into_latent(self) -> Self {
        State {
            latent: Some(self.latent.unwrap_or(0.0)),
            ..self
        }
    }

    pub fn validate(&self, variant: ModelVariant) -> Result<()> {
        if !self.t.is_finite() {
            return Err(Error::InvalidState(format!(
                "time is not finite ({})",
                self.t
            )));
        }
        let comps = [
            ("T", self.target),
            ("I", self.infected),
            ("V", self.virus),
            ("A", self.antibody),
        ];
        for (name, v) in comps.into_iter().chain(self.latent.map(|l| ("L", l))) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidState(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        match (variant, self.latent) {
            (ModelVariant::Basic, Some(_)) => Err(Error::InvalidState(
                "basic model state carries a latent compartment".into(),
            )),
            (ModelVariant::Latent, None) => Err(Error::InvalidState(
                "latent model state is missing L".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Compartments as a vector in solver order: (T, I, V, A) or (T, L, I, V, A).
    pub(crate) fn to_vec(self) -> Vec<f64> {
        match self.latent {
            None => vec![self.target, self.infected, self.virus, self.antibody],
            Some(l) => vec![self.target, l, self.infected, self.virus, self.antibody],
        }
    }

    pub(crate) fn from_slice(t: f64, y: &[f64]) -> Self {
        match y.len() {
            4 => State {
                t,
                target: y[0],
                infected: y[1],
                virus: y[2],
                antibody: y[3],
                latent: None,
            },
            5 => State {
                t,
                target: y[0],
                latent: Some(y[1]),
                infected: y[2],
                virus: y[3],
                antibody: y[4],
            },
            n => panic!("state vector of length {n}"),
        }
    }
}

/// Outcome of a single parameter check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub message: String,
}

/// Per-constraint validation results. Warnings do not make a parameter set
/// unusable; failed checks do.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    /// `δ > μ`.
    pub assumption1: bool,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failed(&self, name: &str) -> bool {
        self.checks.iter().any(|c| c.name == name && !c.passed)
    }

    /// Converts failures into an error.
    pub fn into_result(self) -> Result<Self> {
        if self.is_ok() {
            Ok(self)
        } else {
            let msg = self
                .failures()
                .map(|c| format!("{}: {}", c.name, c.message))
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidParams(msg))
        }
    }
}

pub fn validate_params(p: &ModelParams, variant: ModelVariant) -> Result<ValidationReport> {
    for (name, v) in p.fields() {
        if let Some(v) = v {
            if !v.is_finite() {
                return Err(Error::NonFiniteParam { name, value: v });
            }
        }
    }

    let mut checks = Vec::new();
    for (name, v) in p.fields() {
        let Some(v) = v else { continue };
        let (passed, message) = if name == "beta1" {
            (v >= 0.0, format!("must be non-negative, got {v}"))
        } else {
            (v > 0.0, format!("must be positive, got {v}"))
        };
        checks.push(Check {
            name: name.to_string(),
            passed,
            message: if passed { String::new() } else { message },
        });
    }

    let eta_ok = match variant {
        ModelVariant::Basic => true,
        ModelVariant::Latent => p.eta.is_some(),
    };
    checks.push(Check {
        name: "variant".into(),
        passed: eta_ok,
        message: if eta_ok {
            String::new()
        } else {
            "latent variant requires eta".into()
        },
    });

    let assumption1 = p.delta > p.mu;
    let mut warnings = Vec::new();
    if !assumption1 {
        warnings.push(format!(
            "assumption 1 (delta > mu) does not hold: delta = {}, mu = {}",
            p.delta, p.mu
        ));
    }

    Ok(ValidationReport {
        checks,
        warnings,
        assumption1,
    })
}

/// Infection rate `β(A) = β₀ + β₁·A`.
pub fn beta_effective(p: &ModelParams, antibody: f64) -> Result<f64> {
    if antibody < 0.0 || antibody.is_nan() {
        return Err(Error::NegativeAntibody(antibody));
    }
    Ok(p.beta0 + p.beta1 * antibody)
}

#[inline]
fn beta(p: &ModelParams, antibody: f64) -> f64 {
    p.beta0 + p.beta1 * antibody
}

/// Time derivative of the basic model, ordered (dT, dI, dV, dA).
pub fn rhs_basic(p: &ModelParams, s: &State) -> [f64; 4] {
    let mut out = [0.0; 4];
    basic_into(p, &[s.target, s.infected, s.virus, s.antibody], &mut out);
    out
}

/// Time derivative of the latent model, ordered (dT, dL, dI, dV, dA).
pub fn rhs_latent(p: &ModelParams, s: &State) -> Result<[f64; 5]> {
    let eta = p.eta.ok_or(Error::MissingEta)?;
    let l = s.latent.unwrap_or(0.0);
    let mut out = [0.0; 5];
    latent_into(
        p,
        eta,
        &[s.target, l, s.infected, s.virus, s.antibody],
        &mut out,
    );
    Ok(out)
}

pub(crate) fn basic_into(p: &ModelParams, y: &[f64], dy: &mut [f64]) {
    let (t, i, v, a) = (y[0], y[1], y[2], y[3]);
    let infection = beta(p, a) * v * t;
    dy[0] = p.lambda - p.mu * t - infection;
    dy[1] = infection - p.delta * i;
    dy[2] = p.omega * i - p.c * v - p.b * a * v;
    dy[3] = p.a * v * a - p.sigma * a;
}

pub(crate) fn latent_into(p: &ModelParams, eta: f64, y: &[f64], dy: &mut [f64]) {
    let (t, l, i, v, a) = (y[0], y[1], y[2], y[3], y[4]);
    let infection = beta(p, a) * v * t;
    dy[0] = p.lambda - p.mu * t - infection;
    dy[1] = infection - eta * l - p.mu * l;
    dy[2] = eta * l - p.delta * i;
    dy[3] = p.omega * i - p.c * v - p.b * a * v;
    dy[4] = p.a * v * a - p.sigma * a;
}

/// Absolute values of the individual terms of each basic-model equation,
/// used to scale residuals.
pub(crate) fn basic_term_scales(p: &ModelParams, s: &State) -> [f64; 4] {
    let (t, i, v, a) = (s.target, s.infected, s.virus, s.antibody);
    let infection = (beta(p, a) * v * t).abs();
    [
        p.lambda.abs() + (p.mu * t).abs() + infection,
        infection + (p.delta * i).abs(),
        (p.omega * i).abs() + (p.c * v).abs() + (p.b * a * v).abs(),
        (p.a * v * a).abs() + (p.sigma * a).abs(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn baseline_passes_validation() {
        let r = validate_params(&ModelParams::baseline(), ModelVariant::Basic).unwrap();
        assert!(r.is_ok());
        assert!(r.assumption1);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn negative_mu_fails_positivity() {
        let p = ModelParams {
            mu: -1.0,
            ..ModelParams::baseline()
        };
        let r = validate_params(&p, ModelVariant::Basic).unwrap();
        assert!(!r.is_ok());
        assert!(r.failed("mu"));
        assert_eq!(r.failures().count(), 1);
    }

    #[test]
    fn delta_equal_mu_warns_only() {
        let p = ModelParams {
            delta: 9.66,
            ..ModelParams::baseline()
        };
        let r = validate_params(&p, ModelVariant::Basic).unwrap();
        assert!(r.is_ok());
        assert!(!r.assumption1);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn non_finite_is_hard_error() {
        let p = ModelParams {
            c: f64::NAN,
            ..ModelParams::baseline()
        };
        assert!(matches!(
            validate_params(&p, ModelVariant::Basic),
            Err(Error::NonFiniteParam { name: "c", .. })
        ));
    }

    #[test]
    fn latent_requires_eta() {
        let p = ModelParams::baseline();
        let r = validate_params(&p, ModelVariant::Latent).unwrap();
        assert!(r.failed("variant"));
        let r = validate_params(&p.with_eta(1.0), ModelVariant::Latent).unwrap();
        assert!(r.is_ok());
    }

    #[test]
    fn beta_effective_cases() {
        let p = ModelParams::baseline();
        assert_eq!(beta_effective(&p, 5.0).unwrap(), 1.28e-6);
        assert_eq!(beta_effective(&p, 0.0).unwrap(), p.beta0);
        let q = ModelParams {
            beta0: 0.0011,
            beta1: 0.01188,
            ..p
        };
        assert_relative_eq!(
            beta_effective(&q, 5.0 / 6.0).unwrap(),
            0.011,
            max_relative = 1e-14
        );
        assert!(beta_effective(&q, -1.0).is_err());
    }

    #[test]
    fn trivial_point_is_stationary() {
        let p = ModelParams::baseline();
        let s = State::basic(0.0, p.lambda / p.mu, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(rhs_basic(&p, &s), [0.0; 4]);
    }

    #[test]
    fn counterexample_point_is_stationary() {
        let p = ModelParams::counterexample();
        let s = State::basic(0.0, 1000.0 / 3.0, 11.0 / 6.0, 1.0, 5.0 / 6.0).unwrap();
        let d = rhs_basic(&p, &s);
        let scale = basic_term_scales(&p, &s);
        for k in 0..4 {
            assert!(d[k].abs() < 1e-6 * scale[k], "component {k}: {}", d[k]);
        }
    }

    #[test]
    fn baseline_initial_antibody_rate() {
        let p = ModelParams::baseline();
        let s = State::baseline_initial(&p);
        // aVA - σA = 9.15e-7 * 994.84 * 1.17 - 0.02 * 1.17
        let expected = 9.15e-7 * 994.84 * 1.17 - 0.02 * 1.17;
        assert_relative_eq!(rhs_basic(&p, &s)[3], expected, max_relative = 1e-14);
        assert!((rhs_basic(&p, &s)[3] - (-0.02234)).abs() < 1e-5);
    }

    #[test]
    fn latent_rhs_cases() {
        let p = ModelParams::baseline().with_eta(9.0);
        let s = State::latent(0.0, 1e6, 0.0, 0.0, 0.0, 3.0).unwrap();
        let d = rhs_latent(&p, &s).unwrap();
        assert_eq!(d[1], 0.0);
        assert_eq!(d[2], 0.0);
        assert_eq!(d[0], p.lambda - p.mu * 1e6);

        // β(A)VT = 100, η = 9, μ = 1, L = 10
        let q = ModelParams {
            beta0: 1.0,
            beta1: 0.0,
            mu: 1.0,
            eta: Some(9.0),
            ..ModelParams::baseline()
        };
        let s = State::latent(0.0, 10.0, 10.0, 0.0, 10.0, 0.0).unwrap();
        assert_eq!(rhs_latent(&q, &s).unwrap()[1], 0.0);

        assert_eq!(
            rhs_latent(&ModelParams::baseline(), &s),
            Err(Error::MissingEta)
        );
    }

    #[test]
    fn state_rejects_negative_and_variant_mismatch() {
        assert!(State::basic(0.0, -1.0, 0.0, 0.0, 0.0).is_err());
        assert!(State::basic(0.0, 1.0, f64::INFINITY, 0.0, 0.0).is_err());
        let s = State::latent(0.0, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(s.validate(ModelVariant::Basic).is_err());
    }

    #[test]
    fn named_access_roundtrip() {
        let mut p = ModelParams::baseline();
        for name in ModelParams::NAMES {
            assert!(p.set(name, 2.5));
            assert_eq!(p.get(name), Some(2.5));
        }
        assert!(!p.set("zeta", 1.0));
    }
}
