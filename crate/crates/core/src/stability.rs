//! Linear stability of basic-model equilibria: analytic Jacobian,
//! characteristic quartic, Routh–Hurwitz test and eigenvalues.

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::Serialize;

use crate::equilibria::{derived_thresholds, EquilibriumKind, EquilibriumPoint, RESIDUAL_TOL};
use crate::error::{Error, Result};
use crate::model::{ModelParams, State};
use crate::roots::polynomial_roots;

/// `g4 X⁴ + g3 X³ + g2 X² + g1 X + g0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuarticPoly {
    pub g4: f64,
    pub g3: f64,
    pub g2: f64,
    pub g1: f64,
    pub g0: f64,
}

impl QuarticPoly {
    pub fn new(g4: f64, g3: f64, g2: f64, g1: f64, g0: f64) -> Self {
        QuarticPoly { g4, g3, g2, g1, g0 }
    }

    /// Coefficients, highest degree first.
    pub fn coeffs(&self) -> [f64; 5] {
        [self.g4, self.g3, self.g2, self.g1, self.g0]
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.coeffs()
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

/// Routh–Hurwitz test for a quartic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RouthHurwitz {
    pub pass: bool,
    /// `[g4, g3, g2, g1, g0, g1·g2·g3 − g4·g1² − g3²·g0]`; all must be positive.
    pub margins: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub kind: EquilibriumKind,
    pub state: State,
    /// Row-major.
    pub jacobian: [[f64; 4]; 4],
    pub charpoly: QuarticPoly,
    pub rh_pass: bool,
    pub rh_margins: [f64; 6],
    #[serde(serialize_with = "ser_complex")]
    pub eigenvalues: Vec<Complex64>,
    pub classification: Classification,
    /// False only when the eigenvalues are clearly off the imaginary axis
    /// and still disagree with the Routh–Hurwitz verdict.
    pub rh_consistent: bool,
}

fn ser_complex<S: serde::Serializer>(
    v: &[Complex64],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Analytic Jacobian of the basic right-hand side in (T, I, V, A) order.
pub fn jacobian_basic(p: &ModelParams, s: &State) -> Matrix4<f64> {
    let (t, v, a) = (s.target, s.virus, s.antibody);
    let beta = p.beta0 + p.beta1 * a;
    Matrix4::new(
        -beta * v - p.mu,
        0.0,
        -beta * t,
        -p.beta1 * t * v,
        beta * v,
        -p.delta,
        beta * t,
        p.beta1 * t * v,
        0.0,
        p.omega,
        -(p.c + p.b * a),
        -p.b * v,
        0.0,
        0.0,
        p.a * a,
        p.a * v - p.sigma,
    )
}

fn det3(m: &Matrix4<f64>, rows: [usize; 3], cols: [usize; 3]) -> f64 {
    let e = |r: usize, c: usize| m[(rows[r], cols[c])];
    e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1))
        - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0))
        + e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0))
}

/// Cofactor expansion along the first row.
fn det4(m: &Matrix4<f64>) -> f64 {
    const REST: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
    (0..4)
        .map(|col| {
            let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[(0, col)] * det3(m, [1, 2, 3], REST[col])
        })
        .sum()
}

/// Monic `det(X·Id − J)` from principal-minor sums.
pub fn characteristic_quartic(j: &Matrix4<f64>) -> QuarticPoly {
    let trace = j.trace();
    let mut minors2 = 0.0;
    for r in 0..4 {
        for c in (r + 1)..4 {
            minors2 += j[(r, r)] * j[(c, c)] - j[(r, c)] * j[(c, r)];
        }
    }
    let minors3: f64 = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]
        .into_iter()
        .map(|idx| det3(j, idx, idx))
        .sum();
    QuarticPoly::new(1.0, -trace, minors2, -minors3, det4(j))
}

/// Closed-form characteristic coefficients at the no-enhancement interior
/// equilibrium, expressed through `w = R₀ − 1 − σβ₀/(μa)`.
pub fn gamma_closed_form_no_ade(p: &ModelParams) -> Result<QuarticPoly> {
    if p.beta1 != 0.0 {
        return Err(Error::NotAdmissible(format!(
            "closed-form coefficients need beta1 = 0 (beta1 = {})",
            p.beta1
        )));
    }
    let th = derived_thresholds(p);
    if !(th.zeta > 0.0) || th.w < 0.0 {
        return Err(Error::NotAdmissible(format!(
            "closed-form coefficients need delta > mu and w >= 0 (zeta = {}, w = {})",
            th.zeta, th.w
        )));
    }
    let (a, b0, c, d, mu, s, w) = (p.a, p.beta0, p.c, p.delta, p.mu, p.sigma, th.w);
    let den = a * (a * mu + b0 * s);

    let g0 = c * d * mu * s * w;
    let g1 = c
        * s
        * (a * a * d * mu * w
            + a * a * mu * mu * w
            + a * b0 * d * mu * w
            + a * b0 * d * mu
            + a * b0 * mu * s * w
            + b0 * b0 * d * s)
        / den;
    let g2 = (a * a * c * mu * mu * w
        + a * a * c * mu * mu
        + a * a * c * mu * s * w
        + a * a * d * mu * mu
        + a * b0 * c * mu * s * w
        + 2.0 * a * b0 * c * mu * s
        + 2.0 * a * b0 * d * mu * s
        + b0 * b0 * c * s * s
        + b0 * b0 * d * s * s)
        / den;
    let g3 = (a * a * d * mu
        + a * a * mu * mu
        + a * b0 * d * s
        + 2.0 * a * b0 * mu * s
        + a * c * (a * mu * (w + 1.0) + b0 * s)
        + b0 * b0 * s * s)
        / den;
    Ok(QuarticPoly::new(1.0, g3, g2, g1, g0))
}

pub fn routh_hurwitz_quartic(q: &QuarticPoly) -> Result<RouthHurwitz> {
    if !(q.g4 > 0.0) {
        return Err(Error::NonPositiveLeading(q.g4));
    }
    let hurwitz = q.g1 * q.g2 * q.g3 - q.g4 * q.g1 * q.g1 - q.g3 * q.g3 * q.g0;
    let margins = [q.g4, q.g3, q.g2, q.g1, q.g0, hurwitz];
    Ok(RouthHurwitz {
        pass: margins.iter().all(|&m| m > 0.0),
        margins,
    })
}

pub fn eigenvalues_quartic(q: &QuarticPoly) -> Result<Vec<Complex64>> {
    if !(q.g4 > 0.0) {
        return Err(Error::NonPositiveLeading(q.g4));
    }
    polynomial_roots(&q.coeffs())
}

/// Stable iff every real part is below `-eps`, unstable iff one is above
/// `eps`, where `eps = 1e-9 · max(1, max |λ|)`.
pub fn classify_eigenvalues(eigs: &[Complex64]) -> Classification {
    let scale = eigs.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let eps = 1e-9 * scale;
    if eigs.iter().any(|z| z.re > eps) {
        Classification::Unstable
    } else if eigs.iter().all(|z| z.re < -eps) {
        Classification::Stable
    } else {
        Classification::Marginal
    }
}

pub fn classify_equilibrium(p: &ModelParams, e: &EquilibriumPoint) -> Result<StabilityReport> {
    if !(e.residual < RESIDUAL_TOL) {
        return Err(Error::NotAdmissible(format!(
            "equilibrium residual {:e} exceeds tolerance",
            e.residual
        )));
    }
    let jac = jacobian_basic(p, &e.state);
    let charpoly = characteristic_quartic(&jac);
    let rh = routh_hurwitz_quartic(&charpoly)?;
    let eigenvalues = eigenvalues_quartic(&charpoly)?;
    let classification = classify_eigenvalues(&eigenvalues);
    let rh_consistent = match classification {
        Classification::Marginal => true,
        Classification::Stable => rh.pass,
        Classification::Unstable => !rh.pass,
    };
    let mut jacobian = [[0.0; 4]; 4];
    for (r, row) in jacobian.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = jac[(r, c)];
        }
    }
    Ok(StabilityReport {
        kind: e.kind,
        state: e.state,
        jacobian,
        charpoly,
        rh_pass: rh.pass,
        rh_margins: rh.margins,
        eigenvalues,
        classification,
        rh_consistent,
    })
}
