//! Simultaneous (Aberth–Ehrlich) root iteration for low-degree real
//! polynomials, followed by one Newton polish per root.

use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_ITER: usize = 500;

/// Evaluates `p` (coefficients highest degree first) and its derivative at `z`.
fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(coeffs[0], 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in &coeffs[1..] {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Largest single term `|g_k| |z|^k`, floored at 1.
pub(crate) fn term_scale(coeffs: &[f64], z: Complex64) -> f64 {
    let r = z.norm();
    let n = coeffs.len() - 1;
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c.abs() * r.powi((n - i) as i32))
        .fold(1.0, f64::max)
}

fn abs_term_sum(coeffs: &[f64], z: Complex64) -> f64 {
    let r = z.norm();
    coeffs.iter().fold(0.0, |acc, c| acc * r + c.abs())
}

/// All complex roots of the polynomial with real `coeffs` (highest degree
/// first, leading coefficient non-zero).
///
/// Each returned root satisfies `|P(z)| < 1e-9 · max(1, max_k |g_k||z|^k)`.
/// Roots are sorted by decreasing real part, then decreasing imaginary part.
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let lead = coeffs[0];
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    let n = monic.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }

    // Start on a circle around the root centroid enclosing all roots.
    let centroid = -monic[1] / n as f64;
    let radius = monic[1..]
        .iter()
        .enumerate()
        .map(|(k, c)| 2.0 * c.abs().powf(1.0 / (k + 1) as f64))
        .fold(0.0, f64::max)
        .max(1e-3);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            Complex64::new(centroid, 0.0) + Complex64::from_polar(radius, theta)
        })
        .collect();

    for _ in 0..MAX_ITER {
        let mut done = true;
        for i in 0..n {
            let (p, dp) = horner(&monic, z[i]);
            if p.norm() <= 4.0 * f64::EPSILON * abs_term_sum(&monic, z[i]) {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !step.is_finite() {
                continue;
            }
            z[i] -= step;
            if step.norm() > 1e-15 * z[i].norm().max(1.0) {
                done = false;
            }
        }
        if done {
            break;
        }
    }

    for root in z.iter_mut() {
        let (p, dp) = horner(&monic, *root);
        if dp.norm() > 0.0 {
            let polished = *root - p / dp;
            if polished.is_finite() && horner(&monic, polished).0.norm() <= p.norm() {
                *root = polished;
            }
        }
        if root.im.abs() <= 1e-12 * root.norm().max(1.0) {
            root.im = 0.0;
        }
    }

    let residual_ok = z
        .iter()
        .all(|&r| horner(&monic, r).0.norm() < 1e-9 * term_scale(&monic, r));
    z.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    if !residual_ok {
        return Err(Error::RootsDidNotConverge {
            iterations: MAX_ITER,
            partial: z,
        });
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
        let mut c = vec![Complex64::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
            for (k, ck) in c.iter().enumerate() {
                next[k] += ck;
                next[k + 1] -= ck * r;
            }
            c = next;
        }
        c.iter().map(|x| x.re).collect()
    }

    #[test]
    fn distinct_real_roots() {
        let r = polynomial_roots(&[1.0, 10.0, 35.0, 50.0, 24.0]).unwrap();
        let re: Vec<f64> = r.iter().map(|z| z.re).collect();
        for (got, want) in re.iter().zip([-1.0, -2.0, -3.0, -4.0]) {
            assert!((got - want).abs() < 1e-12, "{re:?}");
        }
    }

    #[test]
    fn quadruple_root() {
        let r = polynomial_roots(&[1.0, 4.0, 6.0, 4.0, 1.0]).unwrap();
        for z in r {
            assert!((z - Complex64::new(-1.0, 0.0)).norm() < 1e-3, "{z}");
        }
    }

    #[test]
    fn fifth_roots_of_unity() {
        // X^4 + X^3 + X^2 + X + 1 = (X^5 - 1)/(X - 1)
        let r = polynomial_roots(&[1.0; 5]).unwrap();
        for z in &r {
            assert!((z.norm() - 1.0).abs() < 1e-12);
            assert!((z.powu(5) - 1.0).norm() < 1e-12);
        }
        assert_eq!(r.iter().filter(|z| z.re > 0.0).count(), 2);
    }

    #[test]
    fn complex_pair_and_wide_scale() {
        let roots = [
            Complex64::new(-1414.7, 0.0),
            Complex64::new(-48.13, 0.0),
            Complex64::new(-0.0026, 0.179),
            Complex64::new(-0.0026, -0.179),
        ];
        let c = poly_from_roots(&roots);
        let got = polynomial_roots(&c).unwrap();
        for want in roots {
            let best = got
                .iter()
                .map(|g| (g - want).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-8 * want.norm().max(1.0), "{want} {got:?}");
        }
    }

    #[test]
    fn linear_and_quadratic() {
        assert_eq!(polynomial_roots(&[2.0, -4.0]).unwrap()[0].re, 2.0);
        let r = polynomial_roots(&[1.0, 0.0, 1.0]).unwrap();
        assert!((r[0] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
    }
}
