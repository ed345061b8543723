//! Random parameter draws around a reference set, used by the property
//! suites and by fit multi-starts.

use rand::Rng;

use crate::equilibria::derived_thresholds;
use crate::model::ModelParams;

/// Log-uniform draw in `[base·10^-decades, base·10^decades]`.
pub fn log_uniform<R: Rng + ?Sized>(rng: &mut R, base: f64, decades: f64) -> f64 {
    let e = rng.random_range(-decades..=decades);
    base * 10f64.powf(e)
}

/// Every positive rate of `base` drawn log-uniformly within `decades`;
/// `beta1` and `eta` are copied unchanged.
pub fn perturb_log_uniform<R: Rng + ?Sized>(
    rng: &mut R,
    base: &ModelParams,
    decades: f64,
) -> ModelParams {
    ModelParams {
        lambda: log_uniform(rng, base.lambda, decades),
        mu: log_uniform(rng, base.mu, decades),
        beta0: log_uniform(rng, base.beta0, decades),
        beta1: base.beta1,
        delta: log_uniform(rng, base.delta, decades),
        omega: log_uniform(rng, base.omega, decades),
        c: log_uniform(rng, base.c, decades),
        b: log_uniform(rng, base.b, decades),
        a: log_uniform(rng, base.a, decades),
        sigma: log_uniform(rng, base.sigma, decades),
        eta: base.eta,
    }
}

/// Rejection-samples parameters satisfying `δ > μ` and `v_is > v_t`.
///
/// Returns the draw and the number of rejected candidates.
pub fn draw_with_assumptions<R: Rng + ?Sized>(
    rng: &mut R,
    base: &ModelParams,
    decades: f64,
) -> (ModelParams, usize) {
    let mut rejected = 0;
    loop {
        let p = perturb_log_uniform(rng, base, decades);
        let th = derived_thresholds(&p);
        if th.assumption1 && th.assumption2 {
            return (p, rejected);
        }
        rejected += 1;
    }
}
