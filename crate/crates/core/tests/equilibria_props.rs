use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use viraldyn::equilibria::{ade_quadratic, all_equilibria, RESIDUAL_TOL};
use viraldyn::sampling::draw_with_assumptions;
use viraldyn::*;

fn draw(seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_with_assumptions(&mut rng, &ModelParams::baseline(), 3.0).0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn every_equilibrium_is_a_steady_state(seed in any::<u64>(), log_b1 in -12.0f64..2.0) {
        for p in [draw(seed), draw(seed).with_beta1(10f64.powf(log_b1))] {
            let th = derived_thresholds(&p);
            for (kind, point) in all_equilibria(&p) {
                let applicable = match kind {
                    EquilibriumKind::NoAde => p.beta1 == 0.0,
                    EquilibriumKind::Ade => p.beta1 > 0.0,
                    _ => true,
                };
                prop_assert_eq!(point.is_ok(), applicable, "{:?}", kind);
                let Ok(e) = point else { continue };
                prop_assert_eq!(e.kind, kind);
                prop_assert!(e.residual < RESIDUAL_TOL, "{:?} residual {}", kind, e.residual);
                prop_assert!(equilibrium_residual(&p, &e.state) < RESIDUAL_TOL);
                let s = e.state;
                match kind {
                    EquilibriumKind::Trivial => {
                        prop_assert!(s.infected == 0.0 && s.virus == 0.0 && s.antibody == 0.0)
                    }
                    EquilibriumKind::Immunosuppression => {
                        prop_assert_eq!(s.antibody, 0.0);
                        prop_assert!((s.virus - th.v_is).abs() <= 1e-12 * th.v_is);
                    }
                    EquilibriumKind::NoAde | EquilibriumKind::Ade => {
                        prop_assert!((s.virus - th.v_t).abs() <= 1e-12 * th.v_t);
                        prop_assert!(s.antibody > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn ade_quadratic_has_one_positive_root(seed in any::<u64>(), log_b1 in -12.0f64..2.0) {
        let p = draw(seed).with_beta1(10f64.powf(log_b1));
        let (c2, c1, c0) = ade_quadratic(&p);
        prop_assert!(c2 > 0.0);
        prop_assert!(c0 < 0.0);
        prop_assert!(c1 * c1 - 4.0 * c2 * c0 > 0.0);
        let e = ade_equilibrium(&p).unwrap();
        let a = e.state.antibody;
        // Oracle: the unreduced steady-state identity for A.
        let th = derived_thresholds(&p);
        let beta = p.beta0 + p.beta1 * a;
        let lhs = p.omega * beta * p.lambda;
        let rhs = p.delta * (p.c + p.b * a) * (p.mu + beta * th.v_t);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()));
    }

    #[test]
    fn ade_tends_to_no_ade_as_beta1_vanishes(seed in any::<u64>()) {
        let p = draw(seed);
        let base = no_ade_equilibrium(&p).unwrap().state.antibody;
        // Scale eps relative to beta0 / A so the perturbation stays small.
        let eps = 1e-10 * p.beta0 / base.max(1e-300);
        let a = ade_equilibrium(&p.with_beta1(eps)).unwrap().state.antibody;
        prop_assert!((a - base).abs() <= 1e-6 * base.max(1e-300) + 1e-12, "{} vs {}", a, base);
    }
}

/// A^f settles to a finite limit as β₁ grows, and β₁·T^f tends to
/// δ(c + bA^∞)/(ωA^∞).
#[test]
fn antibody_level_bounded_as_beta1_grows() {
    for p in [ModelParams::counterexample(), ModelParams::baseline()] {
        let reference = if p.beta1 > 0.0 { p.beta1 } else { 1e-6 };
        let sweep: Vec<EquilibriumPoint> = [1e-2, 1.0, 1e2, 1e4, 1e6]
            .iter()
            .map(|k| ade_equilibrium(&p.with_beta1(k * reference)).unwrap())
            .collect();
        let a: Vec<f64> = sweep.iter().map(|e| e.state.antibody).collect();
        let diffs: Vec<f64> = a.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        for d in diffs.windows(2) {
            assert!(d[1] < d[0], "{a:?}");
        }
        assert!(diffs.last().unwrap() / a.last().unwrap() < 1e-3, "{a:?}");
        for w in a.windows(2) {
            assert!(w[1] >= w[0]);
        }

        let a_inf = *a.last().unwrap();
        let e = sweep.last().unwrap();
        let b1 = 1e6 * reference;
        let limit = p.delta * (p.c + p.b * a_inf) / (p.omega * a_inf);
        assert!((b1 * e.state.target - limit).abs() < 1e-3 * limit);
    }
}
