//! Property tests over random weights, directions, step sizes and games.

mod common;

use common::*;
use icrlab::games::{discriminator_forward, generator_forward, QuadraticGame};
use icrlab::linsolve::make_cgd_operator;
use icrlab::optimizers::{simgd_step, OptimizerKind, OptimizerState, StepSizes};
use icrlab::stability::{
    analyze, char_poly_1d, eigvals_of_m_1d, positive_real_part_check, update_map_moduli_1d,
    Classification, UpdateRule,
};
use icrlab::ProjectionGame;
use proptest::prelude::*;

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 28)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_output_stays_in_s(wg in prop::collection::vec(-5.0..5.0f64, 28)) {
        let g = generator_forward(&wg);
        prop_assert!(g[0] > 0.0 && g[1] > 0.0);
        let s = 0.5 * (g[0] * g[1]).ln();
        prop_assert!(s.abs() < 0.5, "s = {s}");
        // (2, 2) would need s = ln 2 > 1/2
        prop_assert!(g != [2.0, 2.0]);
    }

    #[test]
    fn eta_rescaling_folds_into_first_layer(
        wd in weights(),
        p in prop::array::uniform2(-3.0..3.0f64),
        eta in prop::array::uniform2(1e-3..3.0f64),
    ) {
        let mut folded = wd.clone();
        for row in 0..4 {
            folded[2 * row] *= eta[0];
            folded[2 * row + 1] *= eta[1];
        }
        let a = discriminator_forward(&wd, p, eta);
        let b = discriminator_forward(&folded, p, [1.0, 1.0]);
        prop_assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn mixed_hvp_is_linear(
        wg in weights(), wd in weights(),
        v in prop::collection::vec(-1.0..1.0f64, 28),
        w in prop::collection::vec(-1.0..1.0f64, 28),
        alpha in -3.0..3.0f64, beta in -3.0..3.0f64,
    ) {
        let game = ProjectionGame::anisotropic().game();
        let comb: Vec<f64> = v.iter().zip(&w).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = game.d_xy(&wg, &wd, &comb).unwrap();
        let hv = game.d_xy(&wg, &wd, &v).unwrap();
        let hw = game.d_xy(&wg, &wd, &w).unwrap();
        let rhs: Vec<f64> = hv.iter().zip(&hw).map(|(a, b)| alpha * a + beta * b).collect();
        prop_assert!(dist(&lhs, &rhs) <= 1e-10 * (1.0 + norm(&rhs)));
    }

    #[test]
    fn mixed_hvps_are_transposes(
        wg in weights(), wd in weights(),
        u in prop::collection::vec(-1.0..1.0f64, 28),
        v in prop::collection::vec(-1.0..1.0f64, 28),
    ) {
        for pg in [ProjectionGame::anisotropic(), ProjectionGame::isotropic()] {
            let game = pg.game();
            let a = dot(&u, &game.d_xy(&wg, &wd, &v).unwrap());
            let b = dot(&v, &game.d_yx(&wg, &wd, &u).unwrap());
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn cgd_operator_dominates_identity(
        wg in weights(), wd in weights(),
        z in prop::collection::vec(-1.0..1.0f64, 28),
        eta in 1e-3..1.0f64,
    ) {
        let game = ProjectionGame::anisotropic().game();
        let a = vec![eta; 28];
        let op = make_cgd_operator(
            |v: &[f64]| Ok(game.d_xy(&wg, &wd, v).unwrap()),
            |u: &[f64]| Ok(game.d_yx(&wg, &wd, u).unwrap()),
            &a,
            &a,
        );
        let az = op.apply(&z).unwrap();
        prop_assert!(dot(&z, &az) >= dot(&z, &z) * (1.0 - 1e-12));
    }

    #[test]
    fn runs_are_deterministic(seed in 0u64..1000, eta in 1e-3..0.05f64) {
        let game = ProjectionGame::anisotropic().game();
        let (wg, wd) = icrlab::games::init_projection_weights(&mut rng(seed));
        let run = || {
            let opt = OptimizerKind::Cgd { eta };
            let mut s = opt.init_state(wg.clone(), wd.clone());
            for _ in 0..5 {
                opt.step(&game, &mut s).unwrap();
            }
            s
        };
        let (a, b) = (run(), run());
        prop_assert!(a.x.iter().zip(&b.x).all(|(p, q)| p.to_bits() == q.to_bits()));
        prop_assert!(a.y.iter().zip(&b.y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn closed_form_roots_match_eigen_solver(
        a in -3.0..3.0f64, b in -12.0..12.0f64, c in -3.0..3.0f64,
        ex in 1e-3..0.5f64, ey in 1e-3..0.5f64,
    ) {
        let game = QuadraticGame::new(a, b, c).game();
        let rep = analyze(&game, UpdateRule::Simgd, StepSizes::new(ex, ey).unwrap(), &[0.0], &[0.0]).unwrap();
        let moduli = update_map_moduli_1d(2.0 * a, b, 2.0 * c, ex, ey);
        let rho = moduli[0].max(moduli[1]);
        prop_assert!((rep.spectral_radius - rho).abs() < 1e-8 * (1.0 + rho));
        // roots of M = I - J
        let roots = eigvals_of_m_1d(2.0 * a, b, 2.0 * c, ex, ey);
        for r in roots {
            let lam = num_complex::Complex64::new(1.0, 0.0) - r;
            let best = rep.eigenvalues.iter().map(|e| (e - lam).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(best < 1e-8 * (1.0 + lam.norm()));
        }
        let (p, q) = char_poly_1d(2.0 * a, b, 2.0 * c, ex, ey);
        prop_assert!((roots[0] + roots[1] + p).norm() < 1e-10 * (1.0 + p.abs()));
        prop_assert!((roots[0] * roots[1] - q).norm() < 1e-10 * (1.0 + q.abs()));
    }

    /// Positive real parts of M's eigenvalues mean I - gamma M contracts for
    /// small enough gamma; bisection finds such a gamma above 1e-4.
    #[test]
    fn positive_real_part_implies_small_step_stability(
        a in -3.0..3.0f64, b in -12.0..12.0f64, c in -3.0..3.0f64,
        ex in 1e-2..1.0f64, ey in 1e-2..1.0f64,
    ) {
        let (dxx, dyy) = (2.0 * a, 2.0 * c);
        prop_assume!(positive_real_part_check(dxx, b, dyy, ex, ey));
        let rho = |g: f64| {
            let m = update_map_moduli_1d(dxx, b, dyy, g * ex, g * ey);
            m[0].max(m[1])
        };
        let mut gamma = 1.0;
        while rho(gamma) >= 1.0 && gamma > 1e-4 {
            gamma *= 0.5;
        }
        prop_assert!(rho(gamma) < 1.0, "no contracting gamma down to {gamma}");
        let roots = eigvals_of_m_1d(dxx, b, dyy, ex, ey);
        prop_assert!(roots.iter().all(|r| r.re > 0.0));
    }

    #[test]
    fn bilinear_cgd_always_contracts_simgd_never(b in 0.1..20.0f64, eta in 1e-3..2.0f64) {
        let game = QuadraticGame::bilinear(b).game();
        let steps = StepSizes::uniform(eta).unwrap();
        let cgd = analyze(&game, UpdateRule::Cgd, steps, &[0.0], &[0.0]).unwrap();
        let sim = analyze(&game, UpdateRule::Simgd, steps, &[0.0], &[0.0]).unwrap();
        let exact = 1.0 / (1.0 + eta * eta * b * b).sqrt();
        prop_assert!((cgd.spectral_radius - exact).abs() < 1e-6);
        prop_assert!(cgd.spectral_radius < 1.0);
        prop_assert!(sim.spectral_radius > 1.0);
        prop_assert_eq!(sim.classification, Classification::Unstable);
    }

    #[test]
    fn decoupled_simgd_is_two_gradient_steps(
        a in 0.1..3.0f64, c in -3.0..-0.1f64, x in -2.0..2.0f64, y in -2.0..2.0f64,
        ex in 1e-3..0.2f64, ey in 1e-3..0.2f64,
    ) {
        let game = QuadraticGame::new(a, 0.0, c).game();
        let mut s = OptimizerState::new(vec![x], vec![y]);
        simgd_step(&game, &mut s, StepSizes::new(ex, ey).unwrap()).unwrap();
        prop_assert!((s.x[0] - (1.0 - 2.0 * a * ex) * x).abs() < 1e-14);
        prop_assert!((s.y[0] - (1.0 + 2.0 * c * ey) * y).abs() < 1e-14);
    }
}
