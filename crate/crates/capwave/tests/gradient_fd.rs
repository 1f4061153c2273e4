//! Central finite-difference verification of every gradient against its
//! functional, over random band-limited base profiles and directions.

mod common;

use capwave::functionals::{eval_jmu, eval_jrho, eval_k, eval_l, PenaltyParams};
use capwave::gradients::{
    fd_relative_error, grad_jmu, grad_jrho, grad_k, grad_l, precondition,
};
use capwave::grid::GridSpec;
use capwave::slab::SlabSolver;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

const TOL: f64 = 1e-6;

#[test]
fn all_gradients_pass_directional_checks() {
    let g = Arc::new(
        GridSpec::new(32, 32, 12, 2.0 * PI, 2.0 * PI, 2.0, 0.1, 1.0, 0.9).unwrap(),
    );
    let solver = SlabSolver::new(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mu = 0.1;

    let eta = common::smooth_random(&g, &mut rng, 5, 0.08);
    let t = eta.h3_norm_sq();
    // Penalty band placed so the base point sits inside the active region.
    let p = PenaltyParams::new((0.5 * t).sqrt(), (3.0 * t).sqrt(), 1.0).unwrap();

    let gk = grad_k(&eta);
    let gl = grad_l(&solver, &eta, 1e-12).unwrap();
    let gj = grad_jmu(&solver, &eta, mu, 1e-12).unwrap();
    let gp = grad_jrho(&solver, &eta, mu, &p, 1e-12).unwrap();

    let mut worst: [(f64, &str); 4] = [
        (0.0, "K"),
        (0.0, "L"),
        (0.0, "J_mu"),
        (0.0, "J_rho_mu"),
    ];
    for _ in 0..20 {
        let delta = common::smooth_random(&g, &mut rng, 5, 1.0);
        let delta = delta.scaled(1.0 / delta.norm_l2());

        let cases: [(f64, usize); 4] = [
            (
                fd_relative_error(|e| Ok(eval_k(e).k_total), &gk, &eta, &delta).unwrap(),
                0,
            ),
            (
                fd_relative_error(
                    |e| Ok(eval_l(&solver, e, 1e-12)?.l_total),
                    &gl,
                    &eta,
                    &delta,
                )
                .unwrap(),
                1,
            ),
            (
                fd_relative_error(
                    |e| Ok(eval_jmu(&solver, e, mu, 1e-12)?.j_mu),
                    &gj,
                    &eta,
                    &delta,
                )
                .unwrap(),
                2,
            ),
            (
                fd_relative_error(
                    |e| {
                        let b = eval_jrho(&solver, e, mu, &p, 1e-12)?;
                        Ok(b.j_mu + b.penalty)
                    },
                    &gp,
                    &eta,
                    &delta,
                )
                .unwrap(),
                3,
            ),
        ];
        for (err, idx) in cases {
            assert!(err <= TOL, "{}: fd error {err:e}", worst[idx].1);
            if err > worst[idx].0 {
                worst[idx].0 = err;
            }
        }
    }
    for (err, name) in worst {
        println!("{name}: worst fd relative error {err:.3e}");
    }
}

#[test]
fn preconditioner_is_positive_on_random_fields() {
    let g = Arc::new(
        GridSpec::new(32, 32, 12, 2.0 * PI, 2.0 * PI, 0.4, 0.1, 1.0, 0.9).unwrap(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let f = common::smooth_random(&g, &mut rng, 10, 1.0);
        if f.max_abs() == 0.0 {
            continue;
        }
        assert!(precondition(&f).inner(&f) > 0.0);
    }
}
