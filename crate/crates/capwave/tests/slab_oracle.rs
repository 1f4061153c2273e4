//! The Green's-function vertical solver against an independent banded
//! finite-difference oracle, per single horizontal mode.

mod common;

use std::sync::Arc;

use capwave::slab::{ForcingTriple, SlabField, SlabSolver};
use capwave::{GridSpec, SurfaceField};
use common::{band_limited_random, eval_poly, fd_mode_solution, fd_richardson, interp_uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The oracle itself against a closed form: rhs = 0, w'(0) = 0, w'(1) = 1
/// has w(y) = (e^{-k(1-y)} + e^{-k(1+y)}) / (k (1 - e^{-2k})).
#[test]
fn fd_oracle_reproduces_closed_form() {
    for &kappa in &[1.0, 12.0, 40.0] {
        let grid_vals = fd_richardson(kappa, &|_| 0.0, 0.0, 1.0, 1280);
        let d = 1.0 - (-2.0 * kappa).exp();
        let scale = ((-0.0f64).exp() + (-2.0 * kappa).exp()) / (kappa * d);
        for &y in &[0.0, 0.31, 0.5, 0.77, 0.93, 1.0] {
            let want =
                ((-kappa * (1.0 - y)).exp() + (-kappa * (1.0 + y)).exp()) / (kappa * d);
            let got = interp_uniform(&grid_vals, y);
            assert!(
                (got - want).abs() < 2e-10 * scale,
                "kappa {kappa} y {y}: {got} vs {want}"
            );
        }
    }
}

struct Case {
    kappa: f64,
    rel_err: f64,
}

fn run_cases(grid: &Arc<GridSpec>, rng: &mut ChaCha8Rng, count: usize, force_high: bool) -> Vec<Case> {
    let solver = SlabSolver::new(grid);
    let y_nodes = solver.y_nodes().to_vec();
    let mut out = Vec::new();
    for case in 0..count {
        let (amx, amz) = if force_high && case == count - 1 {
            (5usize, 5usize)
        } else {
            (rng.gen_range(1..=5), rng.gen_range(0..=5usize))
        };
        let k1 = 2.0 * std::f64::consts::PI * amx as f64 / grid.l_x;
        let k2 = 2.0 * std::f64::consts::PI * amz as f64 / grid.l_z;
        let kappa = (k1 * k1 + k2 * k2).sqrt();

        let mut rand_poly = || -> Vec<f64> {
            (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let p1 = rand_poly();
        let p2 = rand_poly();
        let mut p3 = rand_poly();
        let shift = eval_poly(&p3, 0.0);
        p3[0] -= shift;

        // Rotate which pieces are active: companion-kernel path, divergence
        // path, and the full superposition with a boundary datum.
        let (cs, xi_ab) = match case % 3 {
            0 => {
                let c3 = rng.gen_range(-1.0..1.0);
                let s3 = rng.gen_range(-1.0..1.0);
                ([0.0, 0.0, 0.0, 0.0, c3, s3], [0.0, 0.0])
            }
            1 => {
                let mut v = [0.0; 6];
                for slot in 0..4 {
                    v[slot] = rng.gen_range(-1.0..1.0);
                }
                (v, [0.0, 0.0])
            }
            _ => {
                let mut v = [0.0; 6];
                for item in v.iter_mut() {
                    *item = rng.gen_range(-1.0..1.0);
                }
                (v, [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            }
        };
        let [c1, s1, c2, s2, c3, s3] = cs;

        let theta = |x: f64, z: f64| k1 * x + k2 * z;
        let f = ForcingTriple {
            f1: SlabField::from_fn(grid, |y, x, z| {
                eval_poly(&p1, y) * (c1 * theta(x, z).cos() + s1 * theta(x, z).sin())
            }),
            f2: SlabField::from_fn(grid, |y, x, z| {
                eval_poly(&p2, y) * (c2 * theta(x, z).cos() + s2 * theta(x, z).sin())
            }),
            f3: SlabField::from_fn(grid, |y, x, z| {
                eval_poly(&p3, y) * (c3 * theta(x, z).cos() + s3 * theta(x, z).sin())
            }),
        };
        let xi = SurfaceField::from_fn(grid, |x, z| {
            xi_ab[0] * theta(x, z).cos() + xi_ab[1] * theta(x, z).sin()
        });

        let sol = solver.solve_inhomogeneous(&f, &xi).expect("solve");
        let (a, b) = fd_mode_solution(k1, k2, &p1, &p2, &p3, cs, xi_ab, &y_nodes);
        let scale = a
            .iter()
            .chain(&b)
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(1e-9);

        let mut worst = 0.0f64;
        for (iy, (&ai, &bi)) in a.iter().zip(&b).enumerate() {
            let level = sol.u.level(iy);
            for ix in 0..grid.n_x {
                for iz in 0..grid.n_z {
                    let t = theta(grid.x(ix), grid.z(iz));
                    let want = ai * t.cos() + bi * t.sin();
                    let got = level[grid.idx(ix, iz)];
                    worst = worst.max((got - want).abs());
                }
            }
        }
        // The top vertical derivative must equal f3 + xi exactly.
        let top = grid.n_y - 1;
        let p3_top = eval_poly(&p3, 1.0);
        for ix in 0..grid.n_x {
            for iz in 0..grid.n_z {
                let t = theta(grid.x(ix), grid.z(iz));
                let want = (c3 * p3_top + xi_ab[0]) * t.cos() + (s3 * p3_top + xi_ab[1]) * t.sin();
                let got = sol.u_y.level(top)[grid.idx(ix, iz)];
                assert!(
                    (got - want).abs() < 1e-10 * want.abs().max(1.0),
                    "top derivative off at mode ({amx},{amz})"
                );
            }
        }
        out.push(Case {
            kappa,
            rel_err: worst / scale,
        });
    }
    out
}

#[test]
fn greens_solver_matches_banded_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let wide = Arc::new(GridSpec::new(
        16,
        16,
        16,
        2.0 * std::f64::consts::PI,
        2.0 * std::f64::consts::PI,
        2.0,
        0.2,
        1.0,
        0.9,
    )
    .unwrap());
    let tight = Arc::new(GridSpec::new(16, 16, 16, 1.0, 1.0, 2.0, 0.2, 1.0, 0.9).unwrap());

    let mut cases = run_cases(&wide, &mut rng, 6, false);
    cases.extend(run_cases(&tight, &mut rng, 6, true));

    let mut saw_high = false;
    for c in &cases {
        assert!(
            c.rel_err < 1e-8,
            "kappa {:.2}: relative error {:.3e}",
            c.kappa,
            c.rel_err
        );
        if c.kappa >= 30.0 {
            saw_high = true;
        }
    }
    assert!(saw_high, "suite never exercised kappa >= 30");
}

/// Random small eta: the energy identity ties the volume integral to the
/// surface pairing, cross-checking the full fixed-point path.
#[test]
fn energy_identity_random_small_eta() {
    let grid = Arc::new(GridSpec::new(
        32,
        32,
        12,
        2.0 * std::f64::consts::PI,
        2.0 * std::f64::consts::PI,
        2.0,
        0.2,
        1.0,
        0.9,
    )
    .unwrap());
    let solver = SlabSolver::new(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let eta = band_limited_random(&grid, &mut rng, 5, 0.05);
        let xi = band_limited_random(&grid, &mut rng, 5, 1.0).deriv_x();
        let sol = solver
            .solve_transformed_bvp(&eta, &xi, 1e-12, 60)
            .expect("solve");
        let pairing = xi.inner(&sol.trace);
        let energy = solver.dirichlet_energy(&eta, &sol);
        assert!(pairing > 0.0);
        assert!(
            (energy - pairing).abs() < 1e-6 * pairing,
            "{energy} vs {pairing}"
        );
    }
}
