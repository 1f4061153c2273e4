//! Shared helpers for the integration tests: an independent banded
//! finite-difference oracle for the per-mode vertical problem, polynomial
//! utilities, and deterministic random-field generators.
#![allow(dead_code)]

use std::sync::Arc;

use capwave::{GridSpec, SurfaceField};
use num_complex::Complex64;
use rand::Rng;

// ----- polynomial helpers (monomial basis) ------------------------------

pub fn eval_poly(c: &[f64], y: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * y + ci)
}

pub fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &ci)| i as f64 * ci)
        .collect()
}

// ----- banded finite-difference oracle ----------------------------------

/// Second-order central-difference solve of
/// `w'' - kappa^2 w = rhs(y)` on `[0, 1]` with `w'(0) = d0`, `w'(1) = d1`,
/// ghost-point Neumann rows, Thomas elimination; `m + 1` uniform nodes.
pub fn fd_two_point(kappa: f64, rhs: &dyn Fn(f64) -> f64, d0: f64, d1: f64, m: usize) -> Vec<f64> {
    let h = 1.0 / m as f64;
    let n = m + 1;
    let k2 = kappa * kappa;
    let ih2 = 1.0 / (h * h);
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut b = vec![0.0; n];
    for i in 1..m {
        sub[i] = ih2;
        diag[i] = -2.0 * ih2 - k2;
        sup[i] = ih2;
        b[i] = rhs(i as f64 * h);
    }
    diag[0] = -2.0 * ih2 - k2;
    sup[0] = 2.0 * ih2;
    b[0] = rhs(0.0) + 2.0 * d0 / h;
    diag[m] = -2.0 * ih2 - k2;
    sub[m] = 2.0 * ih2;
    b[m] = rhs(1.0) - 2.0 * d1 / h;

    // Thomas elimination.
    let mut c_star = vec![0.0; n];
    let mut d_star = vec![0.0; n];
    c_star[0] = sup[0] / diag[0];
    d_star[0] = b[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c_star[i - 1];
        c_star[i] = sup[i] / denom;
        d_star[i] = (b[i] - sub[i] * d_star[i - 1]) / denom;
    }
    let mut w = vec![0.0; n];
    w[n - 1] = d_star[n - 1];
    for i in (0..n - 1).rev() {
        w[i] = d_star[i] - c_star[i] * w[i + 1];
    }
    w
}

/// Three-mesh Richardson extrapolation of [`fd_two_point`] (orders
/// h^2 / h^4 / h^6), returning values on the coarse `m0 + 1` node grid.
pub fn fd_richardson(
    kappa: f64,
    rhs: &dyn Fn(f64) -> f64,
    d0: f64,
    d1: f64,
    m0: usize,
) -> Vec<f64> {
    let u1 = fd_two_point(kappa, rhs, d0, d1, m0);
    let u2 = fd_two_point(kappa, rhs, d0, d1, 2 * m0);
    let u4 = fd_two_point(kappa, rhs, d0, d1, 4 * m0);
    (0..=m0)
        .map(|i| {
            let r12 = (4.0 * u2[2 * i] - u1[i]) / 3.0;
            let r24 = (4.0 * u4[4 * i] - u2[2 * i]) / 3.0;
            (16.0 * r24 - r12) / 15.0
        })
        .collect()
}

/// Six-point Lagrange interpolation of uniform-grid values at `y`.
pub fn interp_uniform(vals: &[f64], y: f64) -> f64 {
    let m = vals.len() - 1;
    let h = 1.0 / m as f64;
    let centre = (y * m as f64).floor() as isize;
    let j0 = (centre - 2).clamp(0, m as isize - 5) as usize;
    let mut acc = 0.0;
    for a in 0..6 {
        let ya = (j0 + a) as f64 * h;
        let mut w = 1.0;
        for b in 0..6 {
            if a != b {
                let yb = (j0 + b) as f64 * h;
                w *= (y - yb) / (ya - yb);
            }
        }
        acc += w * vals[j0 + a];
    }
    acc
}

/// Cosine/sine vertical profiles of the exact single-mode solution of the
/// transformed problem with forcing `F_j = p_j(y) (c_j cos t + s_j sin t)`,
/// `t = k1 x + k2 z`, boundary datum `xi = a cos t + b sin t`, evaluated at
/// `y_eval`. Requires `p3(0) = 0` so the bottom boundary condition is the
/// plain `u_y(0) = 0` of the strong form.
#[allow(clippy::too_many_arguments)]
pub fn fd_mode_solution(
    k1: f64,
    k2: f64,
    p1: &[f64],
    p2: &[f64],
    p3: &[f64],
    cs: [f64; 6],
    xi_ab: [f64; 2],
    y_eval: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    assert!(eval_poly(p3, 0.0).abs() < 1e-14, "oracle requires p3(0) = 0");
    let kappa = (k1 * k1 + k2 * k2).sqrt();
    let [c1, s1, c2, s2, c3, s3] = cs;
    let dp3 = poly_deriv(p3);
    let rhs_cos = |y: f64| {
        s1 * k1 * eval_poly(p1, y) + s2 * k2 * eval_poly(p2, y) + c3 * eval_poly(&dp3, y)
    };
    let rhs_sin = |y: f64| {
        -c1 * k1 * eval_poly(p1, y) - c2 * k2 * eval_poly(p2, y) + s3 * eval_poly(&dp3, y)
    };
    let p3_top = eval_poly(p3, 1.0);
    let m0 = 1280;
    let a_grid = fd_richardson(kappa, &rhs_cos, 0.0, c3 * p3_top + xi_ab[0], m0);
    let b_grid = fd_richardson(kappa, &rhs_sin, 0.0, s3 * p3_top + xi_ab[1], m0);
    let a = y_eval.iter().map(|&y| interp_uniform(&a_grid, y)).collect();
    let b = y_eval.iter().map(|&y| interp_uniform(&b_grid, y)).collect();
    (a, b)
}

// ----- random fields ----------------------------------------------------

/// Mean-zero random real field with spectrum supported on
/// `|m_x|, |m_z| <= max_mode`, rescaled to the requested sup norm.
/// Random field whose spectrum decays like a Gaussian of width
/// `max_mode / 2.5` before a hard cutoff, rescaled to the given sup norm.
/// Gradient checks need such decay: undecayed spectra put product modes
/// above the dealias mask, where formula gradients cannot follow.
pub fn smooth_random(
    grid: &Arc<GridSpec>,
    rng: &mut impl Rng,
    max_mode: usize,
    sup: f64,
) -> SurfaceField {
    let raw = band_limited_random(grid, rng, max_mode, 1.0);
    let sigma = max_mode as f64 / 2.5;
    let scale = 2.0 * std::f64::consts::PI;
    let shaped = raw.apply_multiplier(|k1, k2, _| {
        // Convert wavenumbers back to integer-mode magnitudes on the box.
        let mx = k1 * grid.l_x / scale;
        let mz = k2 * grid.l_z / scale;
        (-(mx * mx + mz * mz) / (2.0 * sigma * sigma)).exp()
    });
    let max = shaped.max_abs();
    if max == 0.0 {
        shaped
    } else {
        shaped.scaled(sup / max)
    }
}

pub fn band_limited_random(
    grid: &Arc<GridSpec>,
    rng: &mut impl Rng,
    max_mode: usize,
    sup: f64,
) -> SurfaceField {
    let len = grid.len();
    let mut spec = vec![Complex64::default(); len];
    let half_x = grid.n_x / 2;
    let half_z = grid.n_z / 2;
    for mx in -(max_mode as isize)..=(max_mode as isize) {
        for mz in -(max_mode as isize)..=(max_mode as isize) {
            if mx == 0 && mz == 0 {
                continue;
            }
            if mx.unsigned_abs() >= half_x || mz.unsigned_abs() >= half_z {
                continue;
            }
            // Fill only one representative of each conjugate pair.
            if mx < 0 || (mx == 0 && mz < 0) {
                continue;
            }
            let ix = mx as usize;
            let iz = ((mz + grid.n_z as isize) % grid.n_z as isize) as usize;
            let jx = (grid.n_x - ix) % grid.n_x;
            let jz = (grid.n_z - iz) % grid.n_z;
            let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            spec[grid.idx(ix, iz)] = c;
            spec[grid.idx(jx, jz)] = c.conj();
        }
    }
    let raw = SurfaceField::from_spectrum(grid, spec).expect("matching grid");
    let max = raw.max_abs();
    if max == 0.0 {
        raw
    } else {
        raw.scaled(sup / max)
    }
}
