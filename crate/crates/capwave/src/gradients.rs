//! L²-gradients of the surface functionals, the descent preconditioner,
//! and finite-difference verification plumbing.

use crate::error::Result;
use crate::field::SurfaceField;
use crate::functionals::{
    breakdown_from_parts, eval_k, eval_l_with_solve, penalty_rho, penalty_rho_prime,
    FunctionalBreakdown, LParts, PenaltyParams,
};
use crate::slab::{apply_k0, apply_l0, SlabSolver, SurfaceSolve, WarmStart};

/// A gradient together with the outcome of an optional finite-difference
/// verification of it.
#[derive(Debug)]
pub struct GradientReport {
    pub grad: SurfaceField,
    pub fd_relative_error: Option<f64>,
}

/// Gradient of the potential energy:
/// `-(beta eta_x / W)_x - (beta eta_z / W)_z + eta` with `W = sqrt(1+q)`;
/// the nonlinear flux terms are dealiased before differentiation.
pub fn grad_k(eta: &SurfaceField) -> SurfaceField {
    let g = eta.grid();
    let beta = g.beta;
    let ex = eta.deriv_x();
    let ez = eta.deriv_z();
    let mut fx = vec![0.0; g.len()];
    let mut fz = vec![0.0; g.len()];
    for i in 0..g.len() {
        let q = ex.values()[i] * ex.values()[i] + ez.values()[i] * ez.values()[i];
        let w = (1.0 + q).sqrt();
        fx[i] = beta * ex.values()[i] / w;
        fz[i] = beta * ez.values()[i] / w;
    }
    let fx = SurfaceField::from_values(g, fx).expect("grid shape").dealias();
    let fz = SurfaceField::from_values(g, fz).expect("grid shape").dealias();
    eta.axpy(-1.0, &fx.deriv_x()).axpy(-1.0, &fz.deriv_z())
}

/// Gradient of the momentum functional from the surface data of the slab
/// solve with Neumann datum `eta_x`:
/// `-(u_x^2 + u_z^2)/2 + u_y^2 (1+q) / (2(1+eta)^2)` at the surface, plus
/// `K(eta) eta = -u_x|_{y=1}`.
fn assemble_grad_l(eta: &SurfaceField, surface: &SurfaceSolve) -> SurfaceField {
    let g = eta.grid();
    let tx = surface.trace.deriv_x();
    let tz = surface.trace.deriv_z();
    let ty = &surface.top_uy;
    let ex = eta.deriv_x();
    let ez = eta.deriv_z();
    let mut vals = vec![0.0; g.len()];
    for i in 0..g.len() {
        let om = 1.0 + eta.values()[i];
        let q = ex.values()[i] * ex.values()[i] + ez.values()[i] * ez.values()[i];
        let tyv = ty.values()[i];
        vals[i] = -0.5
            * (tx.values()[i] * tx.values()[i] + tz.values()[i] * tz.values()[i])
            + tyv * tyv * (1.0 + q) / (2.0 * om * om);
    }
    SurfaceField::from_values(g, vals)
        .expect("grid shape")
        .axpy(-1.0, &tx)
}

/// Momentum gradient sharing one slab solve with the functional value.
pub fn grad_l_with_solve(
    solver: &SlabSolver,
    eta: &SurfaceField,
    tol: f64,
    warm: Option<&WarmStart>,
) -> Result<(SurfaceField, LParts, WarmStart)> {
    let (ev, warm_out) = eval_l_with_solve(solver, eta, tol, warm)?;
    let grad = assemble_grad_l(eta, &ev.surface);
    Ok((grad, ev.parts, warm_out))
}

pub fn grad_l(solver: &SlabSolver, eta: &SurfaceField, tol: f64) -> Result<SurfaceField> {
    Ok(grad_l_with_solve(solver, eta, tol, None)?.0)
}

/// Gradient of the cubic momentum part by its closed formula:
/// `-eta_x^2/2 - eta eta_xx - (K0 eta)^2/2 - (L0 eta)^2/2
///  - K0(eta K0 eta) - L0(eta L0 eta)`, products dealiased.
pub fn grad_l3(eta: &SurfaceField) -> SurfaceField {
    let g = eta.grid();
    let ex = eta.deriv_x();
    let exx = ex.deriv_x();
    let k0 = apply_k0(eta);
    let l0 = apply_l0(eta);
    let mut local = vec![0.0; g.len()];
    let mut ek = vec![0.0; g.len()];
    let mut el = vec![0.0; g.len()];
    for i in 0..g.len() {
        let e = eta.values()[i];
        local[i] = -0.5 * ex.values()[i] * ex.values()[i] - e * exx.values()[i]
            - 0.5 * k0.values()[i] * k0.values()[i]
            - 0.5 * l0.values()[i] * l0.values()[i];
        ek[i] = e * k0.values()[i];
        el[i] = e * l0.values()[i];
    }
    let local = SurfaceField::from_values(g, local)
        .expect("grid shape")
        .dealias();
    let ek = apply_k0(&SurfaceField::from_values(g, ek).expect("grid shape").dealias());
    let el = apply_l0(&SurfaceField::from_values(g, el).expect("grid shape").dealias());
    local.axpy(-1.0, &ek).axpy(-1.0, &el)
}

/// Gradient of the reduced objective `K'(eta) - (mu/L)^2 L'(eta)`, with the
/// breakdown of the matching values from the same solve.
pub fn grad_jmu_with_solve(
    solver: &SlabSolver,
    eta: &SurfaceField,
    mu: f64,
    tol: f64,
    warm: Option<&WarmStart>,
) -> Result<(SurfaceField, FunctionalBreakdown, WarmStart)> {
    let k = eval_k(eta);
    let (gl, parts, warm_out) = grad_l_with_solve(solver, eta, tol, warm)?;
    let breakdown = breakdown_from_parts(k, parts, mu, tol, 0.0)?;
    let lam = breakdown.speed_lambda;
    let grad = grad_k(eta).axpy(-(lam * lam), &gl);
    Ok((grad, breakdown, warm_out))
}

pub fn grad_jmu(solver: &SlabSolver, eta: &SurfaceField, mu: f64, tol: f64) -> Result<SurfaceField> {
    Ok(grad_jmu_with_solve(solver, eta, mu, tol, None)?.0)
}

/// Gradient of the penalised objective: adds
/// `2 rho'(|eta|_3^2) F^{-1}[(1+|k|^2)^3 eta_hat]` to [`grad_jmu`].
pub fn grad_jrho_with_solve(
    solver: &SlabSolver,
    eta: &SurfaceField,
    mu: f64,
    p: &PenaltyParams,
    tol: f64,
    warm: Option<&WarmStart>,
) -> Result<(SurfaceField, FunctionalBreakdown, WarmStart)> {
    let t = eta.h3_norm_sq();
    let rho = penalty_rho(t, p)?;
    let rho_prime = penalty_rho_prime(t, p)?;
    let k = eval_k(eta);
    let (gl, parts, warm_out) = grad_l_with_solve(solver, eta, tol, warm)?;
    let breakdown = breakdown_from_parts(k, parts, mu, tol, rho)?;
    let lam = breakdown.speed_lambda;
    let mut grad = grad_k(eta).axpy(-(lam * lam), &gl);
    if rho_prime != 0.0 {
        let weighted = eta.apply_multiplier(|_, _, km| {
            let w = 1.0 + km * km;
            w * w * w
        });
        grad = grad.axpy(2.0 * rho_prime, &weighted);
    }
    Ok((grad, breakdown, warm_out))
}

/// Penalised-objective gradient; the formal limit at `eta = 0` is the zero
/// field, returned directly without a solve.
pub fn grad_jrho(
    solver: &SlabSolver,
    eta: &SurfaceField,
    mu: f64,
    p: &PenaltyParams,
    tol: f64,
) -> Result<SurfaceField> {
    if eta.max_abs() == 0.0 {
        return Ok(SurfaceField::zeros(eta.grid()));
    }
    Ok(grad_jrho_with_solve(solver, eta, mu, p, tol, None)?.0)
}

/// Descent preconditioner `1/(1 + beta |k|^2)`: the inverse of the dominant
/// quadratic-Hessian symbol, flat weight 1 at `k = 0`.
pub fn precondition(g: &SurfaceField) -> SurfaceField {
    let beta = g.grid().beta;
    g.apply_multiplier(move |_, _, km| 1.0 / (1.0 + beta * km * km))
}

/// Best relative error over a three-step central-difference sweep between
/// the directional derivative of `f` and `<grad, delta>`; the denominator
/// saturates at one so tiny pairings are judged absolutely.
pub fn fd_relative_error(
    f: impl Fn(&SurfaceField) -> Result<f64>,
    grad: &SurfaceField,
    eta: &SurfaceField,
    delta: &SurfaceField,
) -> Result<f64> {
    let pair = grad.inner(delta);
    let denom = pair.abs().max(1.0);
    let mut best = f64::INFINITY;
    for &h in &[1e-3, 1e-4, 1e-5] {
        let fp = f(&eta.axpy(h, delta))?;
        let fm = f(&eta.axpy(-h, delta))?;
        let fd = (fp - fm) / (2.0 * h);
        best = best.min((fd - pair).abs() / denom);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{eval_jmu, eval_jrho, eval_l, eval_l3};
    use crate::grid::GridSpec;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid(beta: f64) -> Arc<GridSpec> {
        Arc::new(GridSpec::new(32, 32, 12, 2.0 * PI, 2.0 * PI, beta, 0.2, 1.0, 0.9).unwrap())
    }

    fn coth(x: f64) -> f64 {
        1.0 / x.tanh()
    }

    /// Multi-mode profile comfortably inside the dealias band, with the
    /// closed mode triad (1,0)+(1,1)=(2,1) so cubic integrals are nonzero.
    fn smooth_eta(g: &Arc<GridSpec>, a: f64) -> SurfaceField {
        SurfaceField::from_fn(g, |x, z| {
            a * (x.cos()
                + 0.5 * (x + z).cos()
                + 0.3 * (2.0 * x + z).cos()
                + 0.2 * (2.0 * x - z).sin())
        })
    }

    #[test]
    fn potential_gradient_examples() {
        let g = grid(0.5);
        assert_eq!(grad_k(&SurfaceField::zeros(&g)).max_abs(), 0.0);
        // Linearization -beta eta_xx + eta on a small cosine.
        let eps = 1e-3;
        let eta = SurfaceField::from_fn(&g, |x, _| eps * x.cos());
        let want = eta.scaled(1.0 + 0.5);
        let diff = grad_k(&eta).axpy(-1.0, &want).max_abs();
        // The exact expansion carries an O(eps^3) flux correction.
        assert!(diff < 1e-6 * want.max_abs(), "linearization defect {diff}");
        // Finite-difference directional check.
        let eta = smooth_eta(&g, 0.05);
        let delta = smooth_eta(&g, 1.0).shift_cells(3, 7);
        let delta = delta.scaled(1.0 / delta.norm_l2());
        let err = fd_relative_error(|e| Ok(eval_k(e).k_total), &grad_k(&eta), &eta, &delta).unwrap();
        assert!(err < 1e-8, "fd error {err:e}");
    }

    #[test]
    fn momentum_gradient_examples() {
        let g = grid(2.0);
        let solver = SlabSolver::new(&g);
        let zero = grad_l(&solver, &SurfaceField::zeros(&g), 1e-12).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        // Leading order is the flat operator: coth(1) cos(x).
        let eps = 1e-5;
        let eta = SurfaceField::from_fn(&g, |x, _| eps * x.cos());
        let want = eta.scaled(coth(1.0));
        let gl = grad_l(&solver, &eta, 1e-13).unwrap();
        let diff = gl.axpy(-1.0, &want).max_abs() / want.max_abs();
        assert!(diff < 1e-3, "linearization defect {diff}");
        // Finite-difference directional check at a genuinely nonlinear eta.
        let eta = smooth_eta(&g, 0.05);
        let delta = smooth_eta(&g, 1.0).shift_cells(5, 2);
        let delta = delta.scaled(1.0 / delta.norm_l2());
        let gl = grad_l(&solver, &eta, 1e-12).unwrap();
        let err = fd_relative_error(
            |e| Ok(eval_l(&solver, e, 1e-12)?.l_total),
            &gl,
            &eta,
            &delta,
        )
        .unwrap();
        assert!(err < 1e-6, "fd error {err:e}");
    }

    #[test]
    fn cubic_gradient_identities() {
        let g = grid(2.0);
        assert_eq!(grad_l3(&SurfaceField::zeros(&g)).max_abs(), 0.0);
        // Pairing with eta recovers three times the cubic part.
        let eta = smooth_eta(&g, 0.06);
        let pair = grad_l3(&eta).inner(&eta);
        let want = 3.0 * eval_l3(&eta);
        assert!(want.abs() > 1e-6, "cubic part degenerately small: {want}");
        assert!(
            (pair - want).abs() < 1e-8 * want.abs(),
            "{pair} vs {want}"
        );
        // Quadratic homogeneity is exact for a power-of-two scale.
        let doubled = grad_l3(&eta.scaled(2.0));
        let diff = doubled.scaled(0.25).axpy(-1.0, &grad_l3(&eta)).max_abs();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn quadratic_part_pairing() {
        let g = grid(2.0);
        let eta = smooth_eta(&g, 0.1);
        // <(1 + beta |k|^2) eta, eta> = 2 K2 for band-limited fields.
        let k2p = eta.apply_multiplier(|k1, k2, _| 1.0 + 2.0 * (k1 * k1 + k2 * k2));
        let pair = k2p.inner(&eta);
        let k2 = eval_k(&eta).k2;
        assert!((pair - 2.0 * k2).abs() < 1e-10 * k2, "{pair} vs {}", 2.0 * k2);
    }

    #[test]
    fn reduced_objective_gradient() {
        let g = grid(2.0);
        let solver = SlabSolver::new(&g);
        let eta = smooth_eta(&g, 0.05);
        let mu = 0.1;
        let (gj, b, _) = grad_jmu_with_solve(&solver, &eta, mu, 1e-12, None).unwrap();
        assert!(b.l_total > 0.0);
        let delta = smooth_eta(&g, 1.0).shift_cells(11, 3);
        let delta = delta.scaled(1.0 / delta.norm_l2());
        let err = fd_relative_error(
            |e| Ok(eval_jmu(&solver, e, mu, 1e-12)?.j_mu),
            &gj,
            &eta,
            &delta,
        )
        .unwrap();
        assert!(err < 1e-6, "fd error {err:e}");
        // The momentum term scales exactly as mu^2 at fixed eta.
        let gk = grad_k(&eta);
        let dmu = gj.axpy(-1.0, &gk);
        let gj_half = grad_jmu(&solver, &eta, mu / 2.0, 1e-12).unwrap();
        let dmu_half = gj_half.axpy(-1.0, &gk);
        let defect = dmu_half.scaled(4.0).axpy(-1.0, &dmu).max_abs();
        assert!(defect < 1e-12 * dmu.max_abs(), "mu^2 scaling defect {defect}");
    }

    #[test]
    fn penalised_gradient() {
        let g = grid(2.0);
        let solver = SlabSolver::new(&g);
        let eta = smooth_eta(&g, 0.05);
        let mu = 0.1;
        let t = eta.h3_norm_sq();
        // Inactive penalty: identical to the unpenalised gradient.
        let wide = PenaltyParams::new((2.0 * t).sqrt(), (4.0 * t).sqrt(), 1.0).unwrap();
        let gp = grad_jrho(&solver, &eta, mu, &wide, 1e-12).unwrap();
        let gj = grad_jmu(&solver, &eta, mu, 1e-12).unwrap();
        assert_eq!(gp.axpy(-1.0, &gj).max_abs(), 0.0);
        // Active band: finite differences see the penalty term.
        let tight = PenaltyParams::new((0.8 * t).sqrt(), (1.3 * t).sqrt(), 1.0).unwrap();
        let (gp, b, _) = grad_jrho_with_solve(&solver, &eta, mu, &tight, 1e-12, None).unwrap();
        assert!(b.penalty > 0.0);
        let delta = smooth_eta(&g, 1.0).shift_cells(2, 9);
        let delta = delta.scaled(1.0 / delta.norm_l2());
        let err = fd_relative_error(
            |e| {
                let bb = eval_jrho(&solver, e, mu, &tight, 1e-12)?;
                Ok(bb.j_mu + bb.penalty)
            },
            &gp,
            &eta,
            &delta,
        )
        .unwrap();
        assert!(err < 1e-6, "fd error {err:e}");
        // Outside the ball the gradient is refused; at zero it is zero.
        let narrow = PenaltyParams::new((0.1 * t).sqrt(), (0.5 * t).sqrt(), 1.0).unwrap();
        assert!(matches!(
            grad_jrho(&solver, &eta, mu, &narrow, 1e-12),
            Err(crate::error::Error::OutsideBall { .. })
        ));
        let z = grad_jrho(&solver, &SurfaceField::zeros(&g), mu, &wide, 1e-12).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn preconditioner_examples() {
        let g = grid(0.5);
        let c = SurfaceField::from_fn(&g, |x, _| x.cos());
        let pc = precondition(&c);
        let diff = pc.axpy(-1.0 / 1.5, &c).max_abs();
        assert!(diff < 1e-14);
        let flat = SurfaceField::from_fn(&g, |_, _| 3.25);
        assert!((precondition(&flat).max_abs() - 3.25).abs() < 1e-13);
        // High-mode damping 1/(1 + beta |k|^2) at |k| = 16, beta = 2.
        let g64 =
            Arc::new(GridSpec::new(64, 8, 12, 2.0 * PI, 2.0 * PI, 2.0, 0.2, 1.0, 0.9).unwrap());
        let hi = SurfaceField::from_fn(&g64, |x, _| (16.0 * x).cos());
        let phi = precondition(&hi);
        let diff = phi.axpy(-1.0 / 513.0, &hi).max_abs();
        assert!(diff < 1e-14, "high-mode damping defect {diff}");
        // Symmetric positive definiteness on an arbitrary field.
        let g2 = grid(2.0);
        let any = SurfaceField::from_fn(&g2, |x, z| (3.0 * x).sin() * z.cos() - 0.2 * x.cos());
        assert!(precondition(&any).inner(&any) > 0.0);
    }
}
