//! Surface functionals of the variational problem: the gravity-capillary
//! potential energy, the kinetic-momentum functional evaluated through the
//! slab operator, their graded parts, the reduced objective, its penalised
//! variant, and the physical energy/momentum pair.

use crate::error::{Error, Result};
use crate::field::SurfaceField;
use crate::slab::{apply_k0, apply_l0, km_coth, SlabSolver, SurfaceSolve, WarmStart};

/// Every scalar a single objective evaluation produces.
#[derive(Debug, Clone, Copy)]
pub struct FunctionalBreakdown {
    pub k2: f64,
    pub k_nl: f64,
    pub k_total: f64,
    pub l2: f64,
    pub l3: f64,
    pub l_nl: f64,
    pub l_total: f64,
    pub j_mu: f64,
    pub m_mu: f64,
    pub penalty: f64,
    pub speed_lambda: f64,
}

/// Penalty shape: zero inside the inner radius, rational-cubic blow-up at
/// the outer one.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyParams {
    pub m_tilde: f64,
    pub m_ball: f64,
    pub kappa_rho: f64,
}

impl PenaltyParams {
    pub fn new(m_tilde: f64, m_ball: f64, kappa_rho: f64) -> Result<Self> {
        if !(m_tilde > 0.0 && m_tilde < m_ball) {
            return Err(Error::invalid(
                "penalty",
                "inner radius must satisfy 0 < m_tilde < m_ball",
            ));
        }
        if kappa_rho <= 0.0 {
            return Err(Error::invalid("penalty", "kappa_rho must be positive"));
        }
        Ok(PenaltyParams {
            m_tilde,
            m_ball,
            kappa_rho,
        })
    }
}

/// Quadratic + quartic-and-higher split of the potential energy.
#[derive(Debug, Clone, Copy)]
pub struct KParts {
    pub k2: f64,
    pub k_nl: f64,
    pub k_total: f64,
}

/// Quadratic / cubic / remainder split of the momentum functional.
#[derive(Debug, Clone, Copy)]
pub struct LParts {
    pub l2: f64,
    pub l3: f64,
    pub l_nl: f64,
    pub l_total: f64,
}

/// Momentum functional together with the surface data of the slab solve it
/// consumed, so gradient assembly can reuse the same solution.
#[derive(Debug)]
pub struct LEvaluation {
    pub parts: LParts,
    pub surface: SurfaceSolve,
}

/// Potential energy `int { eta^2/2 + beta (sqrt(1 + |grad eta|^2) - 1) }`
/// split into its quadratic part and the (nonpositive) remainder.
pub fn eval_k(eta: &SurfaceField) -> KParts {
    let beta = eta.grid().beta;
    let ex = eta.deriv_x();
    let ez = eta.deriv_z();
    let cell = eta.grid().cell_area();
    let mut k2 = 0.0;
    let mut k_nl = 0.0;
    let mut k_total = 0.0;
    for i in 0..eta.grid().len() {
        let e = eta.values()[i];
        let q = ex.values()[i] * ex.values()[i] + ez.values()[i] * ez.values()[i];
        let root = (1.0 + q).sqrt();
        k2 += 0.5 * e * e + 0.5 * beta * q;
        // sqrt(1+q) - 1 - q/2 = -q^2 / (2 (1 + sqrt(1+q))^2), exactly.
        k_nl -= beta * q * q / (2.0 * (1.0 + root) * (1.0 + root));
        // sqrt(1+q) - 1 written as q/(1 + sqrt(1+q)): same value, no
        // cancellation when q is tiny.
        k_total += 0.5 * e * e + beta * q / (1.0 + root);
    }
    k2 *= cell;
    k_nl *= cell;
    k_total *= cell;
    let gap = (k_total - k2 - k_nl).abs();
    assert!(
        gap <= 1e-10 * k_total.abs().max(1e-30),
        "potential-energy split violated: gap {gap:e}"
    );
    KParts { k2, k_nl, k_total }
}

/// Quadratic momentum part, spectral: `(1/2) int (k1^2/|k|^2) |k| coth|k| |eta_hat|^2`.
pub fn eval_l2(eta: &SurfaceField) -> f64 {
    0.5 * eta.spectral_sum(|k1, _, km| {
        if km == 0.0 {
            0.0
        } else {
            (k1 * k1 / (km * km)) * km_coth(km)
        }
    })
}

/// Cubic momentum part by its closed formula:
/// `(1/2) int { eta_x^2 eta - eta (K0 eta)^2 - eta (L0 eta)^2 }`.
pub fn eval_l3(eta: &SurfaceField) -> f64 {
    let ex = eta.deriv_x();
    let k0 = apply_k0(eta);
    let l0 = apply_l0(eta);
    let cell = eta.grid().cell_area();
    let mut acc = 0.0;
    for i in 0..eta.grid().len() {
        let e = eta.values()[i];
        acc += ex.values()[i] * ex.values()[i] * e
            - e * k0.values()[i] * k0.values()[i]
            - e * l0.values()[i] * l0.values()[i];
    }
    0.5 * acc * cell
}

/// Full momentum functional `(1/2) <eta, K(eta) eta>` through one slab
/// solve with Neumann datum `eta_x`, exposing the solve for reuse.
pub fn eval_l_with_solve(
    solver: &SlabSolver,
    eta: &SurfaceField,
    tol: f64,
    warm: Option<&WarmStart>,
) -> Result<(LEvaluation, WarmStart)> {
    let xi = eta.deriv_x();
    let (surface, next_warm) =
        solver.solve_surface(eta, &xi, tol, crate::slab::DEFAULT_MAX_TERMS, warm)?;
    // <eta, -d/dx trace> = <eta_x, trace> exactly in the spectral product.
    let l_total = 0.5 * xi.inner(&surface.trace);
    let l2 = eval_l2(eta);
    let l3 = eval_l3(eta);
    let parts = LParts {
        l2,
        l3,
        l_nl: l_total - l2,
        l_total,
    };
    Ok((LEvaluation { parts, surface }, next_warm))
}

/// Momentum functional without the solve hand-back.
pub fn eval_l(solver: &SlabSolver, eta: &SurfaceField, tol: f64) -> Result<LParts> {
    Ok(eval_l_with_solve(solver, eta, tol, None)?.0.parts)
}

/// Reduced objective `K(eta) + mu^2 / L(eta)` with the full breakdown.
pub fn eval_jmu(
    solver: &SlabSolver,
    eta: &SurfaceField,
    mu: f64,
    tol: f64,
) -> Result<FunctionalBreakdown> {
    let k = eval_k(eta);
    let l = eval_l(solver, eta, tol)?;
    breakdown_from_parts(k, l, mu, tol, 0.0)
}

/// Penalised objective: adds `rho(|eta|_3^2)` to the breakdown.
pub fn eval_jrho(
    solver: &SlabSolver,
    eta: &SurfaceField,
    mu: f64,
    p: &PenaltyParams,
    tol: f64,
) -> Result<FunctionalBreakdown> {
    let k = eval_k(eta);
    let l = eval_l(solver, eta, tol)?;
    let penalty = penalty_rho(eta.h3_norm_sq(), p)?;
    breakdown_from_parts(k, l, mu, tol, penalty)
}

pub(crate) fn breakdown_from_parts(
    k: KParts,
    l: LParts,
    mu: f64,
    tol: f64,
    penalty: f64,
) -> Result<FunctionalBreakdown> {
    if l.l_total <= tol {
        return Err(Error::ZeroL { value: l.l_total });
    }
    let j_mu = k.k_total + mu * mu / l.l_total;
    let speed_lambda = mu / l.l_total;
    let m_mu = j_mu - k.k2 - mu * mu / l.l2;
    Ok(FunctionalBreakdown {
        k2: k.k2,
        k_nl: k.k_nl,
        k_total: k.k_total,
        l2: l.l2,
        l3: l.l3,
        l_nl: l.l_nl,
        l_total: l.l_total,
        j_mu,
        m_mu,
        penalty,
        speed_lambda,
    })
}

/// Penalty `rho(t)`: zero up to the inner radius squared, then
/// `kappa (t - m_tilde^2)^3 / (m_ball^2 - t)`, diverging at the outer one.
pub fn penalty_rho(t: f64, p: &PenaltyParams) -> Result<f64> {
    let inner = p.m_tilde * p.m_tilde;
    let outer = p.m_ball * p.m_ball;
    if t >= outer {
        return Err(Error::OutsideBall {
            norm_sq: t,
            ball_sq: outer,
        });
    }
    if t <= inner {
        return Ok(0.0);
    }
    let d = t - inner;
    Ok(p.kappa_rho * d * d * d / (outer - t))
}

/// Derivative of [`penalty_rho`] in `t`.
pub fn penalty_rho_prime(t: f64, p: &PenaltyParams) -> Result<f64> {
    let inner = p.m_tilde * p.m_tilde;
    let outer = p.m_ball * p.m_ball;
    if t >= outer {
        return Err(Error::OutsideBall {
            norm_sq: t,
            ball_sq: outer,
        });
    }
    if t <= inner {
        return Ok(0.0);
    }
    let d = t - inner;
    let rem = outer - t;
    Ok(p.kappa_rho * (3.0 * d * d * rem + d * d * d) / (rem * rem))
}

/// Physical energy and momentum of the surface/potential pair: the kinetic
/// term needs the inverse of the Neumann-to-Dirichlet operator, obtained by
/// preconditioned conjugate gradients on the mean-zero subspace.
pub fn eval_e_i(
    solver: &SlabSolver,
    eta: &SurfaceField,
    phi: &SurfaceField,
    tol: f64,
) -> Result<(f64, f64)> {
    if phi.mean().abs() > 1e-12 * phi.norm_l2().max(1.0) {
        return Err(Error::MeanNotZero { mean: phi.mean() });
    }
    let k = eval_k(eta);
    if phi.max_abs() == 0.0 {
        return Ok((k.k_total, 0.0));
    }
    let psi = invert_n(solver, eta, phi, tol)?;
    let e = 0.5 * phi.inner(&psi) + k.k_total;
    let i = eta.deriv_x().inner(phi);
    Ok((e, i))
}

/// Scaled Neumann datum of the travelling-wave relation:
/// `lambda_eta N(eta) eta_x` with `lambda_eta = mu / L(eta)`.
pub fn phi_from_eta(
    solver: &SlabSolver,
    eta: &SurfaceField,
    mu: f64,
    tol: f64,
) -> Result<SurfaceField> {
    let (ev, _) = eval_l_with_solve(solver, eta, tol, None)?;
    if ev.parts.l_total <= tol {
        return Err(Error::ZeroL {
            value: ev.parts.l_total,
        });
    }
    let lambda = mu / ev.parts.l_total;
    Ok(ev.surface.trace.scaled(lambda))
}

/// Solve `N(eta) psi = phi` by preconditioned conjugate gradients; the
/// preconditioner is the exact flat inverse `|k| tanh |k|`, so the flat
/// case converges in one step.
fn invert_n(
    solver: &SlabSolver,
    eta: &SurfaceField,
    phi: &SurfaceField,
    tol: f64,
) -> Result<SurfaceField> {
    let grid = phi.grid();
    let slab_tol = (tol * 1e-2).min(1e-10);
    let apply = |v: &SurfaceField| solver.apply_n(eta, v, slab_tol);
    let precond = |v: &SurfaceField| {
        v.apply_multiplier(|_, _, km| if km == 0.0 { 0.0 } else { km * km / km_coth(km) })
    };

    let phi_norm = phi.norm_l2();
    let mut psi = SurfaceField::zeros(grid);
    let mut r = phi.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.inner(&z);
    let max_iters = 200;
    let mut res = r.norm_l2();
    for it in 1..=max_iters {
        let ap = apply(&p)?;
        let pap = p.inner(&ap);
        if pap <= 0.0 {
            return Err(Error::InversionStalled {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        psi = psi.axpy(alpha, &p);
        r = r.axpy(-alpha, &ap);
        res = r.norm_l2();
        if res <= tol * phi_norm {
            return Ok(psi);
        }
        z = precond(&r);
        let rz_new = r.inner(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = z.axpy(beta, &p);
    }
    Err(Error::InversionStalled {
        iterations: max_iters,
        residual: res,
    })
}
