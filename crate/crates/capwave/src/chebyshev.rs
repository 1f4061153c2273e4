//! Chebyshev collocation primitives for the vertical direction.
//!
//! The slab solver represents every per-mode vertical profile by its values
//! on Chebyshev-Lobatto nodes mapped to `[0, 1]`. This module supplies the
//! node / weight tables, value <-> coefficient transforms, Clenshaw
//! evaluation, series calculus, Gauss-Legendre rules and a stable
//! polynomial-times-decaying-exponential integrator used when building the
//! Green's-function quadrature tables.

use std::f64::consts::PI;

/// Chebyshev-Lobatto nodes mapped to `[0, 1]`, ascending; endpoints exact.
pub fn lobatto_nodes_unit(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let big_n = (n - 1) as f64;
    (0..n)
        .map(|j| {
            if j == 0 {
                0.0
            } else if j == n - 1 {
                1.0
            } else {
                0.5 * (1.0 - (PI * j as f64 / big_n).cos())
            }
        })
        .collect()
}

/// Values at ascending Lobatto nodes -> Chebyshev coefficients in `t = 2y - 1`.
///
/// Row `m` of the returned `n x n` matrix produces the coefficient of `T_m`.
pub fn vals_to_coeffs_matrix(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let big_n = n - 1;
    let mut c = vec![0.0; n * n];
    for m in 0..n {
        for i in 0..=big_n {
            // Node x_i = cos(pi i / N) descending corresponds to ascending
            // node index N - i.
            let mut w = 2.0 / big_n as f64 * (PI * (m * i) as f64 / big_n as f64).cos();
            if i == 0 || i == big_n {
                w *= 0.5;
            }
            if m == 0 || m == big_n {
                w *= 0.5;
            }
            c[m * n + (big_n - i)] += w;
        }
    }
    c
}

/// Evaluate a Chebyshev series at `t` in `[-1, 1]` by Clenshaw recurrence.
pub fn cheb_eval(coeffs: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + coeffs[0]
}

/// Fill `out[m] = T_m(t)` for `m < out.len()`.
pub fn cheb_values_at(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = t;
    }
    for m in 2..out.len() {
        out[m] = 2.0 * t * out[m - 1] - out[m - 2];
    }
}

/// Coefficients of `d/dt` of a Chebyshev series (same length, top entry 0).
pub fn cheb_derivative_series(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    d[n - 2] = 2.0 * (n - 1) as f64 * coeffs[n - 1];
    for m in (0..n.saturating_sub(2)).rev() {
        let above = if m + 2 < n { d[m + 2] } else { 0.0 };
        d[m] = above + 2.0 * (m + 1) as f64 * coeffs[m + 1];
    }
    d[0] *= 0.5;
    d
}

/// Coefficients of the `t`-antiderivative of a Chebyshev series, normalised
/// so the series value at `t = -1` is zero. Output has one more entry.
pub fn cheb_antiderivative_series(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let mut a = vec![0.0; n + 1];
    for m in 1..=n {
        // The derivative recurrence runs in the doubled-c0 convention.
        let lower = if m == 1 { 2.0 * coeffs[0] } else { coeffs[m - 1] };
        let upper = if m + 1 < n { coeffs[m + 1] } else { 0.0 };
        a[m] = (lower - upper) / (2.0 * m as f64);
    }
    let at_minus_one = cheb_eval(&a, -1.0);
    a[0] -= at_minus_one;
    a
}

/// Clenshaw-Curtis weights for `[0, 1]` matching [`lobatto_nodes_unit`].
pub fn clenshaw_curtis_weights_unit(n: usize) -> Vec<f64> {
    let c = vals_to_coeffs_matrix(n);
    // integral over [0,1] of T_m(2y - 1) dy = (1/2) * int_{-1}^{1} T_m dt.
    let moments: Vec<f64> = (0..n)
        .map(|m| {
            if m % 2 == 0 {
                1.0 / (1.0 - (m * m) as f64)
            } else {
                0.0
            }
        })
        .collect();
    let mut w = vec![0.0; n];
    for m in 0..n {
        for j in 0..n {
            w[j] += moments[m] * c[m * n + j];
        }
    }
    w
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess for the i-th positive-side root.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, p_deriv) = legendre_with_derivative(n, x);
            dp = p_deriv;
            let step = p / p_deriv;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for m in 2..=n {
        let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
        p0 = p1;
        p1 = p2;
    }
    let deriv = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, deriv)
}

/// `int_l^r p(y) exp(a (y - s)) dy` for a Chebyshev series `p` given in
/// `t = 2y - 1` coordinates, where the caller guarantees `a (y - s) <= 0`
/// throughout `[l, r]` so that every evaluated exponential is bounded by 1.
///
/// Uses Gauss-Legendre when `|a| (r - l)` is moderate and exact repeated
/// integration by parts in the strongly decaying regime, where a fixed-order
/// quadrature would underresolve the boundary layer.
pub fn integrate_cheb_exp(
    coeffs: &[f64],
    l: f64,
    r: f64,
    a: f64,
    s: f64,
    gl: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let len = r - l;
    if len <= 0.0 {
        return 0.0;
    }
    if (a * len).abs() <= BY_PARTS_THRESHOLD {
        // Composite rule: cap the decay per subpanel so Gauss-Legendre
        // stays at machine precision, and skip subpanels whose whole
        // integrand sits below the relative floor of the result.
        let (nodes, weights) = gl;
        let n_sub = ((a * len).abs() / GL_PANEL_DECAY).ceil().max(1.0) as usize;
        let h = len / n_sub as f64;
        let mut acc = 0.0;
        for panel in 0..n_sub {
            let pl = l + panel as f64 * h;
            let pr = pl + h;
            let top = (a * (pl - s)).max(a * (pr - s));
            if top < -45.0 {
                continue;
            }
            let hal = 0.5 * h;
            let mid = 0.5 * (pl + pr);
            for (&t, &w) in nodes.iter().zip(weights) {
                let y = mid + hal * t;
                let p = cheb_eval(coeffs, 2.0 * y - 1.0);
                acc += w * hal * p * (a * (y - s)).exp();
            }
        }
        acc
    } else {
        // Antiderivative of p e^{a(y-s)} is e^{a(y-s)} sum_j (-1)^j p^(j) / a^{j+1};
        // derivatives of p in y carry the factor 2^j from t = 2y - 1.
        let mut total = 0.0;
        let mut series = coeffs.to_vec();
        let mut inv_a_pow = 1.0 / a;
        for _ in 0..coeffs.len() {
            let at_r = cheb_eval(&series, 2.0 * r - 1.0) * (a * (r - s)).exp();
            let at_l = cheb_eval(&series, 2.0 * l - 1.0) * (a * (l - s)).exp();
            total += (at_r - at_l) * inv_a_pow;
            series = cheb_derivative_series(&series);
            for v in series.iter_mut() {
                *v *= 2.0;
            }
            inv_a_pow = -inv_a_pow / a;
        }
        total
    }
}

/// Above this value of `|a| (r - l)` the by-parts branch takes over.
pub const BY_PARTS_THRESHOLD: f64 = 250.0;

/// Largest decay `|a| h` a single Gauss-Legendre subpanel is allowed to
/// carry; beyond roughly 60 a 24-point rule visibly loses digits.
pub const GL_PANEL_DECAY: f64 = 45.0;
