//! Periodic computational box, wavenumber tables and vertical collocation nodes.
//!
//! The horizontal domain is the periodic box `[0, l_x) x [0, l_z)` sampled on
//! `n_x x n_z` uniform points; the flattened fluid layer adds `n_y`
//! Chebyshev-Lobatto nodes spanning `[0, 1]` in the vertical.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::chebyshev;
use crate::error::{Error, Result};

/// Resolution and physical parameters of one computational setup.
///
/// `beta` is the Bond number (strong surface tension means `beta > 1/3`),
/// `mu` the momentum parameter (the constraint value is `2 mu`), and
/// `m_tilde < m_ball` the inner/outer radii of the `H^3` penalty ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_x: usize,
    pub n_z: usize,
    pub n_y: usize,
    pub l_x: f64,
    pub l_z: f64,
    pub beta: f64,
    pub mu: f64,
    pub m_ball: f64,
    pub m_tilde: f64,
}

/// Flat tables of horizontal wavenumbers in DFT layout.
///
/// `k1[ix]` and `k2[iz]` are the signed wavenumbers along x and z;
/// `kmag[ix * n_z + iz]` is `|k|`. Entries at the Nyquist index carry the
/// negative-side magnitude, which is what symmetric (even) symbols need.
#[derive(Debug, Clone)]
pub struct Wavenumbers {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub kmag: Vec<f64>,
}

/// Signed wavenumbers for an axis of `n` points on a period `l`.
pub fn axis_wavenumbers(n: usize, l: f64) -> Vec<f64> {
    let scale = 2.0 * PI / l;
    (0..n)
        .map(|j| {
            let m = if j <= n / 2 { j as isize } else { j as isize - n as isize };
            m as f64 * scale
        })
        .collect()
}

impl GridSpec {
    pub fn new(
        n_x: usize,
        n_z: usize,
        n_y: usize,
        l_x: f64,
        l_z: f64,
        beta: f64,
        mu: f64,
        m_ball: f64,
        m_tilde: f64,
    ) -> Result<Self> {
        let spec = GridSpec {
            n_x,
            n_z,
            n_y,
            l_x,
            l_z,
            beta,
            mu,
            m_ball,
            m_tilde,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, n) in [("n_x", self.n_x), ("n_z", self.n_z)] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::invalid(key, format!("{n} must be even and at least 8")));
            }
        }
        if self.n_y < 4 || self.n_y > 64 {
            return Err(Error::invalid("n_y", format!("{} must lie in 4..=64", self.n_y)));
        }
        for (key, l) in [("l_x", self.l_x), ("l_z", self.l_z)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(key, format!("{l} must be positive")));
            }
        }
        if !(self.beta.is_finite() && self.beta > 1.0 / 3.0) {
            return Err(Error::invalid(
                "beta",
                format!(
                    "Bond number {} must exceed 1/3 (strong surface tension regime)",
                    self.beta
                ),
            ));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::invalid("mu", format!("{} must be positive", self.mu)));
        }
        if !(self.m_ball.is_finite() && self.m_ball > 0.0) {
            return Err(Error::invalid("m_ball", "penalty radius must be positive"));
        }
        if !(self.m_tilde.is_finite() && self.m_tilde > 0.0 && self.m_tilde < self.m_ball) {
            return Err(Error::invalid(
                "m_tilde",
                "inner penalty radius must satisfy 0 < m_tilde < m_ball",
            ));
        }
        Ok(())
    }

    /// Number of horizontal grid points (= number of Fourier modes).
    pub fn len(&self) -> usize {
        self.n_x * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of the horizontal sample `(ix, iz)`; z is the fast axis.
    #[inline]
    pub fn idx(&self, ix: usize, iz: usize) -> usize {
        ix * self.n_z + iz
    }

    pub fn dx(&self) -> f64 {
        self.l_x / self.n_x as f64
    }

    pub fn dz(&self) -> f64 {
        self.l_z / self.n_z as f64
    }

    /// Quadrature weight of one horizontal sample, `dx * dz`.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dz()
    }

    /// Weight converting raw squared DFT coefficients into the spectral-plane
    /// integral `\int |f_hat|^2 dk` that matches the physical quadrature
    /// `sum f^2 dx dz` (Parseval in quadrature form).
    pub fn spectral_weight(&self) -> f64 {
        self.cell_area() / self.len() as f64
    }

    /// x coordinate of column `ix` (box starts at 0).
    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.dx()
    }

    pub fn z(&self, iz: usize) -> f64 {
        iz as f64 * self.dz()
    }

    /// Signed wavenumbers along x in DFT layout.
    pub fn k1(&self) -> Vec<f64> {
        axis_wavenumbers(self.n_x, self.l_x)
    }

    pub fn k2(&self) -> Vec<f64> {
        axis_wavenumbers(self.n_z, self.l_z)
    }

    /// Spectral differentiation multipliers along x: `i k1`, with the
    /// unpaired Nyquist mode zeroed so derivatives of real fields stay real.
    pub fn k1_deriv(&self) -> Vec<f64> {
        let mut k = self.k1();
        k[self.n_x / 2] = 0.0;
        k
    }

    pub fn k2_deriv(&self) -> Vec<f64> {
        let mut k = self.k2();
        k[self.n_z / 2] = 0.0;
        k
    }

    pub fn wavenumbers(&self) -> Wavenumbers {
        let k1 = self.k1();
        let k2 = self.k2();
        let mut kmag = vec![0.0; self.len()];
        for ix in 0..self.n_x {
            for iz in 0..self.n_z {
                kmag[self.idx(ix, iz)] = (k1[ix] * k1[ix] + k2[iz] * k2[iz]).sqrt();
            }
        }
        Wavenumbers { k1, k2, kmag }
    }

    /// Chebyshev-Lobatto nodes ascending through `[0, 1]`.
    pub fn y_nodes(&self) -> Vec<f64> {
        chebyshev::lobatto_nodes_unit(self.n_y)
    }

    /// Clenshaw-Curtis weights matching [`GridSpec::y_nodes`].
    pub fn y_weights(&self) -> Vec<f64> {
        chebyshev::clenshaw_curtis_weights_unit(self.n_y)
    }

    /// True when `other` shares box size and resolution (physical parameters
    /// such as `mu` may differ).
    pub fn same_geometry(&self, other: &GridSpec) -> bool {
        self.n_x == other.n_x
            && self.n_z == other.n_z
            && self.n_y == other.n_y
            && self.l_x == other.l_x
            && self.l_z == other.l_z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> GridSpec {
        GridSpec::new(16, 16, 8, 2.0 * PI, 2.0 * PI, 2.0, 0.2, 1.0, 0.9).unwrap()
    }

    #[test]
    fn wavenumbers_standard_box() {
        let k = axis_wavenumbers(4, 2.0 * PI);
        assert_eq!(k, vec![0.0, 1.0, 2.0, -1.0]);
        let k = axis_wavenumbers(4, 4.0 * PI);
        assert_eq!(k, vec![0.0, 0.5, 1.0, -0.5]);
    }

    #[test]
    fn kmag_mixed_mode() {
        let g = base();
        let w = g.wavenumbers();
        assert!((w.kmag[g.idx(1, 1)] - 2.0_f64.sqrt()).abs() < 1e-15);
        assert_eq!(w.kmag[0], 0.0);
    }

    #[test]
    fn deriv_multiplier_drops_nyquist() {
        let g = base();
        let kd = g.k1_deriv();
        assert_eq!(kd[8], 0.0);
        assert_eq!(g.k1()[8], 8.0);
    }

    #[test]
    fn rejects_weak_surface_tension() {
        let err = GridSpec::new(16, 16, 8, 1.0, 1.0, 0.3, 0.2, 1.0, 0.9).unwrap_err();
        assert!(err.to_string().contains("strong surface tension"));
    }

    #[test]
    fn rejects_bad_penalty_radii() {
        assert!(GridSpec::new(16, 16, 8, 1.0, 1.0, 2.0, 0.2, 0.9, 1.0).is_err());
        assert!(GridSpec::new(16, 16, 8, 1.0, 1.0, 2.0, -0.1, 1.0, 0.9).is_err());
    }

    #[test]
    fn lobatto_nodes_span_unit_interval() {
        let g = base();
        let y = g.y_nodes();
        assert_eq!(y.len(), 8);
        assert_eq!(y[0], 0.0);
        assert!((y[7] - 1.0).abs() < 1e-15);
        assert!(y.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn parseval_weight_consistency() {
        let g = base();
        // sum f^2 dx dz == sum |F|^2 * spectral_weight for the DFT scaling.
        assert!((g.spectral_weight() * g.len() as f64 - g.cell_area()).abs() < 1e-15);
    }
}
