//! Real scalar fields on the horizontal box with lazily cached spectra.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::transforms::with_fft;

/// Which of the two weighted trace norms to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StarSign {
    /// Weight `(1 + |k|^2)^{-1/2} |k|^2`.
    PlusHalf,
    /// Weight `(1 + |k|^2)^{1/2} / |k|^2`; requires a mean-free field.
    MinusHalf,
}

/// Free-surface elevation (or any surface scalar) sampled on the grid.
///
/// Values are authoritative; the DFT spectrum is computed once on demand and
/// cached. All constructors produce consistent pairs, so a field shared
/// across threads never recomputes into an inconsistent state.
#[derive(Debug)]
pub struct SurfaceField {
    grid: Arc<GridSpec>,
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl Clone for SurfaceField {
    fn clone(&self) -> Self {
        let spectrum = OnceLock::new();
        if let Some(s) = self.spectrum.get() {
            let _ = spectrum.set(s.clone());
        }
        SurfaceField {
            grid: self.grid.clone(),
            values: self.values.clone(),
            spectrum,
        }
    }
}

impl SurfaceField {
    pub fn zeros(grid: &Arc<GridSpec>) -> Self {
        SurfaceField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            spectrum: OnceLock::new(),
        }
    }

    pub fn from_values(grid: &Arc<GridSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::shape(format!(
                "field has {} samples, grid wants {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(SurfaceField {
            grid: grid.clone(),
            values,
            spectrum: OnceLock::new(),
        })
    }

    /// Sample `f(x, z)` on the grid.
    pub fn from_fn(grid: &Arc<GridSpec>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = vec![0.0; grid.len()];
        for ix in 0..grid.n_x {
            let x = grid.x(ix);
            for iz in 0..grid.n_z {
                values[grid.idx(ix, iz)] = f(x, grid.z(iz));
            }
        }
        SurfaceField {
            grid: grid.clone(),
            values,
            spectrum: OnceLock::new(),
        }
    }

    /// Build from a raw DFT spectrum (imaginary residue of the inverse is
    /// discarded; callers are expected to supply Hermitian data).
    pub fn from_spectrum(grid: &Arc<GridSpec>, spectrum: Vec<Complex64>) -> Result<Self> {
        if spectrum.len() != grid.len() {
            return Err(Error::shape("spectrum length does not match grid"));
        }
        let mut values = vec![0.0; grid.len()];
        with_fft(grid.n_x, grid.n_z, |fft| {
            fft.inverse_to_real(&spectrum, &mut values)
        });
        let lock = OnceLock::new();
        let _ = lock.set(spectrum);
        Ok(SurfaceField {
            grid: grid.clone(),
            values,
            spectrum: lock,
        })
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Raw (unnormalised) DFT coefficients, cached after the first call.
    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| {
            with_fft(self.grid.n_x, self.grid.n_z, |fft| {
                let mut out = Vec::new();
                fft.forward_real(&self.values, &mut out);
                out
            })
        })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Physical inner product `sum f g dx dz`.
    pub fn inner(&self, other: &SurfaceField) -> f64 {
        debug_assert!(self.grid.same_geometry(&other.grid));
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        dot * self.grid.cell_area()
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &SurfaceField) -> SurfaceField {
        debug_assert_eq!(self.values.len(), other.values.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        SurfaceField {
            grid: self.grid.clone(),
            values,
            spectrum: OnceLock::new(),
        }
    }

    pub fn scaled(&self, c: f64) -> SurfaceField {
        SurfaceField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            spectrum: OnceLock::new(),
        }
    }

    /// Re-home the field on a grid with identical geometry but different
    /// physical parameters (used by continuation in `mu`).
    pub fn with_grid(&self, grid: &Arc<GridSpec>) -> Result<SurfaceField> {
        if !self.grid.same_geometry(grid) {
            return Err(Error::shape("grids differ in geometry"));
        }
        let mut f = self.clone();
        f.grid = grid.clone();
        Ok(f)
    }

    /// Cyclic translation by whole cells; spectra only change by phases, so
    /// translation-invariant functionals must not change.
    pub fn shift_cells(&self, sx: isize, sz: isize) -> SurfaceField {
        let g = &self.grid;
        let mut values = vec![0.0; g.len()];
        let (n_x, n_z) = (g.n_x as isize, g.n_z as isize);
        for ix in 0..g.n_x {
            let jx = ((ix as isize - sx).rem_euclid(n_x)) as usize;
            for iz in 0..g.n_z {
                let jz = ((iz as isize - sz).rem_euclid(n_z)) as usize;
                values[g.idx(ix, iz)] = self.values[g.idx(jx, jz)];
            }
        }
        SurfaceField {
            grid: self.grid.clone(),
            values,
            spectrum: OnceLock::new(),
        }
    }

    /// Apply a real even spectral multiplier `m(k1, k2, |k|)`.
    pub fn apply_multiplier(&self, m: impl Fn(f64, f64, f64) -> f64) -> SurfaceField {
        let g = &self.grid;
        let k1 = g.k1();
        let k2 = g.k2();
        let spec = self.spectrum();
        let mut out = vec![Complex64::default(); g.len()];
        for ix in 0..g.n_x {
            for iz in 0..g.n_z {
                let i = g.idx(ix, iz);
                let km = (k1[ix] * k1[ix] + k2[iz] * k2[iz]).sqrt();
                out[i] = spec[i] * m(k1[ix], k2[iz], km);
            }
        }
        SurfaceField::from_spectrum(g, out).expect("multiplier keeps the grid")
    }

    /// 2/3-rule mask for products: drops the top third of modes per axis,
    /// matching the mask the slab solver applies to nonlinear forcing.
    pub fn dealias(&self) -> SurfaceField {
        let g = &self.grid;
        let spec = self.spectrum();
        let mut out = vec![Complex64::default(); g.len()];
        for ix in 0..g.n_x {
            let amx = ix.min(g.n_x - ix);
            for iz in 0..g.n_z {
                let amz = iz.min(g.n_z - iz);
                let i = g.idx(ix, iz);
                if amx <= g.n_x / 3 && amz <= g.n_z / 3 {
                    out[i] = spec[i];
                }
            }
        }
        SurfaceField::from_spectrum(g, out).expect("mask keeps the grid")
    }

    /// Spectral x-derivative (Nyquist column dropped to keep the field real).
    pub fn deriv_x(&self) -> SurfaceField {
        self.deriv_axis(true)
    }

    pub fn deriv_z(&self) -> SurfaceField {
        self.deriv_axis(false)
    }

    fn deriv_axis(&self, along_x: bool) -> SurfaceField {
        let g = &self.grid;
        let kd = if along_x { g.k1_deriv() } else { g.k2_deriv() };
        let spec = self.spectrum();
        let mut out = vec![Complex64::default(); g.len()];
        for ix in 0..g.n_x {
            for iz in 0..g.n_z {
                let i = g.idx(ix, iz);
                let k = if along_x { kd[ix] } else { kd[iz] };
                out[i] = spec[i] * Complex64::new(0.0, k);
            }
        }
        SurfaceField::from_spectrum(g, out).expect("derivative keeps the grid")
    }

    /// `sum w(k) |f_hat|^2 dk` over all grid modes, in the quadrature
    /// convention where this matches `sum f^2 dx dz` when `w == 1`.
    pub fn spectral_sum(&self, w: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let g = &self.grid;
        let k1 = g.k1();
        let k2 = g.k2();
        let spec = self.spectrum();
        let sw = g.spectral_weight();
        let mut acc = 0.0;
        for ix in 0..g.n_x {
            for iz in 0..g.n_z {
                let i = g.idx(ix, iz);
                let km = (k1[ix] * k1[ix] + k2[iz] * k2[iz]).sqrt();
                acc += w(k1[ix], k2[iz], km) * spec[i].norm_sqr();
            }
        }
        acc * sw
    }

    /// Sobolev norm of order `r`.
    pub fn sobolev_norm(&self, r: f64) -> f64 {
        self.spectral_sum(|_, _, km| (1.0 + km * km).powf(r)).sqrt()
    }

    pub fn h3_norm_sq(&self) -> f64 {
        self.spectral_sum(|_, _, km| {
            let w = 1.0 + km * km;
            w * w * w
        })
    }

    /// Weighted trace norms of order `+-1/2`.
    pub fn star_norm(&self, sign: StarSign) -> Result<f64> {
        match sign {
            StarSign::PlusHalf => Ok(self
                .spectral_sum(|_, _, km| km * km / (1.0 + km * km).sqrt())
                .sqrt()),
            StarSign::MinusHalf => {
                let mean = self.mean();
                if mean.abs() > 1e-12 * self.norm_l2().max(1.0) {
                    return Err(Error::MeanNotZero { mean });
                }
                Ok(self
                    .spectral_sum(|_, _, km| {
                        if km == 0.0 {
                            0.0
                        } else {
                            (1.0 + km * km).sqrt() / (km * km)
                        }
                    })
                    .sqrt())
            }
        }
    }

    /// Anisotropically weighted norm with `mu`-dependent weights
    /// `1 + mu^{-6a} |k|^6 + mu^{-4a} k2^4 / |k|^4`.
    pub fn scaled_norm_alpha(&self, mu: f64, alpha: f64) -> f64 {
        self.spectral_sum(|_, k2, km| {
            let aniso = if km == 0.0 {
                0.0
            } else {
                k2.powi(4) / km.powi(4)
            };
            1.0 + mu.powf(-6.0 * alpha) * km.powi(6) + mu.powf(-4.0 * alpha) * aniso
        })
        .sqrt()
    }

    /// Largest Hermitian-symmetry violation of the cached spectrum
    /// (diagnostic; exact zero is not expected in floating point).
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.grid;
        let spec = self.spectrum();
        let mut worst = 0.0f64;
        for ix in 0..g.n_x {
            let jx = (g.n_x - ix) % g.n_x;
            for iz in 0..g.n_z {
                let jz = (g.n_z - iz) % g.n_z;
                let d = (spec[g.idx(ix, iz)] - spec[g.idx(jx, jz)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }
}
