//! Two-dimensional FFTs on the periodic horizontal box.
//!
//! Data layout matches [`crate::grid::GridSpec::idx`]: row-major with z as
//! the fast axis. Forward transforms are plain unnormalised DFTs; inverses
//! carry the `1/(n_x n_z)` factor, so `inverse(forward(f)) == f`. The
//! quadrature constants that turn raw coefficients into continuum-style
//! spectral integrals live on `GridSpec` so the convention is stated once.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

/// Planned 2-D transform of an `n_x x n_z` box with reusable buffers.
pub struct Fft2 {
    n_x: usize,
    n_z: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_z: Arc<dyn Fft<f64>>,
    inv_z: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transpose: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(n_x: usize, n_z: usize) -> Self {
        let mut p = planner().lock().unwrap();
        let fwd_x = p.plan_fft_forward(n_x);
        let inv_x = p.plan_fft_inverse(n_x);
        let fwd_z = p.plan_fft_forward(n_z);
        let inv_z = p.plan_fft_inverse(n_z);
        let scratch_len = fwd_x
            .get_inplace_scratch_len()
            .max(inv_x.get_inplace_scratch_len())
            .max(fwd_z.get_inplace_scratch_len())
            .max(inv_z.get_inplace_scratch_len());
        Fft2 {
            n_x,
            n_z,
            fwd_x,
            inv_x,
            fwd_z,
            inv_z,
            scratch: vec![Complex64::default(); scratch_len],
            transpose: vec![Complex64::default(); n_x * n_z],
        }
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        assert_eq!(data.len(), self.n_x * self.n_z);
        let (n_x, n_z) = (self.n_x, self.n_z);
        let along_z = if forward { &self.fwd_z } else { &self.inv_z };
        for row in data.chunks_exact_mut(n_z) {
            along_z.process_with_scratch(row, &mut self.scratch);
        }
        for ix in 0..n_x {
            for iz in 0..n_z {
                self.transpose[iz * n_x + ix] = data[ix * n_z + iz];
            }
        }
        let along_x = if forward { &self.fwd_x } else { &self.inv_x };
        for row in self.transpose.chunks_exact_mut(n_x) {
            along_x.process_with_scratch(row, &mut self.scratch);
        }
        let norm = if forward {
            1.0
        } else {
            1.0 / (n_x * n_z) as f64
        };
        for ix in 0..n_x {
            for iz in 0..n_z {
                data[ix * n_z + iz] = self.transpose[iz * n_x + ix] * norm;
            }
        }
    }

    /// In-place unnormalised forward DFT.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// In-place inverse DFT including the `1/(n_x n_z)` factor.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    pub fn forward_real(&mut self, real: &[f64], out: &mut Vec<Complex64>) {
        out.clear();
        out.extend(real.iter().map(|&v| Complex64::new(v, 0.0)));
        self.forward(out);
    }

    pub fn inverse_to_real(&mut self, spectrum: &[Complex64], out: &mut Vec<f64>) {
        let mut buf = spectrum.to_vec();
        self.inverse(&mut buf);
        out.clear();
        out.extend(buf.iter().map(|c| c.re));
    }

    /// Forward DFTs of two real fields with a single complex transform,
    /// separated through the Hermitian symmetry of real-field spectra.
    pub fn forward_pair(
        &mut self,
        a: &[f64],
        b: &[f64],
        out_a: &mut [Complex64],
        out_b: &mut [Complex64],
    ) {
        let (n_x, n_z) = (self.n_x, self.n_z);
        let mut packed: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&ar, &br)| Complex64::new(ar, br))
            .collect();
        self.forward(&mut packed);
        for ix in 0..n_x {
            let jx = (n_x - ix) % n_x;
            for iz in 0..n_z {
                let jz = (n_z - iz) % n_z;
                let x = packed[ix * n_z + iz];
                let y = packed[jx * n_z + jz].conj();
                out_a[ix * n_z + iz] = 0.5 * (x + y);
                out_b[ix * n_z + iz] = Complex64::new(0.0, -0.5) * (x - y);
            }
        }
    }

    /// Inverse of two Hermitian spectra with a single complex transform.
    pub fn inverse_pair(
        &mut self,
        spec_a: &[Complex64],
        spec_b: &[Complex64],
        out_a: &mut [f64],
        out_b: &mut [f64],
    ) {
        let mut packed: Vec<Complex64> = spec_a
            .iter()
            .zip(spec_b)
            .map(|(&a, &b)| a + Complex64::new(0.0, 1.0) * b)
            .collect();
        self.inverse(&mut packed);
        for (i, c) in packed.iter().enumerate() {
            out_a[i] = c.re;
            out_b[i] = c.im;
        }
    }
}

thread_local! {
    static FFT_CACHE: RefCell<HashMap<(usize, usize), Fft2>> = RefCell::new(HashMap::new());
}

/// Run `f` with the thread-local planned transform for the given box size.
pub fn with_fft<R>(n_x: usize, n_z: usize, f: impl FnOnce(&mut Fft2) -> R) -> R {
    FFT_CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        let fft = cache
            .entry((n_x, n_z))
            .or_insert_with(|| Fft2::new(n_x, n_z));
        f(fft)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_parseval() {
        let (n_x, n_z) = (8, 16);
        let mut fft = Fft2::new(n_x, n_z);
        let vals: Vec<f64> = (0..n_x * n_z)
            .map(|i| ((i * 37 + 11) % 101) as f64 / 101.0 - 0.5)
            .collect();
        let mut spec = Vec::new();
        fft.forward_real(&vals, &mut spec);
        let mut back = Vec::new();
        fft.inverse_to_real(&spec, &mut back);
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let phys: f64 = vals.iter().map(|v| v * v).sum();
        let spect: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / (n_x * n_z) as f64;
        assert!((phys - spect).abs() < 1e-9);
    }

    #[test]
    fn single_cosine_lands_on_two_modes() {
        let (n_x, n_z) = (16, 8);
        let mut fft = Fft2::new(n_x, n_z);
        let vals: Vec<f64> = (0..n_x)
            .flat_map(|ix| {
                let x = 2.0 * std::f64::consts::PI * ix as f64 / n_x as f64;
                std::iter::repeat(x.cos()).take(n_z)
            })
            .collect();
        let mut spec = Vec::new();
        fft.forward_real(&vals, &mut spec);
        let expect = (n_x * n_z) as f64 / 2.0;
        for ix in 0..n_x {
            for iz in 0..n_z {
                let want = if iz == 0 && (ix == 1 || ix == n_x - 1) {
                    expect
                } else {
                    0.0
                };
                assert!((spec[ix * n_z + iz].re - want).abs() < 1e-9);
                assert!(spec[ix * n_z + iz].im.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn paired_transforms_match_individual() {
        let (n_x, n_z) = (8, 8);
        let mut fft = Fft2::new(n_x, n_z);
        let a: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..64).map(|i| (i as f64 * 0.13).cos()).collect();
        let mut sa = Vec::new();
        let mut sb = Vec::new();
        fft.forward_real(&a, &mut sa);
        fft.forward_real(&b, &mut sb);
        let mut pa = vec![Complex64::default(); 64];
        let mut pb = vec![Complex64::default(); 64];
        fft.forward_pair(&a, &b, &mut pa, &mut pb);
        for i in 0..64 {
            assert!((sa[i] - pa[i]).norm() < 1e-10);
            assert!((sb[i] - pb[i]).norm() < 1e-10);
        }
        let mut ra = vec![0.0; 64];
        let mut rb = vec![0.0; 64];
        fft.inverse_pair(&sa, &sb, &mut ra, &mut rb);
        for i in 0..64 {
            assert!((ra[i] - a[i]).abs() < 1e-12);
            assert!((rb[i] - b[i]).abs() < 1e-12);
        }
    }
}
