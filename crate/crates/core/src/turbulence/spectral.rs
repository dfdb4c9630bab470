//! Square periodic grid with 2D FFTs and spectral differentiation.
//!
//! Fields are stored row-major with rows along `z` and columns along `x`:
//! element `(j, i)` sits at `x = 2πi/N`, `z = 2πj/N`. Transforms are
//! unnormalised forward, `1/N²`-normalised inverse.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct SpectralGrid {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Signed integer wavenumber of each index.
    wavenumbers: Vec<f64>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("n", &self.n).finish()
    }
}

impl SpectralGrid {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let wavenumbers = (0..n)
            .map(|i| if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 })
            .collect();
        Self {
            n,
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Wavenumber `(k_x, k_z)` of the flat spectral index.
    #[inline]
    pub fn k(&self, idx: usize) -> (f64, f64) {
        (self.wavenumbers[idx % self.n], self.wavenumbers[idx / self.n])
    }

    /// Largest retained wavenumber magnitude per axis under the 2/3 rule.
    pub fn dealias_cutoff(&self) -> f64 {
        self.n as f64 / 3.0
    }

    #[inline]
    pub fn is_aliased(&self, idx: usize) -> bool {
        let (kx, kz) = self.k(idx);
        let cut = self.dealias_cutoff();
        kx.abs() > cut || kz.abs() > cut
    }

    pub fn dealias(&self, field: &mut [Complex64]) {
        for (idx, v) in field.iter_mut().enumerate() {
            if self.is_aliased(idx) {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Index of the wavevector `-k`.
    #[inline]
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let n = self.n;
        let (i, j) = (idx % n, idx / n);
        ((n - j) % n) * n + (n - i) % n
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(data, &mut scratch);
        transpose_square(data, n);
        fft.process_with_scratch(data, &mut scratch);
        transpose_square(data, n);
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let s = 1.0 / (self.n * self.n) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// Forward transform of a real field.
    pub fn forward_real(&self, field: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    /// Inverse transform, keeping the real part.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut data = spectrum.to_vec();
        self.inverse(&mut data);
        data.iter().map(|c| c.re).collect()
    }

    /// Applies `(i k_x)^ax (i k_z)^az` to a spectrum.
    pub fn derivative(&self, spectrum: &[Complex64], ax: u32, az: u32) -> Vec<Complex64> {
        spectrum
            .iter()
            .enumerate()
            .map(|(idx, &v)| {
                let (kx, kz) = self.k(idx);
                v * ik_power(kx, ax) * ik_power(kz, az)
            })
            .collect()
    }

    /// Streamfunction `ψ̂ = ω̂/|k|²` (zero mean mode).
    pub fn streamfunction(&self, vorticity: &[Complex64]) -> Vec<Complex64> {
        vorticity
            .iter()
            .enumerate()
            .map(|(idx, &w)| {
                let (kx, kz) = self.k(idx);
                let k2 = kx * kx + kz * kz;
                if k2 == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    w / k2
                }
            })
            .collect()
    }

    /// Mean square of the real field with the given spectrum (Parseval).
    pub fn mean_square(&self, spectrum: &[Complex64]) -> f64 {
        let n2 = (self.n * self.n) as f64;
        spectrum.iter().map(|c| c.norm_sqr()).sum::<f64>() / (n2 * n2)
    }
}

#[inline]
fn ik_power(k: f64, p: u32) -> Complex64 {
    match p % 4 {
        0 => Complex64::new(k.powi(p as i32), 0.0),
        1 => Complex64::new(0.0, k.powi(p as i32)),
        2 => Complex64::new(-k.powi(p as i32), 0.0),
        _ => Complex64::new(0.0, -k.powi(p as i32)),
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}
