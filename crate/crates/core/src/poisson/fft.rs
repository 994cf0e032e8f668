//! Square real-to-complex 2D transforms (rows with `realfft`, columns with `rustfft`).

use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

/// 2D transform of an `m × m` real array. Spectra are stored transposed:
/// `m/2 + 1` rows (index `kx`) of `m` entries (index `ky`).
pub struct Fft2 {
    m: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("m", &self.m).finish()
    }
}

impl Fft2 {
    pub fn new(m: usize) -> Self {
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        Self {
            m,
            r2c: rp.plan_fft_forward(m),
            c2r: rp.plan_fft_inverse(m),
            fwd: cp.plan_fft_forward(m),
            inv: cp.plan_fft_inverse(m),
        }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn spectrum_len(&self) -> usize {
        (self.m / 2 + 1) * self.m
    }

    /// Forward transform; `data` (row-major, `m × m`) is used as scratch.
    pub fn forward(&self, data: &mut [f64]) -> Vec<Complex64> {
        let m = self.m;
        let half = m / 2 + 1;
        assert_eq!(data.len(), m * m);
        let mut rows = vec![Complex64::new(0.0, 0.0); m * half];
        let mut scratch = self.r2c.make_scratch_vec();
        for (inp, out) in data.chunks_exact_mut(m).zip(rows.chunks_exact_mut(half)) {
            self.r2c
                .process_with_scratch(inp, out, &mut scratch)
                .expect("row transform lengths are fixed");
        }
        let mut spec = vec![Complex64::new(0.0, 0.0); m * half];
        for y in 0..m {
            for kx in 0..half {
                spec[kx * m + y] = rows[y * half + kx];
            }
        }
        self.fwd.process(&mut spec);
        spec
    }

    /// Inverse transform including the `1/m²` normalisation.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        let m = self.m;
        let half = m / 2 + 1;
        assert_eq!(spec.len(), m * half);
        self.inv.process(&mut spec);
        let mut rows = vec![Complex64::new(0.0, 0.0); m * half];
        for kx in 0..half {
            for y in 0..m {
                rows[y * half + kx] = spec[kx * m + y];
            }
        }
        let mut out = vec![0.0; m * m];
        let mut scratch = self.c2r.make_scratch_vec();
        let norm = 1.0 / (m * m) as f64;
        for (inp, o) in rows.chunks_exact_mut(half).zip(out.chunks_exact_mut(m)) {
            // Round-off leaves tiny imaginary parts on the self-conjugate bins.
            inp[0].im = 0.0;
            inp[half - 1].im = 0.0;
            self.c2r
                .process_with_scratch(inp, o, &mut scratch)
                .expect("row transform lengths are fixed");
        }
        for v in &mut out {
            *v *= norm;
        }
        out
    }

    /// Wavenumber index (signed) of spectrum position `(kx, ky)`.
    pub fn wavenumbers(&self, kx: usize, ky: usize) -> (f64, f64) {
        let m = self.m as isize;
        let sy = if (ky as isize) < m / 2 { ky as isize } else { ky as isize - m };
        (kx as f64, sy as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_identity() {
        let m = 16;
        let data: Vec<f64> = (0..m * m).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let f = Fft2::new(m);
        let back = f.inverse(f.forward(&mut data.clone()));
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cyclic_convolution_matches_direct() {
        let m = 8;
        let a: Vec<f64> = (0..m * m).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..m * m).map(|i| (i as f64 * 0.11).cos()).collect();
        let f = Fft2::new(m);
        let sa = f.forward(&mut a.clone());
        let sb = f.forward(&mut b.clone());
        let prod = sa.iter().zip(&sb).map(|(x, y)| x * y).collect();
        let conv = f.inverse(prod);
        for y in 0..m {
            for x in 0..m {
                let mut s = 0.0;
                for j in 0..m {
                    for i in 0..m {
                        s += a[j * m + i] * b[((y + m - j) % m) * m + (x + m - i) % m];
                    }
                }
                assert!((s - conv[y * m + x]).abs() < 1e-10);
            }
        }
    }
}
