//! Two-dimensional discrete Fourier transform on square power-of-two grids.
//!
//! Forward transform is unnormalized; the inverse carries the `1/H^2`
//! factor. Coefficients are stored in the usual FFT order, so storage index
//! `i` corresponds to wavenumber `i` for `i < H/2` and `i - H` otherwise
//! (see [`wavenumber`]).

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Field;

type PlanCache = (FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>);

thread_local! {
    static PLANNER: RefCell<PlanCache> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((len, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// In-place unnormalized 2D transform of a row-major `n x n` buffer.
pub(crate) fn transform_in_place(buf: &mut [Complex64], n: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), n * n);
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
    transpose(buf, n);
    fft.process_with_scratch(buf, &mut scratch);
    transpose(buf, n);
}

/// Signed wavenumber for storage index `i` on a grid of side `n`.
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Storage index of the conjugate partner `-k` of storage index `i`.
pub fn conjugate_index(i: usize, n: usize) -> usize {
    (n - i) % n
}

/// Complex Fourier coefficients of a real field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    size: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(size: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if size < 2 || !size.is_power_of_two() {
            return Err(Error::InvalidField(format!(
                "spectral size {size} is not a power of two"
            )));
        }
        if coeffs.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                found: coeffs.len(),
            });
        }
        Ok(SpectralField { size, coeffs })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at signed wavenumbers `(ky, kx)`.
    pub fn at(&self, ky: i64, kx: i64) -> Complex64 {
        let n = self.size as i64;
        let i = ky.rem_euclid(n) as usize;
        let j = kx.rem_euclid(n) as usize;
        self.coeffs[i * self.size + j]
    }

    /// Largest violation of `F(-k) = conj(F(k))`.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let n = self.size;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = self.coeffs[i * n + j];
                let b = self.coeffs[conjugate_index(i, n) * n + conjugate_index(j, n)];
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }
}

pub fn fft2(f: &Field) -> SpectralField {
    let n = f.size();
    let mut buf: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_in_place(&mut buf, n, false);
    SpectralField {
        size: n,
        coeffs: buf,
    }
}

/// Inverse transform keeping the imaginary part.
pub fn ifft2_complex(s: &SpectralField) -> Vec<Complex64> {
    let n = s.size;
    let mut buf = s.coeffs.clone();
    transform_in_place(&mut buf, n, true);
    let scale = 1.0 / (n * n) as f64;
    for c in &mut buf {
        *c *= scale;
    }
    buf
}

/// Inverse transform to a real field; the imaginary residue is dropped.
pub fn ifft2(s: &SpectralField) -> Result<Field> {
    let values = ifft2_complex(s).into_iter().map(|c| c.re).collect();
    Field::new(s.size, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(size: usize, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(size, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    // Direct O(n^4) DFT.
    fn naive_dft(f: &Field) -> Vec<Complex64> {
        let n = f.size();
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for p in 0..n {
            for q in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let phase = -2.0 * PI * ((p * i + q * j) as f64) / n as f64;
                        acc += f.get(i, j) * Complex64::from_polar(1.0, phase);
                    }
                }
                out[p * n + q] = acc;
            }
        }
        out
    }

    #[test]
    fn constant_field_has_single_mode() {
        let c = 2.5;
        let s = fft2(&Field::new(8, vec![c; 64]).unwrap());
        assert!((s.coeffs()[0].re - c * 64.0).abs() < 1e-12);
        for z in &s.coeffs()[1..] {
            assert!(z.norm() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_summation() {
        let f = random_field(8, 4);
        let fast = fft2(&f);
        for (a, b) in fast.coeffs().iter().zip(naive_dft(&f)) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn round_trip() {
        let f = random_field(32, 9);
        let back = ifft2(&fft2(&f)).unwrap();
        let err = f
            .values()
            .iter()
            .zip(back.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10, "round trip error {err}");
        let imag = ifft2_complex(&fft2(&f))
            .iter()
            .fold(0.0f64, |m, c| m.max(c.im.abs()));
        assert!(imag < 1e-10);
    }

    #[test]
    fn parseval() {
        let f = random_field(16, 2);
        let spatial = f.sum_squares();
        let spectral: f64 = naive_dft(&f).iter().map(|c| c.norm_sqr()).sum::<f64>() / 256.0;
        let fast: f64 = fft2(&f).coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>() / 256.0;
        assert!((spatial - spectral).abs() / spatial < 1e-9);
        assert!((spatial - fast).abs() / spatial < 1e-9);
    }

    #[test]
    fn real_input_is_conjugate_symmetric() {
        assert!(fft2(&random_field(16, 1)).conjugate_asymmetry() < 1e-12);
    }

    #[test]
    fn wavenumber_layout() {
        let ks: Vec<i64> = (0..8).map(|i| wavenumber(i, 8)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert_eq!(conjugate_index(0, 8), 0);
        assert_eq!(conjugate_index(3, 8), 5);
        assert_eq!(conjugate_index(4, 8), 4);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(SpectralField::new(6, vec![Complex64::new(0.0, 0.0); 36]).is_err());
    }
}
