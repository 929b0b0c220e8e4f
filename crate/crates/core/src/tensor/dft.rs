use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned DFT along the third mode of a tensor stored as consecutive frontal
/// slices.
///
/// Forward is unnormalised, inverse carries the `1/n` factor.
#[derive(Clone)]
pub struct ModeDft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ModeDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModeDft").field("len", &self.len).finish()
    }
}

impl ModeDft {
    pub fn new(len: usize) -> Self {
        assert!(len >= 1, "mode length must be positive");
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Transforms `len` real slices of `slice_len` values each.
    ///
    /// `scratch` is resized as needed and may be reused across calls.
    pub fn forward_real(
        &self,
        input: &[f64],
        slice_len: usize,
        out: &mut [Complex64],
        scratch: &mut Vec<Complex64>,
    ) {
        let n = self.len;
        debug_assert_eq!(input.len(), n * slice_len);
        debug_assert_eq!(out.len(), n * slice_len);
        if n == 1 {
            for (o, &x) in out.iter_mut().zip(input) {
                *o = Complex64::new(x, 0.0);
            }
            return;
        }
        scratch.resize(n * slice_len, Complex64::default());
        for k in 0..n {
            let slice = &input[k * slice_len..(k + 1) * slice_len];
            for (p, &x) in slice.iter().enumerate() {
                scratch[p * n + k] = Complex64::new(x, 0.0);
            }
        }
        self.forward.process(scratch);
        for p in 0..slice_len {
            for k in 0..n {
                out[k * slice_len + p] = scratch[p * n + k];
            }
        }
    }

    /// Inverse transform keeping the real part only.
    pub fn inverse_real(
        &self,
        input: &[Complex64],
        slice_len: usize,
        out: &mut [f64],
        scratch: &mut Vec<Complex64>,
    ) {
        let n = self.len;
        debug_assert_eq!(input.len(), n * slice_len);
        debug_assert_eq!(out.len(), n * slice_len);
        if n == 1 {
            for (o, z) in out.iter_mut().zip(input) {
                *o = z.re;
            }
            return;
        }
        self.inverse_into_scratch(input, slice_len, scratch);
        let scale = 1.0 / n as f64;
        for p in 0..slice_len {
            for k in 0..n {
                out[k * slice_len + p] = scratch[p * n + k].re * scale;
            }
        }
    }

    /// Complex inverse transform, `1/n` scaled.
    pub fn inverse_complex(
        &self,
        input: &[Complex64],
        slice_len: usize,
        out: &mut [Complex64],
        scratch: &mut Vec<Complex64>,
    ) {
        let n = self.len;
        if n == 1 {
            out.copy_from_slice(input);
            return;
        }
        self.inverse_into_scratch(input, slice_len, scratch);
        let scale = 1.0 / n as f64;
        for p in 0..slice_len {
            for k in 0..n {
                out[k * slice_len + p] = scratch[p * n + k] * scale;
            }
        }
    }

    fn inverse_into_scratch(
        &self,
        input: &[Complex64],
        slice_len: usize,
        scratch: &mut Vec<Complex64>,
    ) {
        let n = self.len;
        scratch.resize(n * slice_len, Complex64::default());
        for k in 0..n {
            let slice = &input[k * slice_len..(k + 1) * slice_len];
            for (p, &z) in slice.iter().enumerate() {
                scratch[p * n + k] = z;
            }
        }
        self.inverse.process(scratch);
    }
}

/// Index of the slice whose spectrum is the complex conjugate of `k`.
#[inline]
pub fn mirror_index(k: usize, n: usize) -> usize {
    (n - k) % n
}

/// Number of leading slices that determine a real tensor's spectrum.
#[inline]
pub fn independent_slices(n: usize) -> usize {
    n / 2 + 1
}

/// True when slice `k` of a real tensor's spectrum is itself real.
#[inline]
pub fn is_self_conjugate(k: usize, n: usize) -> bool {
    mirror_index(k, n) == k
}
