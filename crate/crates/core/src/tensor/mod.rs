//! Third-order tensors under the block-circulant representation.
//!
//! Tensors are stored as consecutive frontal slices, each slice row-major:
//! element `(i, j, k)` of an `n1×n2×n3` tensor lives at `k·n1·n2 + i·n2 + j`.
//! All products and factorizations are computed slice-wise in the Fourier
//! domain along mode 3; [`bcirc`] materialises the explicit block-circulant
//! matrix and exists as an independent check of that shortcut.

pub mod dft;
pub mod haar;
pub mod linalg;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
pub use dft::ModeDft;
pub use haar::{haar_matrix, HaarMatrix};

pub type Dims3 = (usize, usize, usize);

/// Real `n1×n2×n3` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: Dims3,
    data: Vec<f64>,
}

/// Complex tensor with the same layout as [`Tensor3`]; typically a mode-3
/// spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor3 {
    dims: Dims3,
    data: Vec<Complex64>,
}

fn check_dims(dims: Dims3) -> Result<()> {
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(Error::Dims(format!(
            "tensor dims must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

impl Tensor3 {
    pub fn zeros(dims: Dims3) -> Self {
        assert!(
            dims.0 > 0 && dims.1 > 0 && dims.2 > 0,
            "tensor dims must be positive"
        );
        Self {
            dims,
            data: vec![0.0; dims.0 * dims.1 * dims.2],
        }
    }

    pub fn from_vec(dims: Dims3, data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        if data.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::Dims(format!(
                "{} values for a {dims:?} tensor",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("tensor contains non-finite values".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: Dims3, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        for k in 0..dims.2 {
            for i in 0..dims.0 {
                for j in 0..dims.1 {
                    t.set(i, j, k, f(i, j, k));
                }
            }
        }
        t
    }

    /// Identity tube tensor: identity first frontal slice, zeros elsewhere.
    pub fn identity(n: usize, n3: usize) -> Self {
        Self::from_fn(
            (n, n, n3),
            |i, j, k| if k == 0 && i == j { 1.0 } else { 0.0 },
        )
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        k * self.dims.0 * self.dims.1 + i * self.dims.1 + j
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.index(i, j, k);
        self.data[idx] = v;
    }

    /// Frontal slice `k`, row-major.
    pub fn slice(&self, k: usize) -> &[f64] {
        let len = self.dims.0 * self.dims.1;
        &self.data[k * len..(k + 1) * len]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Tensor transpose: transpose every frontal slice and reverse the order
    /// of slices 2 through `n3`. Its spectrum is the per-slice conjugate
    /// transpose of the original spectrum.
    pub fn t_transpose(&self) -> Self {
        let (n1, n2, n3) = self.dims;
        Self::from_fn((n2, n1, n3), |i, j, k| self.get(j, i, (n3 - k) % n3))
    }

    /// Elementwise difference, used by the norm checks.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::Dims(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            dims: self.dims,
            data,
        })
    }
}

impl ComplexTensor3 {
    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.data[k * self.dims.0 * self.dims.1 + i * self.dims.1 + j]
    }

    pub fn slice(&self, k: usize) -> &[Complex64] {
        let len = self.dims.0 * self.dims.1;
        &self.data[k * len..(k + 1) * len]
    }

    /// Slice `k` as an nalgebra matrix.
    pub fn slice_matrix(&self, k: usize) -> DMatrix<Complex64> {
        let (n1, n2, _) = self.dims;
        let s = self.slice(k);
        DMatrix::from_fn(n1, n2, |i, j| s[i * n2 + j])
    }

    /// Largest deviation from the conjugate symmetry a real tensor's spectrum
    /// must satisfy (slice `k` equals the conjugate of slice `n3 − k`).
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let n3 = self.dims.2;
        let mut worst: f64 = 0.0;
        for k in 1..n3 {
            let m = dft::mirror_index(k, n3);
            for (a, b) in self.slice(k).iter().zip(self.slice(m)) {
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }

    fn from_slices(dims: Dims3, slices: Vec<DMatrix<Complex64>>) -> Self {
        let (n1, n2, _) = dims;
        let mut data = Vec::with_capacity(n1 * n2 * dims.2);
        for s in &slices {
            for i in 0..n1 {
                for j in 0..n2 {
                    data.push(s[(i, j)]);
                }
            }
        }
        Self { dims, data }
    }
}

/// Forward DFT along mode 3 (unnormalised).
pub fn dft_mode3(t: &Tensor3) -> ComplexTensor3 {
    let (n1, n2, n3) = t.dims;
    let plan = ModeDft::new(n3);
    let mut out = vec![Complex64::default(); t.data.len()];
    plan.forward_real(&t.data, n1 * n2, &mut out, &mut Vec::new());
    ComplexTensor3 {
        dims: t.dims,
        data: out,
    }
}

/// Inverse DFT along mode 3 (`1/n3` scaled); the imaginary residue of a
/// conjugate-symmetric spectrum is discarded.
pub fn idft_mode3(t: &ComplexTensor3) -> Tensor3 {
    let (n1, n2, n3) = t.dims;
    let plan = ModeDft::new(n3);
    let mut out = vec![0.0; t.data.len()];
    plan.inverse_real(&t.data, n1 * n2, &mut out, &mut Vec::new());
    Tensor3 {
        dims: t.dims,
        data: out,
    }
}

/// t-product `a * b`, computed as per-slice products in the Fourier domain.
pub fn t_product(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    let (n1, m, n3) = a.dims;
    let (m2, n2, n3b) = b.dims;
    if m != m2 || n3 != n3b {
        return Err(Error::Dims(format!(
            "t-product of {:?} and {:?}",
            a.dims, b.dims
        )));
    }
    let fa = dft_mode3(a);
    let fb = dft_mode3(b);
    let mut slices = Vec::with_capacity(n3);
    for k in 0..n3 {
        slices.push(fa.slice_matrix(k) * fb.slice_matrix(k));
    }
    Ok(idft_mode3(&ComplexTensor3::from_slices(
        (n1, n2, n3),
        slices,
    )))
}

/// Explicit `n1·n3 × n2·n3` block-circulant matrix: block `(r, c)` is frontal
/// slice `(r − c) mod n3`.
pub fn bcirc(t: &Tensor3) -> DMatrix<f64> {
    let (n1, n2, n3) = t.dims;
    DMatrix::from_fn(n1 * n3, n2 * n3, |row, col| {
        let (br, i) = (row / n1, row % n1);
        let (bc, j) = (col / n2, col % n2);
        t.get(i, j, (br + n3 - bc) % n3)
    })
}

/// Factors of a t-SVD `t = U * S * Vᵀ`.
#[derive(Debug, Clone)]
pub struct TSvd {
    pub u: Tensor3,
    pub s: Tensor3,
    pub v: Tensor3,
}

impl TSvd {
    /// `U * S * Vᵀ`.
    pub fn reconstruct(&self) -> Tensor3 {
        let us = t_product(&self.u, &self.s).expect("conformable by construction");
        t_product(&us, &self.v.t_transpose()).expect("conformable by construction")
    }
}

/// t-SVD computed slice-wise in the Fourier domain.
///
/// Only the first `n3/2 + 1` spectral slices are decomposed; the rest are
/// their conjugates, so every factor is real in the spatial domain. Each
/// spectral slice of `S` is diagonal with nonnegative descending entries.
pub fn t_svd(t: &Tensor3) -> TSvd {
    let (n1, n2, n3) = t.dims;
    let spectrum = dft_mode3(t);
    let mut us = vec![DMatrix::<Complex64>::zeros(n1, n1); n3];
    let mut ss = vec![DMatrix::<Complex64>::zeros(n1, n2); n3];
    let mut vs = vec![DMatrix::<Complex64>::zeros(n2, n2); n3];
    for k in 0..dft::independent_slices(n3) {
        let real = dft::is_self_conjugate(k, n3);
        let (u, sv, v) = linalg::full_svd(&spectrum.slice_matrix(k), real);
        let mut s = DMatrix::<Complex64>::zeros(n1, n2);
        for (d, &x) in sv.iter().enumerate() {
            s[(d, d)] = Complex64::new(x, 0.0);
        }
        let m = dft::mirror_index(k, n3);
        if m != k {
            us[m] = u.map(|z| z.conj());
            ss[m] = s.clone();
            vs[m] = v.map(|z| z.conj());
        }
        us[k] = u;
        ss[k] = s;
        vs[k] = v;
    }
    TSvd {
        u: idft_mode3(&ComplexTensor3::from_slices((n1, n1, n3), us)),
        s: idft_mode3(&ComplexTensor3::from_slices((n1, n2, n3), ss)),
        v: idft_mode3(&ComplexTensor3::from_slices((n2, n2, n3), vs)),
    }
}
