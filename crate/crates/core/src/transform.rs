//! Global t-SVD basis and the one-step collaborative filter.
//!
//! A group is transformed in two stages: every patch is projected onto the
//! global basis (`Ûᴴ P̂ V̂` per Fourier slice along the channel mode, then
//! back to real coefficients), and the `K` coefficient tensors are mixed by
//! the Haar matrix. Both stages are orthogonal, so the coefficient energy
//! equals the group energy and the inverse is the adjoint.

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grouping::PatchGroup;
use crate::tensor::dft::{independent_slices, is_self_conjugate, mirror_index};
use crate::tensor::linalg::{self, hermitian_eigen_desc, to_row_major};
use crate::tensor::{HaarMatrix, ModeDft, Tensor3};

/// Patches per partial covariance sum. Fixed so the reduction order does not
/// depend on the thread count.
const TRAINING_CHUNK: usize = 64;

/// Pair of unitary bases per Fourier slice, shared by every group of an image.
#[derive(Debug, Clone)]
pub struct GlobalBasis {
    patch_size: usize,
    channels: usize,
    /// Row-major `ps×ps` per slice; columns are eigenvectors.
    u: Vec<Vec<Complex64>>,
    v: Vec<Vec<Complex64>>,
    /// Eigenvalues of the row/column covariances, descending.
    row_spectrum: Vec<Vec<f64>>,
    col_spectrum: Vec<Vec<f64>>,
    dft: ModeDft,
}

impl GlobalBasis {
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `Û` of Fourier slice `k`.
    pub fn u_slice(&self, k: usize) -> DMatrix<Complex64> {
        let n = self.patch_size;
        DMatrix::from_fn(n, n, |i, j| self.u[k][i * n + j])
    }

    /// `V̂` of Fourier slice `k`.
    pub fn v_slice(&self, k: usize) -> DMatrix<Complex64> {
        let n = self.patch_size;
        DMatrix::from_fn(n, n, |i, j| self.v[k][i * n + j])
    }

    pub fn row_spectrum(&self, k: usize) -> &[f64] {
        &self.row_spectrum[k]
    }

    pub fn col_spectrum(&self, k: usize) -> &[f64] {
        &self.col_spectrum[k]
    }

    /// Identity basis (`Û = V̂ = I` in every slice).
    pub fn identity(patch_size: usize, channels: usize) -> Self {
        let n = patch_size;
        let eye: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new(if i / n == i % n { 1.0 } else { 0.0 }, 0.0))
            .collect();
        Self {
            patch_size,
            channels,
            u: vec![eye.clone(); channels],
            v: vec![eye; channels],
            row_spectrum: vec![vec![0.0; n]; channels],
            col_spectrum: vec![vec![0.0; n]; channels],
            dft: ModeDft::new(channels),
        }
    }

    /// Spatial-domain tensors `𝒰` and `𝒱` (`ps×ps×C`).
    pub fn spatial_factors(&self) -> (Tensor3, Tensor3) {
        let n = self.patch_size;
        let c = self.channels;
        let to_tensor = |slices: &[Vec<Complex64>]| {
            let flat: Vec<Complex64> = slices.iter().flatten().copied().collect();
            let mut out = vec![0.0; flat.len()];
            self.dft
                .inverse_real(&flat, n * n, &mut out, &mut Vec::new());
            Tensor3::from_vec((n, n, c), out).expect("consistent dims")
        };
        (to_tensor(&self.u), to_tensor(&self.v))
    }
}

/// Covariance sums for one batch of training patches.
#[derive(Clone)]
struct Covariance {
    row: Vec<Vec<Complex64>>,
    col: Vec<Vec<Complex64>>,
}

impl Covariance {
    fn zeros(n: usize, slices: usize) -> Self {
        Self {
            row: vec![vec![Complex64::default(); n * n]; slices],
            col: vec![vec![Complex64::default(); n * n]; slices],
        }
    }

    fn add_patch(
        &mut self,
        patch: &[f64],
        n: usize,
        dft: &ModeDft,
        spec: &mut [Complex64],
        scratch: &mut Vec<Complex64>,
    ) {
        dft.forward_real(patch, n * n, spec, scratch);
        for (k, (row, col)) in self.row.iter_mut().zip(self.col.iter_mut()).enumerate() {
            let p = &spec[k * n * n..(k + 1) * n * n];
            // row += P Pᴴ
            for i in 0..n {
                for j in 0..n {
                    let mut acc = Complex64::default();
                    for t in 0..n {
                        acc += p[i * n + t] * p[j * n + t].conj();
                    }
                    row[i * n + j] += acc;
                }
            }
            // col += Pᴴ P
            for t in 0..n {
                for i in 0..n {
                    let a = p[t * n + i].conj();
                    let dst = &mut col[i * n..(i + 1) * n];
                    for (d, &b) in dst.iter_mut().zip(&p[t * n..(t + 1) * n]) {
                        *d += a * b;
                    }
                }
            }
        }
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self
            .row
            .iter_mut()
            .zip(&other.row)
            .chain(self.col.iter_mut().zip(&other.col))
        {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Learns `Û`, `V̂` from patches given back to back in frontal-slice layout.
///
/// For each Fourier slice the row covariance `Σ P̂P̂ᴴ` and column covariance
/// `Σ P̂ᴴP̂` are accumulated and their eigenvectors, sorted by descending
/// eigenvalue, become the basis columns. Partial sums over fixed-size chunks
/// are merged in chunk order, so the result is independent of the thread
/// count.
pub fn learn_basis_from_flat(
    patches: &[f64],
    patch_size: usize,
    channels: usize,
) -> Result<GlobalBasis> {
    let n = patch_size;
    let len = n * n * channels;
    if len == 0 {
        return Err(Error::Dims(
            "patch size and channel count must be positive".into(),
        ));
    }
    if patches.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if !patches.len().is_multiple_of(len) {
        return Err(Error::Dims(format!(
            "{} values do not split into {n}x{n}x{channels} patches",
            patches.len()
        )));
    }
    let dft = ModeDft::new(channels);
    let slices = independent_slices(channels);
    let partials: Vec<Covariance> = patches
        .par_chunks(TRAINING_CHUNK * len)
        .map(|chunk| {
            let mut cov = Covariance::zeros(n, slices);
            let mut spec = vec![Complex64::default(); len];
            let mut scratch = Vec::new();
            for patch in chunk.chunks_exact(len) {
                cov.add_patch(patch, n, &dft, &mut spec, &mut scratch);
            }
            cov
        })
        .collect();
    let mut total = Covariance::zeros(n, slices);
    for p in &partials {
        total.merge(p);
    }

    let mut u = vec![Vec::new(); channels];
    let mut v = vec![Vec::new(); channels];
    let mut row_spectrum = vec![Vec::new(); channels];
    let mut col_spectrum = vec![Vec::new(); channels];
    for k in 0..slices {
        let real = is_self_conjugate(k, channels);
        let to_matrix = |m: &[Complex64]| DMatrix::from_fn(n, n, |i, j| m[i * n + j]);
        let (ru, uu) = hermitian_eigen_desc(&to_matrix(&total.row[k]), real);
        let (rv, vv) = hermitian_eigen_desc(&to_matrix(&total.col[k]), real);
        if ru.iter().chain(&rv).any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite covariance spectrum".into()));
        }
        let (uu, vv) = (to_row_major(&uu), to_row_major(&vv));
        let m = mirror_index(k, channels);
        if m != k {
            u[m] = uu.iter().map(|z| z.conj()).collect();
            v[m] = vv.iter().map(|z| z.conj()).collect();
            row_spectrum[m] = ru.clone();
            col_spectrum[m] = rv.clone();
        }
        u[k] = uu;
        v[k] = vv;
        row_spectrum[k] = ru;
        col_spectrum[k] = rv;
    }
    Ok(GlobalBasis {
        patch_size: n,
        channels,
        u,
        v,
        row_spectrum,
        col_spectrum,
        dft,
    })
}

/// Learns the global basis from a collection of `ps×ps×C` patches.
pub fn learn_global_basis(patches: &[Tensor3]) -> Result<GlobalBasis> {
    let first = patches.first().ok_or(Error::EmptyTrainingSet)?;
    let (n1, n2, c) = first.dims();
    if n1 != n2 {
        return Err(Error::Dims(format!(
            "patches must be square, got {n1}x{n2}"
        )));
    }
    if let Some(bad) = patches.iter().find(|p| p.dims() != first.dims()) {
        return Err(Error::Dims(format!(
            "{:?} vs {:?}",
            bad.dims(),
            first.dims()
        )));
    }
    let flat: Vec<f64> = patches
        .iter()
        .flat_map(|p| p.data().iter().copied())
        .collect();
    learn_basis_from_flat(&flat, n1, c)
}

/// Transform coefficients of a group, `ps×ps×C×K` in the same layout as
/// [`PatchGroup::data`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffGroup {
    pub patch_size: usize,
    pub channels: usize,
    pub group_size: usize,
    pub data: Vec<f64>,
    /// Entries retained by the last thresholding (all entries before any).
    pub nnz: usize,
}

impl CoeffGroup {
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Reusable buffers for the per-group transforms.
#[derive(Debug, Default)]
pub struct Workspace {
    spec: Vec<Complex64>,
    tmp: Vec<Complex64>,
    out: Vec<Complex64>,
    fft: Vec<Complex64>,
    haar: Vec<f64>,
}

fn check_layout(data_len: usize, basis: &GlobalBasis, haar: &HaarMatrix) -> Result<usize> {
    let len = basis.patch_size * basis.patch_size * basis.channels;
    if data_len != len * haar.order() {
        return Err(Error::Dims(format!(
            "group of {data_len} values vs basis {}x{}x{} and Haar order {}",
            basis.patch_size,
            basis.patch_size,
            basis.channels,
            haar.order()
        )));
    }
    Ok(len)
}

/// Projects one patch in place: `S = idft(Ûᴴ dft(P) V̂)`, or the inverse
/// `P = idft(Û dft(S) V̂ᴴ)`.
fn project_patch(patch: &mut [f64], basis: &GlobalBasis, inverse: bool, ws: &mut Workspace) {
    let n = basis.patch_size;
    let c = basis.channels;
    let plane = n * n;
    ws.spec.resize(plane * c, Complex64::default());
    ws.out.resize(plane * c, Complex64::default());
    ws.tmp.resize(plane, Complex64::default());
    basis
        .dft
        .forward_real(patch, plane, &mut ws.spec, &mut ws.fft);
    for k in 0..independent_slices(c) {
        let p = &ws.spec[k * plane..(k + 1) * plane];
        let (u, v) = (&basis.u[k], &basis.v[k]);
        let dst = &mut ws.out[k * plane..(k + 1) * plane];
        if inverse {
            linalg::mul(u, p, n, &mut ws.tmp);
            linalg::mul_adjoint_right(&ws.tmp, v, n, dst);
        } else {
            linalg::mul_adjoint_left(u, p, n, &mut ws.tmp);
            linalg::mul(&ws.tmp, v, n, dst);
        }
        let m = mirror_index(k, c);
        if m != k {
            let (lo, hi) = ws.out.split_at_mut(m * plane);
            let src = &lo[k * plane..(k + 1) * plane];
            for (d, s) in hi[..plane].iter_mut().zip(src) {
                *d = s.conj();
            }
        }
    }
    basis.dft.inverse_real(&ws.out, plane, patch, &mut ws.fft);
}

/// In-place forward transform of a flat `ps×ps×C×K` group.
pub fn forward_in_place(
    data: &mut [f64],
    basis: &GlobalBasis,
    haar: &HaarMatrix,
    ws: &mut Workspace,
) -> Result<()> {
    let len = check_layout(data.len(), basis, haar)?;
    for patch in data.chunks_exact_mut(len) {
        project_patch(patch, basis, false, ws);
    }
    haar.apply(data, len, &mut ws.haar);
    Ok(())
}

/// In-place inverse transform of a flat `ps×ps×C×K` coefficient block.
pub fn inverse_in_place(
    data: &mut [f64],
    basis: &GlobalBasis,
    haar: &HaarMatrix,
    ws: &mut Workspace,
) -> Result<()> {
    let len = check_layout(data.len(), basis, haar)?;
    haar.apply_transpose(data, len, &mut ws.haar);
    for patch in data.chunks_exact_mut(len) {
        project_patch(patch, basis, true, ws);
    }
    Ok(())
}

/// Coefficients of a group under the global basis and the Haar transform.
pub fn forward_transform(
    group: &PatchGroup,
    basis: &GlobalBasis,
    haar: &HaarMatrix,
) -> Result<CoeffGroup> {
    if group.patch_size != basis.patch_size || group.channels != basis.channels {
        return Err(Error::Dims(format!(
            "group {}x{}x{} vs basis {}x{}x{}",
            group.patch_size,
            group.patch_size,
            group.channels,
            basis.patch_size,
            basis.patch_size,
            basis.channels
        )));
    }
    let mut data = group.data.clone();
    forward_in_place(&mut data, basis, haar, &mut Workspace::default())?;
    let nnz = data.len();
    Ok(CoeffGroup {
        patch_size: group.patch_size,
        channels: group.channels,
        group_size: haar.order(),
        data,
        nnz,
    })
}

/// Inverse of [`forward_transform`]; returns the flat group data.
pub fn inverse_transform(
    coeffs: &CoeffGroup,
    basis: &GlobalBasis,
    haar: &HaarMatrix,
) -> Result<Vec<f64>> {
    if coeffs.patch_size != basis.patch_size
        || coeffs.channels != basis.channels
        || coeffs.group_size != haar.order()
    {
        return Err(Error::Dims(
            "coefficient block does not match basis and Haar order".into(),
        ));
    }
    let mut data = coeffs.data.clone();
    inverse_in_place(&mut data, basis, haar, &mut Workspace::default())?;
    Ok(data)
}

/// Zeroes entries with `|s| < τ` in place and returns the retained count.
pub fn hard_threshold_in_place(data: &mut [f64], tau: f64) -> usize {
    let mut nnz = 0;
    for s in data.iter_mut() {
        if s.abs() >= tau {
            nnz += 1;
        } else {
            *s = 0.0;
        }
    }
    nnz
}

/// Hard thresholding; entries with `|s| ≥ τ` are kept verbatim.
pub fn hard_threshold(coeffs: &CoeffGroup, tau: f64) -> CoeffGroup {
    let mut out = coeffs.clone();
    out.nnz = hard_threshold_in_place(&mut out.data, tau);
    out
}

/// Universal threshold `σ·√(2·ln(c·K·ps²))`.
pub fn threshold_value(sigma: f64, channels: usize, group_size: usize, patch_size: usize) -> f64 {
    let n = (channels * group_size * patch_size * patch_size) as f64;
    sigma * (2.0 * n.ln()).sqrt()
}
