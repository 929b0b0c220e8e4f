//! Small dense kernels on per-slice matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex64;

const PHASE_EPS: f64 = 1e-12;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
///
/// Each eigenvector is rotated so its first component with modulus above a
/// small tolerance is real and positive. When `real` is set the imaginary part
/// of `m` is ignored and the decomposition runs in real arithmetic, which
/// yields real eigenvectors even for repeated eigenvalues.
pub fn hermitian_eigen_desc(m: &DMatrix<Complex64>, real: bool) -> (Vec<f64>, DMatrix<Complex64>) {
    let n = m.nrows();
    let (values, vectors) = if real {
        let re = m.map(|z| z.re);
        let re = (&re + re.transpose()) * 0.5;
        let eig = SymmetricEigen::new(re);
        (
            eig.eigenvalues.iter().copied().collect::<Vec<_>>(),
            eig.eigenvectors.map(|x| Complex64::new(x, 0.0)),
        )
    } else {
        let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        (
            eig.eigenvalues.iter().copied().collect::<Vec<_>>(),
            eig.eigenvectors,
        )
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut sorted = DMatrix::<Complex64>::zeros(n, n);
    let mut sorted_values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        sorted_values.push(values[src]);
        let mut col = vectors.column(src).into_owned();
        normalize_phase(col.as_mut_slice());
        sorted.set_column(dst, &col);
    }
    (sorted_values, sorted)
}

/// Rotates a vector so its first non-negligible entry is real-positive and
/// rescales it to unit norm.
pub fn normalize_phase(v: &mut [Complex64]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .find(|z| z.norm() > PHASE_EPS * norm)
        .copied()
        .unwrap_or(Complex64::new(1.0, 0.0));
    let rot = pivot.conj() / (pivot.norm() * norm);
    for z in v.iter_mut() {
        *z *= rot;
    }
}

/// Full SVD `A = U Σ Vᴴ` with square `U` (`m×m`) and `V` (`n×n`), singular
/// values descending.
pub fn full_svd(
    a: &DMatrix<Complex64>,
    real: bool,
) -> (DMatrix<Complex64>, Vec<f64>, DMatrix<Complex64>) {
    let (m, n) = a.shape();
    let (u, sv, v) = if real {
        let svd = a.map(|z| z.re).svd(true, true);
        let u = svd.u.expect("u requested").map(|x| Complex64::new(x, 0.0));
        let v = svd
            .v_t
            .expect("v_t requested")
            .transpose()
            .map(|x| Complex64::new(x, 0.0));
        (
            u,
            svd.singular_values.iter().copied().collect::<Vec<_>>(),
            v,
        )
    } else {
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("u requested");
        let v = svd.v_t.expect("v_t requested").adjoint();
        (
            u,
            svd.singular_values.iter().copied().collect::<Vec<_>>(),
            v,
        )
    };
    let r = sv.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| sv[y].total_cmp(&sv[x]).then(x.cmp(&y)));
    let mut u_sorted = DMatrix::<Complex64>::zeros(m, r);
    let mut v_sorted = DMatrix::<Complex64>::zeros(n, r);
    let mut sv_sorted = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        sv_sorted.push(sv[src].max(0.0));
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v.column(src));
    }
    (
        complete_basis(&u_sorted),
        sv_sorted,
        complete_basis(&v_sorted),
    )
}

/// Extends orthonormal columns to a square unitary matrix with modified
/// Gram–Schmidt against the standard basis.
pub fn complete_basis(q: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (n, r) = q.shape();
    if r == n {
        return q.clone();
    }
    let mut cols: Vec<Vec<Complex64>> = (0..r)
        .map(|j| q.column(j).iter().copied().collect())
        .collect();
    for e in 0..n {
        if cols.len() == n {
            break;
        }
        let mut v = vec![Complex64::default(); n];
        v[e] = Complex64::new(1.0, 0.0);
        for _ in 0..2 {
            for c in &cols {
                let dot: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= dot * ci;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for z in v.iter_mut() {
                *z /= norm;
            }
            cols.push(v);
        }
    }
    DMatrix::from_fn(n, n, |i, j| cols[j][i])
}

/// `out = aᴴ · b` for row-major `n×n` complex blocks.
#[inline]
pub fn mul_adjoint_left(a: &[Complex64], b: &[Complex64], n: usize, out: &mut [Complex64]) {
    out.fill(Complex64::default());
    for k in 0..n {
        for i in 0..n {
            let aki = a[k * n + i].conj();
            let row = &mut out[i * n..(i + 1) * n];
            let brow = &b[k * n..(k + 1) * n];
            for (o, &bk) in row.iter_mut().zip(brow) {
                *o += aki * bk;
            }
        }
    }
}

/// `out = a · b` for row-major `n×n` complex blocks.
#[inline]
pub fn mul(a: &[Complex64], b: &[Complex64], n: usize, out: &mut [Complex64]) {
    out.fill(Complex64::default());
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        for k in 0..n {
            let aik = a[i * n + k];
            let brow = &b[k * n..(k + 1) * n];
            for (o, &bk) in row.iter_mut().zip(brow) {
                *o += aik * bk;
            }
        }
    }
}

/// `out = a · bᴴ` for row-major `n×n` complex blocks.
#[inline]
pub fn mul_adjoint_right(a: &[Complex64], b: &[Complex64], n: usize, out: &mut [Complex64]) {
    for i in 0..n {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = Complex64::default();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y.conj();
            }
            out[i * n + j] = acc;
        }
    }
}

/// Row-major copy of a square nalgebra matrix.
pub fn to_row_major(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}
