use haar_tsvd::grouping::PatchGroup;
use haar_tsvd::tensor::{dft_mode3, haar_matrix, t_product, Tensor3};
use haar_tsvd::transform::{
    forward_transform, hard_threshold, inverse_transform, learn_global_basis, threshold_value,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

fn random_patches(seed: u64, n: usize, ps: usize, c: usize) -> Vec<Tensor3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Tensor3::from_fn((ps, ps, c), |_, _, _| rng.random_range(0.0..255.0)))
        .collect()
}

/// Slice-wise covariance eigenvalues computed directly with dense complex
/// matrices.
fn oracle_spectra(patches: &[Tensor3], k: usize) -> (Vec<f64>, Vec<f64>) {
    let (n, _, _) = patches[0].dims();
    let mut row = DMatrix::<Complex64>::zeros(n, n);
    let mut col = DMatrix::<Complex64>::zeros(n, n);
    for p in patches {
        let m = dft_mode3(p).slice_matrix(k);
        row += &m * m.adjoint();
        col += m.adjoint() * &m;
    }
    let eig = |m: DMatrix<Complex64>| {
        let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v
    };
    (eig(row), eig(col))
}

#[test]
fn learned_basis_diagonalises_the_training_covariance() {
    for c in [1usize, 3, 4] {
        let patches = random_patches(c as u64, 40, 4, c);
        let basis = learn_global_basis(&patches).unwrap();
        for k in 0..c {
            let (row, col) = oracle_spectra(&patches, k);
            let scale = row[0].max(col[0]);
            for (a, b) in basis.row_spectrum(k).iter().zip(&row) {
                assert!((a - b).abs() <= 1e-8 * scale, "row slice {k}: {a} vs {b}");
            }
            for (a, b) in basis.col_spectrum(k).iter().zip(&col) {
                assert!((a - b).abs() <= 1e-8 * scale, "col slice {k}: {a} vs {b}");
            }
            let u = basis.u_slice(k);
            assert!((u.adjoint() * &u - DMatrix::identity(4, 4)).norm() < 1e-8);
        }
    }
}

#[test]
fn forward_transform_matches_t_product_chain() {
    let (ps, c, k) = (4, 3, 8);
    let patches = random_patches(7, k, ps, c);
    let basis = learn_global_basis(&random_patches(8, 64, ps, c)).unwrap();
    let haar = haar_matrix(k).unwrap();
    let data: Vec<f64> = patches.iter().flat_map(|p| p.data().to_vec()).collect();
    let group = PatchGroup::from_patches(ps, c, data).unwrap();
    let coeffs = forward_transform(&group, &basis, &haar).unwrap();

    let (u, v) = basis.spatial_factors();
    let ut = u.t_transpose();
    let projected: Vec<Tensor3> = patches
        .iter()
        .map(|p| t_product(&ut, &t_product(p, &v).unwrap()).unwrap())
        .collect();
    let len = ps * ps * c;
    for row in 0..k {
        for e in 0..len {
            let expected: f64 = (0..k)
                .map(|j| haar.get(row, j) * projected[j].data()[e])
                .sum();
            let got = coeffs.data[row * len + e];
            assert!(
                (got - expected).abs() < 1e-8 * (1.0 + expected.abs()),
                "{row}/{e}: {got} vs {expected}"
            );
        }
    }

    let back = inverse_transform(&coeffs, &basis, &haar).unwrap();
    for (a, b) in back.iter().zip(&group.data) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn thresholding_removes_small_coefficients_only() {
    let (ps, c, k) = (4, 1, 4);
    let patches = random_patches(9, k, ps, c);
    let basis = learn_global_basis(&patches).unwrap();
    let haar = haar_matrix(k).unwrap();
    let data: Vec<f64> = patches.iter().flat_map(|p| p.data().to_vec()).collect();
    let group = PatchGroup::from_patches(ps, c, data).unwrap();
    let coeffs = forward_transform(&group, &basis, &haar).unwrap();
    let tau = threshold_value(10.0, c, k, ps);
    let kept = hard_threshold(&coeffs, tau);
    for (a, b) in coeffs.data.iter().zip(&kept.data) {
        if a.abs() >= tau {
            assert_eq!(a, b);
        } else {
            assert_eq!(*b, 0.0);
        }
    }
    assert_eq!(
        kept.nnz,
        coeffs.data.iter().filter(|v| v.abs() >= tau).count()
    );
}
