use haar_tsvd::grouping::PatchGroup;
use haar_tsvd::metrics::add_awgn;
use haar_tsvd::noise::{
    adjust_sigma, circ_gram_eigenpairs, estimate_sigma_baseline, rank_position, AdaptiveConfig,
};
use haar_tsvd::ImageTensor;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Explicit `circ(G)·circ(G)ᵀ`: block row `r` of `circ(G)` holds the patches
/// cyclically shifted by `r`.
fn explicit_gram(group: &PatchGroup) -> DMatrix<f64> {
    let k = group.len();
    let len = group.patch_len();
    let circ = DMatrix::from_fn(k, k * len, |r, col| {
        let (block, e) = (col / len, col % len);
        group.patch((block + k - r) % k)[e]
    });
    &circ * circ.transpose()
}

fn random_group(rng: &mut ChaCha8Rng, k: usize) -> PatchGroup {
    let (ps, c) = (rng.random_range(2..=4), rng.random_range(1..=3));
    let data = (0..k * ps * ps * c)
        .map(|_| rng.random_range(-50.0..50.0))
        .collect();
    PatchGroup::from_patches(ps, c, data).unwrap()
}

#[test]
fn closed_form_pairs_match_dense_eigendecomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..100 {
        let k = if trial % 2 == 0 { 4 } else { 8 };
        let group = random_group(&mut rng, k);
        let m = explicit_gram(&group);
        let pairs = circ_gram_eigenpairs(&group).unwrap();
        let scale = m.norm();
        for (lambda, u) in [
            (pairs.lambda_max, &pairs.u_max),
            (pairs.lambda_hat, &pairs.u_hat),
        ] {
            let u = DVector::from_column_slice(u);
            assert!((u.norm() - 1.0).abs() < 1e-12);
            assert!((&m * &u - &u * lambda).norm() <= 1e-8 * scale);
        }
        let mut dense: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let tol = 1e-8 * dense.last().unwrap().abs();
        assert!(dense.iter().any(|v| (v - pairs.lambda_max).abs() <= tol));
        assert!(dense.iter().any(|v| (v - pairs.lambda_hat).abs() <= tol));
        let oracle = 1 + dense
            .iter()
            .filter(|&&v| v < pairs.lambda_hat - tol)
            .count();
        assert_eq!(rank_position(&group).unwrap(), oracle, "trial {trial}");
    }
}

#[test]
fn gram_is_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let group = random_group(&mut rng, 8);
        let m = explicit_gram(&group);
        let min = m.symmetric_eigenvalues().min();
        assert!(min >= -1e-9 * m.norm());
    }
}

#[test]
fn mad_estimate_tracks_true_sigma() {
    let flat = ImageTensor::from_fn(128, 128, 1, |_, _, _| 128.0);
    assert_eq!(estimate_sigma_baseline(&flat), 0.0);
    for seed in 0..20 {
        let noisy = add_awgn(&flat, 25.0, seed).unwrap();
        let est = estimate_sigma_baseline(&noisy);
        assert!((est - 25.0).abs() <= 2.5, "seed {seed}: {est}");
    }
}

#[test]
fn adjustment_matches_the_rule() {
    let cfg = AdaptiveConfig::default();
    let m = adjust_sigma(24.0, 10, &cfg);
    assert!(m.adjusted && (m.sigma_hat - 20.0).abs() < 1e-12);
    let m = adjust_sigma(24.0, 13, &cfg);
    assert!(m.adjusted);
    let m = adjust_sigma(24.0, 20, &cfg);
    assert!(!m.adjusted && m.sigma_hat == 24.0);
}
