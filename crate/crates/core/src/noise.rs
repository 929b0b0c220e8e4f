//! Noise level estimation and the rank-position based adjustment.
//!
//! The Gram matrix `M = circ(𝒢)circ(𝒢)ᵀ` of a group's circulant arrangement is
//! itself circulant with first row `ρ_m = Σ_k p_kᵀ p_{(k+m) mod K}`, so its
//! eigenvalues are the DFT of `ρ`. Two eigen-pairs have closed forms: the
//! constant vector with `‖Σ p_k‖²`, and the alternating vector with
//! `‖Σ (−1)^k p_k‖²`. The rank of the latter among all eigenvalues indicates
//! how dissimilar adjacent matches are, and therefore how noisy the group is.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{Matcher, PatchCoord, PatchGroup};
use crate::image::ImageTensor;

/// Relative tolerance under which two Gram eigenvalues count as tied.
const RANK_TIE_TOL: f64 = 1e-9;
/// `Φ⁻¹(3/4)`, the MAD-to-σ factor for Gaussian data.
const MAD_SCALE: f64 = 0.6745;
const SIGMA_CLAMP: f64 = 100.0;

/// Where the pre-adjustment σ came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseSource {
    User,
    BaselineEstimator,
    External,
}

/// Noise level of one subimage before and after adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_est: f64,
    pub sigma_hat: f64,
    /// Rank position deciding the adjustment; the median over voters when
    /// the decision came from a vote.
    pub rank_position: usize,
    pub adjusted: bool,
    pub source: NoiseSource,
    /// Voters that favoured the adjustment, and the total number of voters.
    pub votes_adjust: usize,
    pub votes_total: usize,
}

/// Parameters of the adaptive variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    pub beta: f64,
    pub rank_gamma: usize,
    pub subimage_height: usize,
    pub subimage_width: usize,
    pub n_sample_groups: usize,
    pub seed: u64,
    /// Apply the σ adjustment; switching it off keeps the per-subimage
    /// estimation but uses `σ_est` as is.
    pub local_adjustment: bool,
    /// Learn one global basis per subimage instead of per image.
    pub basis_per_subimage: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            beta: 1.2,
            rank_gamma: 13,
            subimage_height: 256,
            subimage_width: 256,
            n_sample_groups: 16,
            seed: 0,
            local_adjustment: true,
            basis_per_subimage: true,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self, group_size: usize) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.rank_gamma < 1 || self.rank_gamma > group_size {
            return Err(Error::Config(format!(
                "rank gamma {} outside 1..={group_size}",
                self.rank_gamma
            )));
        }
        if self.subimage_height == 0 || self.subimage_width == 0 {
            return Err(Error::Config("subimage dims must be positive".into()));
        }
        if self.n_sample_groups == 0 {
            return Err(Error::Config("at least one sample group is needed".into()));
        }
        Ok(())
    }
}

/// The two closed-form eigen-pairs of a group's circulant Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CircGramPairs {
    pub lambda_max: f64,
    pub u_max: Vec<f64>,
    pub lambda_hat: f64,
    pub u_hat: Vec<f64>,
}

fn require_even(k: usize) -> Result<()> {
    if k == 0 || !k.is_multiple_of(2) {
        return Err(Error::OddGroup(k));
    }
    Ok(())
}

/// Closed-form `(λ_max, u_max)` and `(λ̂, û)`.
///
/// Patches are indexed from 1, so the alternating signs start with `−1`.
pub fn circ_gram_eigenpairs(group: &PatchGroup) -> Result<CircGramPairs> {
    let k = group.len();
    require_even(k)?;
    let len = group.patch_len();
    let mut sum = vec![0.0; len];
    let mut alt = vec![0.0; len];
    for i in 0..k {
        // 1-based index i + 1: odd → −1.
        let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
        for ((s, a), &p) in sum.iter_mut().zip(alt.iter_mut()).zip(group.patch(i)) {
            *s += p;
            *a += sign * p;
        }
    }
    let scale = 1.0 / (k as f64).sqrt();
    Ok(CircGramPairs {
        lambda_max: sum.iter().map(|v| v * v).sum(),
        u_max: vec![scale; k],
        lambda_hat: alt.iter().map(|v| v * v).sum(),
        u_hat: (0..k)
            .map(|i| if i % 2 == 0 { -scale } else { scale })
            .collect(),
    })
}

/// First row of the circulant Gram matrix, `ρ_m = Σ_k p_kᵀ p_{(k+m) mod K}`.
pub fn gram_first_row(group: &PatchGroup) -> Vec<f64> {
    let k = group.len();
    let mut rho = vec![0.0; k];
    let mut dots = vec![0.0; k * k];
    for a in 0..k {
        for b in a..k {
            let d: f64 = group
                .patch(a)
                .iter()
                .zip(group.patch(b))
                .map(|(x, y)| x * y)
                .sum();
            dots[a * k + b] = d;
            dots[b * k + a] = d;
        }
    }
    for (m, r) in rho.iter_mut().enumerate() {
        *r = (0..k).map(|i| dots[i * k + (i + m) % k]).sum();
    }
    rho
}

/// All `K` Gram eigenvalues (unsorted, indexed by frequency) from the DFT of
/// the first row.
pub fn gram_spectrum(group: &PatchGroup) -> Vec<f64> {
    let rho = gram_first_row(group);
    let mut buf: Vec<Complex64> = rho.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf.iter().map(|z| z.re).collect()
}

/// 1-based position of `λ̂` among the ascending Gram eigenvalues, ties
/// resolved towards the smallest index.
pub fn rank_position(group: &PatchGroup) -> Result<usize> {
    require_even(group.len())?;
    let spectrum = gram_spectrum(group);
    Ok(rank_of_alternating(&spectrum))
}

/// Rank of the Nyquist eigenvalue within `spectrum` (frequency order).
pub fn rank_of_alternating(spectrum: &[f64]) -> usize {
    let k = spectrum.len();
    let lambda_hat = spectrum[k / 2];
    let scale = spectrum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = RANK_TIE_TOL * scale;
    1 + spectrum.iter().filter(|&&v| v < lambda_hat - tol).count()
}

/// `σ̂ = σ_est/β` when `a ≤ γ`, otherwise `σ_est`.
pub fn adjust_sigma(sigma_est: f64, rank_position: usize, cfg: &AdaptiveConfig) -> NoiseModel {
    let adjusted = rank_position <= cfg.rank_gamma;
    NoiseModel {
        sigma_est,
        sigma_hat: if adjusted {
            sigma_est / cfg.beta
        } else {
            sigma_est
        },
        rank_position,
        adjusted,
        source: NoiseSource::User,
        votes_adjust: usize::from(adjusted),
        votes_total: 1,
    }
}

/// MAD estimate on the finest diagonal Haar details of a plane.
pub fn estimate_sigma_plane(plane: &[f64], height: usize, width: usize) -> f64 {
    let mut details = Vec::with_capacity((height / 2) * (width / 2));
    for r in (0..height - height % 2).step_by(2) {
        for c in (0..width - width % 2).step_by(2) {
            let a = plane[r * width + c];
            let b = plane[r * width + c + 1];
            let d = plane[(r + 1) * width + c];
            let e = plane[(r + 1) * width + c + 1];
            details.push(((a - b - d + e) / 2.0).abs());
        }
    }
    if details.is_empty() {
        return 0.0;
    }
    let mid = details.len() / 2;
    let median = if details.len() % 2 == 1 {
        *details.select_nth_unstable_by(mid, f64::total_cmp).1
    } else {
        let hi = *details.select_nth_unstable_by(mid, f64::total_cmp).1;
        let lo = details[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo + hi) / 2.0
    };
    (median / MAD_SCALE).clamp(0.0, SIGMA_CLAMP)
}

/// Baseline σ estimate of an image on its guide plane, clamped to `[0, 100]`.
///
/// Multiband guides average `n` bands, which shrinks i.i.d. noise by `√n`;
/// the estimate is scaled back to a per-band level.
pub fn estimate_sigma_baseline(sub: &ImageTensor) -> f64 {
    let plane = sub.guide_plane();
    let mut sigma = estimate_sigma_plane(&plane, sub.height(), sub.width());
    let bands = if sub.profile() == crate::image::Profile::Srgb && sub.channels() == 3 {
        1
    } else {
        sub.guide_bands().len()
    };
    sigma *= (bands as f64).sqrt();
    sigma.clamp(0.0, SIGMA_CLAMP)
}

/// Draws `n` reference coordinates uniformly over the valid patch positions.
pub fn sample_references(
    height: usize,
    width: usize,
    ps: usize,
    n: usize,
    seed: u64,
) -> Vec<PatchCoord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            PatchCoord::new(
                rng.random_range(0..=height - ps),
                rng.random_range(0..=width - ps),
            )
        })
        .collect()
}

/// Rank positions of `n_sample_groups` randomly placed groups.
pub fn sample_rank_positions(matcher: &Matcher<'_>, n: usize, seed: u64) -> Result<Vec<usize>> {
    let img = matcher.image();
    let ps = matcher.config().patch_size;
    sample_references(img.height(), img.width(), ps, n, seed)
        .into_iter()
        .map(|c| rank_position(&matcher.match_patches(c)?))
        .collect()
}

/// Majority vote over sampled groups; a tie keeps `σ_est`.
pub fn vote_sigma(
    matcher: &Matcher<'_>,
    sigma_est: f64,
    source: NoiseSource,
    cfg: &AdaptiveConfig,
) -> Result<NoiseModel> {
    let positions = sample_rank_positions(matcher, cfg.n_sample_groups, cfg.seed)?;
    Ok(decide_from_positions(sigma_est, source, &positions, cfg))
}

/// Applies the vote to precomputed rank positions.
pub fn decide_from_positions(
    sigma_est: f64,
    source: NoiseSource,
    positions: &[usize],
    cfg: &AdaptiveConfig,
) -> NoiseModel {
    let votes_adjust = positions.iter().filter(|&&a| a <= cfg.rank_gamma).count();
    let adjusted = 2 * votes_adjust > positions.len();
    let mut sorted = positions.to_vec();
    sorted.sort_unstable();
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(1);
    NoiseModel {
        sigma_est,
        sigma_hat: if adjusted {
            sigma_est / cfg.beta
        } else {
            sigma_est
        },
        rank_position: median,
        adjusted,
        source,
        votes_adjust,
        votes_total: positions.len(),
    }
}

/// Reads per-subimage σ estimates, one decimal per line in row-major tile
/// order. Blank lines and `#` comments are skipped.
pub fn read_sigma_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_sigma_list(&text)
}

pub fn parse_sigma_list(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::Format(format!("line {}: '{line}' is not a number", n + 1)))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Format(format!(
                "line {}: sigma must be finite and nonnegative",
                n + 1
            )));
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group_from(patches: &[Vec<f64>], ps: usize) -> PatchGroup {
        PatchGroup::from_patches(ps, 1, patches.concat()).unwrap()
    }

    #[test]
    fn identical_patches() {
        let p: Vec<f64> = (0..4).map(|i| i as f64 + 1.0).collect();
        let norm2: f64 = p.iter().map(|v| v * v).sum();
        let g = group_from(&vec![p; 8], 2);
        let pairs = circ_gram_eigenpairs(&g).unwrap();
        assert!((pairs.lambda_max - 64.0 * norm2).abs() < 1e-9);
        assert_eq!(pairs.lambda_hat, 0.0);
        assert_eq!(rank_position(&g).unwrap(), 1);
    }

    #[test]
    fn alternating_patches() {
        let q: Vec<f64> = vec![1.0, -2.0, 0.5, 3.0];
        let norm2: f64 = q.iter().map(|v| v * v).sum();
        let patches: Vec<Vec<f64>> = (1..=8)
            .map(|i| q.iter().map(|v| if i % 2 == 0 { *v } else { -v }).collect())
            .collect();
        let g = group_from(&patches, 2);
        let pairs = circ_gram_eigenpairs(&g).unwrap();
        assert!(pairs.lambda_max.abs() < 1e-12);
        assert!((pairs.lambda_hat - 64.0 * norm2).abs() < 1e-9);
        assert_eq!(rank_position(&g).unwrap(), 8);
    }

    #[test]
    fn odd_group_rejected() {
        let g = group_from(&vec![vec![1.0; 4]; 3], 2);
        assert!(matches!(circ_gram_eigenpairs(&g), Err(Error::OddGroup(3))));
        assert!(matches!(rank_position(&g), Err(Error::OddGroup(3))));
    }

    #[test]
    fn spectrum_contains_closed_forms() {
        let patches: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..4).map(|j| ((i * 7 + j * 3) % 5) as f64 - 2.0).collect())
            .collect();
        let g = group_from(&patches, 2);
        let spectrum = gram_spectrum(&g);
        let pairs = circ_gram_eigenpairs(&g).unwrap();
        assert!((spectrum[0] - pairs.lambda_max).abs() < 1e-9);
        assert!((spectrum[3] - pairs.lambda_hat).abs() < 1e-9);
    }

    #[test]
    fn adjust_examples() {
        let cfg = AdaptiveConfig::default();
        let m = adjust_sigma(24.0, 10, &cfg);
        assert!((m.sigma_hat - 20.0).abs() < 1e-12 && m.adjusted);
        let m = adjust_sigma(24.0, 20, &cfg);
        assert_eq!(m.sigma_hat, 24.0);
        assert!(!m.adjusted);
        assert!(adjust_sigma(24.0, 13, &cfg).adjusted);
        assert!(!adjust_sigma(24.0, 14, &cfg).adjusted);
        assert_eq!(adjust_sigma(24.0, 10, &cfg), adjust_sigma(24.0, 10, &cfg));
    }

    #[test]
    fn vote_rules() {
        let cfg = AdaptiveConfig::default();
        let unanimous = decide_from_positions(24.0, NoiseSource::User, &[1; 16], &cfg);
        assert!(unanimous.adjusted && (unanimous.sigma_hat - 20.0).abs() < 1e-12);
        let mut nine = vec![5; 9];
        nine.extend(vec![30; 7]);
        assert!(decide_from_positions(24.0, NoiseSource::User, &nine, &cfg).adjusted);
        let mut tie = vec![5; 8];
        tie.extend(vec![30; 8]);
        let m = decide_from_positions(24.0, NoiseSource::User, &tie, &cfg);
        assert!(!m.adjusted);
        assert_eq!(m.sigma_hat, 24.0);
        assert_eq!((m.votes_adjust, m.votes_total), (8, 16));
    }

    #[test]
    fn mad_on_constant_details() {
        // Every 2×2 block (0, c, c, 0)/… gives diagonal detail (0 − c − c + 0)/2 = −c.
        let c = 3.0;
        let plane: Vec<f64> = (0..16)
            .map(|i| {
                let (r, col) = (i / 4, i % 4);
                if (r % 2) != (col % 2) {
                    c
                } else {
                    0.0
                }
            })
            .collect();
        let s = estimate_sigma_plane(&plane, 4, 4);
        assert!((s - c / MAD_SCALE).abs() < 1e-12);
        assert_eq!(estimate_sigma_plane(&[5.0; 16], 4, 4), 0.0);
    }

    #[test]
    fn sigma_list_parsing() {
        assert_eq!(
            parse_sigma_list("12.5\n\n# c\n3\n").unwrap(),
            vec![12.5, 3.0]
        );
        assert!(matches!(parse_sigma_list("abc"), Err(Error::Format(_))));
        assert!(matches!(parse_sigma_list("-1"), Err(Error::Format(_))));
    }

    #[test]
    fn config_validation() {
        assert!(AdaptiveConfig::default().validate(32).is_ok());
        assert!(AdaptiveConfig::default().validate(8).is_err());
        let bad = AdaptiveConfig {
            beta: 0.0,
            ..AdaptiveConfig::default()
        };
        assert!(bad.validate(32).is_err());
    }
}
