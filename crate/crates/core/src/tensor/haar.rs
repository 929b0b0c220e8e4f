use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

/// Orthogonal `K×K` Haar matrix built by the recursion
/// `H_2N = (1/√2) [H_N ⊗ (1, 1); I_N ⊗ (1, −1)]`.
///
/// Rows are analysis vectors: the coefficient vector of a length-`K`
/// sequence `x` is `H·x`, and the first row is the constant `1/√K`.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarMatrix {
    order: usize,
    entries: Vec<f64>,
}

/// Builds the Haar matrix of order `k`.
pub fn haar_matrix(k: usize) -> Result<HaarMatrix> {
    if k < 2 || !k.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(k));
    }
    // Entries are sign · 2^(−e/2); tracking (sign, e) keeps even powers exact.
    let mut current: Vec<(i8, u32)> = vec![(1, 1), (1, 1), (1, 1), (-1, 1)];
    let mut n = 2;
    while n < k {
        let m = 2 * n;
        let mut next = vec![(0, 0); m * m];
        // H_N ⊗ (1, 1)
        for r in 0..n {
            for c in 0..n {
                let (sign, e) = current[r * n + c];
                next[r * m + 2 * c] = (sign, e + 1);
                next[r * m + 2 * c + 1] = (sign, e + 1);
            }
        }
        // I_N ⊗ (1, −1)
        for r in 0..n {
            next[(n + r) * m + 2 * r] = (1, 1);
            next[(n + r) * m + 2 * r + 1] = (-1, 1);
        }
        current = next;
        n = m;
    }
    let magnitude = |e: u32| {
        let even = 0.5f64.powi((e / 2) as i32);
        if e.is_multiple_of(2) {
            even
        } else {
            even * FRAC_1_SQRT_2
        }
    };
    let current = current
        .into_iter()
        .map(|(sign, e)| f64::from(sign) * magnitude(e))
        .collect();
    Ok(HaarMatrix {
        order: k,
        entries: current,
    })
}

impl HaarMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.order + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.order..(row + 1) * self.order]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Applies the matrix (or its transpose) to `K` stacked vectors of length
    /// `len` using the fast lifting form, in place.
    ///
    /// Equivalent to the dense product but `O(K·len)`.
    pub fn apply(&self, data: &mut [f64], len: usize, scratch: &mut Vec<f64>) {
        haar_forward(data, self.order, len, scratch);
    }

    pub fn apply_transpose(&self, data: &mut [f64], len: usize, scratch: &mut Vec<f64>) {
        haar_inverse(data, self.order, len, scratch);
    }

    /// Dense reference product `out[r] = Σ_c H[r][c]·data[c]` on stacked vectors.
    pub fn apply_dense(&self, data: &[f64], len: usize) -> Vec<f64> {
        let k = self.order;
        let mut out = vec![0.0; k * len];
        for r in 0..k {
            let dst = &mut out[r * len..(r + 1) * len];
            for c in 0..k {
                let h = self.get(r, c);
                if h == 0.0 {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(&data[c * len..(c + 1) * len]) {
                    *d += h * s;
                }
            }
        }
        out
    }
}

fn haar_forward(data: &mut [f64], k: usize, len: usize, scratch: &mut Vec<f64>) {
    debug_assert_eq!(data.len(), k * len);
    scratch.resize(k * len, 0.0);
    let mut n = k;
    while n >= 2 {
        let half = n / 2;
        for i in 0..half {
            let (even, odd) = (2 * i * len, (2 * i + 1) * len);
            for p in 0..len {
                let a = data[even + p];
                let b = data[odd + p];
                scratch[i * len + p] = (a + b) * FRAC_1_SQRT_2;
                scratch[(half + i) * len + p] = (a - b) * FRAC_1_SQRT_2;
            }
        }
        data[..n * len].copy_from_slice(&scratch[..n * len]);
        n = half;
    }
}

fn haar_inverse(data: &mut [f64], k: usize, len: usize, scratch: &mut Vec<f64>) {
    debug_assert_eq!(data.len(), k * len);
    scratch.resize(k * len, 0.0);
    let mut n = 2;
    while n <= k {
        let half = n / 2;
        for i in 0..half {
            let (sum, diff) = (i * len, (half + i) * len);
            for p in 0..len {
                let s = data[sum + p];
                let d = data[diff + p];
                scratch[2 * i * len + p] = (s + d) * FRAC_1_SQRT_2;
                scratch[(2 * i + 1) * len + p] = (s - d) * FRAC_1_SQRT_2;
            }
        }
        data[..n * len].copy_from_slice(&scratch[..n * len]);
        n *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_two_closed_form() {
        let h = haar_matrix(2).unwrap();
        let s = FRAC_1_SQRT_2;
        assert_eq!(h.entries(), &[s, s, s, -s]);
    }

    #[test]
    fn order_four_closed_form() {
        let h = haar_matrix(4).unwrap();
        let s = FRAC_1_SQRT_2;
        let expected = [
            [0.5, 0.5, 0.5, 0.5],
            [0.5, 0.5, -0.5, -0.5],
            [s, -s, 0.0, 0.0],
            [0.0, 0.0, s, -s],
        ];
        for (r, row) in expected.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(h.get(r, c), v, "({r},{c})");
            }
        }
    }

    #[test]
    fn rejects_non_powers_of_two() {
        assert!(matches!(haar_matrix(3), Err(Error::NotPowerOfTwo(3))));
        assert!(matches!(haar_matrix(1), Err(Error::NotPowerOfTwo(1))));
        assert!(matches!(haar_matrix(0), Err(Error::NotPowerOfTwo(0))));
        assert!(matches!(haar_matrix(12), Err(Error::NotPowerOfTwo(12))));
    }

    #[test]
    fn orthogonal_up_to_64() {
        for k in [2, 4, 8, 16, 32, 64] {
            let h = haar_matrix(k).unwrap();
            for i in 0..k {
                for j in 0..k {
                    let dot: f64 = h.row(i).iter().zip(h.row(j)).map(|(a, b)| a * b).sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expected).abs() < 1e-10, "k={k} ({i},{j}) {dot}");
                }
            }
            let inv = 1.0 / (k as f64).sqrt();
            assert!(h.row(0).iter().all(|&v| (v - inv).abs() < 1e-15));
        }
    }

    #[test]
    fn fast_matches_dense() {
        for k in [2, 4, 8, 32] {
            let h = haar_matrix(k).unwrap();
            let len = 3;
            let data: Vec<f64> = (0..k * len)
                .map(|i| ((i * 37 + 11) % 17) as f64 - 8.0)
                .collect();
            let dense = h.apply_dense(&data, len);
            let mut fast = data.clone();
            let mut scratch = Vec::new();
            h.apply(&mut fast, len, &mut scratch);
            for (a, b) in dense.iter().zip(&fast) {
                assert!((a - b).abs() < 1e-12);
            }
            h.apply_transpose(&mut fast, len, &mut scratch);
            for (a, b) in data.iter().zip(&fast) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
