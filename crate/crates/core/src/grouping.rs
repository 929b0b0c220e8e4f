//! Reference scheduling and block matching.
//!
//! RGB images are matched with the green-channel prior: when the reference
//! patch's green energy dominates (`‖G‖ ≥ max(‖R‖, ‖B‖)/γ`) only the green
//! channel is compared, otherwise the per-pixel RGB average. Other band
//! counts compare a single guide plane (the mean of the middle third of the
//! bands).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, Profile};
use crate::tensor::Tensor3;

/// Top-left corner of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchCoord {
    pub row: usize,
    pub col: usize,
}

impl PatchCoord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Block-matching parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub patch_size: usize,
    pub group_size: usize,
    /// Search radius; candidates lie in a `(2W+1)²` window around the reference.
    pub window: usize,
    pub gcp_gamma: f64,
    pub stride_inner: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            group_size: 32,
            window: 18,
            gcp_gamma: 1.2,
            stride_inner: 1,
        }
    }
}

/// `K` matched patches stacked along a fourth mode.
///
/// `data` holds the patches back to back, each `ps×ps×C` in frontal-slice
/// layout (channel-major, then row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGroup {
    pub patch_size: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub coords: Vec<PatchCoord>,
    pub distances: Vec<f64>,
}

impl PatchGroup {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Values per patch, `ps²·C`.
    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn patch(&self, k: usize) -> &[f64] {
        let len = self.patch_len();
        &self.data[k * len..(k + 1) * len]
    }

    pub fn patch_tensor(&self, k: usize) -> Tensor3 {
        Tensor3::from_vec(
            (self.patch_size, self.patch_size, self.channels),
            self.patch(k).to_vec(),
        )
        .expect("consistent patch dims")
    }

    /// Builds a group from raw patches with zero distances and dummy coords;
    /// used for synthetic groups.
    pub fn from_patches(patch_size: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let len = patch_size * patch_size * channels;
        if len == 0 || !data.len().is_multiple_of(len) {
            return Err(Error::Dims(format!(
                "{} values do not split into {patch_size}x{patch_size}x{channels} patches",
                data.len()
            )));
        }
        let k = data.len() / len;
        Ok(Self {
            patch_size,
            channels,
            data,
            coords: vec![PatchCoord::new(0, 0); k],
            distances: vec![0.0; k],
        })
    }
}

/// Copies the `ps×ps×C` patch at `coord` in frontal-slice layout.
pub fn extract_patch(image: &ImageTensor, coord: PatchCoord, ps: usize, out: &mut [f64]) {
    let c = image.channels();
    let w = image.width();
    let data = image.data();
    debug_assert_eq!(out.len(), ps * ps * c);
    for r in 0..ps {
        let base = ((coord.row + r) * w + coord.col) * c;
        for col in 0..ps {
            let px = base + col * c;
            for ch in 0..c {
                out[ch * ps * ps + r * ps + col] = data[px + ch];
            }
        }
    }
}

/// Distance between two patches (`ps×ps×C` tensors) with the green-channel
/// prior for `C = 3`, a guide-band mean otherwise. The branch depends on
/// `p_i` alone.
pub fn gcp_distance(p_i: &Tensor3, p_j: &Tensor3, gcp_gamma: f64) -> Result<f64> {
    if p_i.dims() != p_j.dims() {
        return Err(Error::Dims(format!("{:?} vs {:?}", p_i.dims(), p_j.dims())));
    }
    let (n1, n2, c) = p_i.dims();
    let plane = n1 * n2;
    let norm = |t: &Tensor3, ch: usize| t.slice(ch).iter().map(|v| v * v).sum::<f64>().sqrt();
    if c == 3 {
        let (r, g, b) = (norm(p_i, 0), norm(p_i, 1), norm(p_i, 2));
        if green_dominates(r, g, b, gcp_gamma) {
            let d: f64 = p_i
                .slice(1)
                .iter()
                .zip(p_j.slice(1))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            return Ok(d.sqrt());
        }
        let mut d = 0.0;
        for p in 0..plane {
            let a = (p_i.slice(0)[p] + p_i.slice(1)[p] + p_i.slice(2)[p]) / 3.0;
            let b = (p_j.slice(0)[p] + p_j.slice(1)[p] + p_j.slice(2)[p]) / 3.0;
            d += (a - b) * (a - b);
        }
        return Ok(d.sqrt());
    }
    let bands = crate::image::guide_bands(c);
    let n = bands.len() as f64;
    let mut d = 0.0;
    for p in 0..plane {
        let a: f64 = bands.clone().map(|ch| p_i.slice(ch)[p]).sum::<f64>() / n;
        let b: f64 = bands.clone().map(|ch| p_j.slice(ch)[p]).sum::<f64>() / n;
        d += (a - b) * (a - b);
    }
    Ok(d.sqrt())
}

#[inline]
fn green_dominates(r: f64, g: f64, b: f64, gamma: f64) -> bool {
    g >= (r / gamma).max(b / gamma)
}

/// Reference grid with step `stride`, last row/column clamped to the border.
pub fn schedule_references(
    height: usize,
    width: usize,
    ps: usize,
    stride: usize,
) -> Vec<PatchCoord> {
    let rows = axis_positions(height, ps, stride);
    let cols = axis_positions(width, ps, stride);
    rows.iter()
        .flat_map(|&r| cols.iter().map(move |&c| PatchCoord::new(r, c)))
        .collect()
}

fn axis_positions(len: usize, ps: usize, stride: usize) -> Vec<usize> {
    assert!(len >= ps && stride >= 1);
    let last = len - ps;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().expect("at least position 0") != last {
        out.push(last);
    }
    out
}

/// Per-search instrumentation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub candidates: usize,
    /// Whether the reference took the green-only branch.
    pub green_branch: bool,
    /// Pixel value pairs compared over the whole search.
    pub value_pairs: usize,
}

enum Guide {
    /// Interleaved RGB, distances chosen per reference.
    Gcp {
        gamma: f64,
    },
    Plane(Vec<f64>),
}

/// Block matcher bound to one image.
pub struct Matcher<'a> {
    image: &'a ImageTensor,
    cfg: MatchConfig,
    guide: Guide,
}

impl<'a> Matcher<'a> {
    pub fn new(image: &'a ImageTensor, cfg: MatchConfig) -> Result<Self> {
        validate(image, &cfg)?;
        let guide = if image.channels() == 3 && image.profile() == Profile::Srgb {
            Guide::Gcp {
                gamma: cfg.gcp_gamma,
            }
        } else {
            Guide::Plane(image.guide_plane())
        };
        Ok(Self { image, cfg, guide })
    }

    pub fn config(&self) -> &MatchConfig {
        &self.cfg
    }

    pub fn image(&self) -> &ImageTensor {
        self.image
    }

    /// Finds the `K` best matches of the patch at `reference`.
    pub fn match_patches(&self, reference: PatchCoord) -> Result<PatchGroup> {
        self.match_with_stats(reference).map(|(g, _)| g)
    }

    pub fn match_with_stats(&self, reference: PatchCoord) -> Result<(PatchGroup, SearchStats)> {
        let img = self.image;
        let (h, w) = (img.height(), img.width());
        let MatchConfig {
            patch_size: ps,
            group_size: k,
            window,
            stride_inner,
            ..
        } = self.cfg;
        if reference.row + ps > h || reference.col + ps > w {
            return Err(Error::Coord {
                row: reference.row,
                col: reference.col,
                height: h,
                width: w,
            });
        }
        let offsets = |pos: usize, limit: usize| {
            let lo = pos - (pos.min(window) / stride_inner) * stride_inner;
            let hi = (pos + window).min(limit);
            (lo..=hi).step_by(stride_inner)
        };
        let mut stats = SearchStats::default();
        let mut candidates: Vec<(f64, PatchCoord)> = Vec::with_capacity((2 * window + 1).pow(2));
        let green = match &self.guide {
            Guide::Gcp { gamma } => Some(self.reference_is_green(reference, *gamma)),
            Guide::Plane(_) => None,
        };
        stats.green_branch = green.unwrap_or(false);
        for row in offsets(reference.row, h - ps) {
            for col in offsets(reference.col, w - ps) {
                let cand = PatchCoord::new(row, col);
                if cand == reference {
                    continue;
                }
                let d2 = match (&self.guide, green) {
                    (Guide::Gcp { .. }, Some(true)) => {
                        stats.value_pairs += ps * ps;
                        self.channel_distance2(reference, cand, 1)
                    }
                    (Guide::Gcp { .. }, _) => {
                        stats.value_pairs += 3 * ps * ps;
                        self.average_distance2(reference, cand)
                    }
                    (Guide::Plane(plane), _) => {
                        stats.value_pairs += ps * ps;
                        plane_distance2(plane, w, ps, reference, cand)
                    }
                };
                candidates.push((d2, cand));
            }
        }
        stats.candidates = candidates.len() + 1;

        let order =
            |a: &(f64, PatchCoord), b: &(f64, PatchCoord)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let keep = (k - 1).min(candidates.len());
        if keep > 0 && keep < candidates.len() {
            candidates.select_nth_unstable_by(keep - 1, order);
            candidates.truncate(keep);
        }
        candidates.sort_unstable_by(order);
        candidates.truncate(keep);

        let mut best: Vec<(f64, PatchCoord)> = Vec::with_capacity(k);
        best.push((0.0, reference));
        best.extend(candidates.into_iter().map(|(d2, c)| (d2.sqrt(), c)));
        if best.len() < k {
            // Cyclic duplication, then a stable re-sort keeps distances ordered.
            let m = best.len();
            let mut filled: Vec<(f64, PatchCoord)> = (0..k).map(|i| best[i % m]).collect();
            filled.sort_by(|a, b| a.0.total_cmp(&b.0));
            best = filled;
        }

        let len = ps * ps * img.channels();
        let mut data = vec![0.0; k * len];
        for (slot, &(_, coord)) in data.chunks_exact_mut(len).zip(&best) {
            extract_patch(img, coord, ps, slot);
        }
        Ok((
            PatchGroup {
                patch_size: ps,
                channels: img.channels(),
                data,
                coords: best.iter().map(|b| b.1).collect(),
                distances: best.iter().map(|b| b.0).collect(),
            },
            stats,
        ))
    }

    fn reference_is_green(&self, reference: PatchCoord, gamma: f64) -> bool {
        let ps = self.cfg.patch_size;
        let w = self.image.width();
        let data = self.image.data();
        let mut energy = [0.0f64; 3];
        for r in 0..ps {
            let base = ((reference.row + r) * w + reference.col) * 3;
            for px in data[base..base + 3 * ps].chunks_exact(3) {
                for ch in 0..3 {
                    energy[ch] += px[ch] * px[ch];
                }
            }
        }
        green_dominates(energy[0].sqrt(), energy[1].sqrt(), energy[2].sqrt(), gamma)
    }

    fn channel_distance2(&self, a: PatchCoord, b: PatchCoord, ch: usize) -> f64 {
        let ps = self.cfg.patch_size;
        let c = self.image.channels();
        let w = self.image.width();
        let data = self.image.data();
        let mut d = 0.0;
        for r in 0..ps {
            let ra = ((a.row + r) * w + a.col) * c + ch;
            let rb = ((b.row + r) * w + b.col) * c + ch;
            for x in 0..ps {
                let diff = data[ra + x * c] - data[rb + x * c];
                d += diff * diff;
            }
        }
        d
    }

    fn average_distance2(&self, a: PatchCoord, b: PatchCoord) -> f64 {
        let ps = self.cfg.patch_size;
        let w = self.image.width();
        let data = self.image.data();
        let mut d = 0.0;
        for r in 0..ps {
            let ra = ((a.row + r) * w + a.col) * 3;
            let rb = ((b.row + r) * w + b.col) * 3;
            for (pa, pb) in data[ra..ra + 3 * ps]
                .chunks_exact(3)
                .zip(data[rb..rb + 3 * ps].chunks_exact(3))
            {
                let diff = (pa[0] + pa[1] + pa[2] - pb[0] - pb[1] - pb[2]) / 3.0;
                d += diff * diff;
            }
        }
        d
    }
}

fn plane_distance2(plane: &[f64], w: usize, ps: usize, a: PatchCoord, b: PatchCoord) -> f64 {
    let mut d = 0.0;
    for r in 0..ps {
        let ra = (a.row + r) * w + a.col;
        let rb = (b.row + r) * w + b.col;
        for (x, y) in plane[ra..ra + ps].iter().zip(&plane[rb..rb + ps]) {
            let diff = x - y;
            d += diff * diff;
        }
    }
    d
}

fn validate(image: &ImageTensor, cfg: &MatchConfig) -> Result<()> {
    let ps = cfg.patch_size;
    if ps == 0 || image.height() < ps || image.width() < ps {
        return Err(Error::PatchSize {
            height: image.height(),
            width: image.width(),
            patch_size: ps,
        });
    }
    if cfg.group_size == 0 {
        return Err(Error::Config("group size must be positive".into()));
    }
    if cfg.stride_inner == 0 {
        return Err(Error::Config("inner stride must be positive".into()));
    }
    if cfg.gcp_gamma.is_nan() || cfg.gcp_gamma <= 0.0 {
        return Err(Error::Config("gcp gamma must be positive".into()));
    }
    Ok(())
}

/// One-shot matching; builds a [`Matcher`] for a single reference.
pub fn match_patches(
    image: &ImageTensor,
    reference: PatchCoord,
    cfg: &MatchConfig,
) -> Result<PatchGroup> {
    Matcher::new(image, *cfg)?.match_patches(reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch3(f: impl Fn(usize, usize, usize) -> f64) -> Tensor3 {
        Tensor3::from_fn((8, 8, 3), f)
    }

    #[test]
    fn distance_of_identical_patches_is_zero() {
        let p = patch3(|i, j, k| (i * 8 + j + k) as f64);
        assert_eq!(gcp_distance(&p, &p, 1.2).unwrap(), 0.0);
    }

    #[test]
    fn green_branch_on_equal_norms() {
        let ones = patch3(|_, _, _| 1.0);
        let zeros = patch3(|_, _, _| 0.0);
        assert!((gcp_distance(&ones, &zeros, 1.2).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn average_branch_on_red_patch() {
        let red = patch3(|_, _, k| if k == 0 { 1.0 } else { 0.0 });
        let zeros = patch3(|_, _, _| 0.0);
        assert!((gcp_distance(&red, &zeros, 1.2).unwrap() - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn branch_depends_on_first_patch_only() {
        let red = patch3(|_, _, k| if k == 0 { 1.0 } else { 0.0 });
        let zeros = patch3(|_, _, _| 0.0);
        // Zero patch passes the dominance test (0 ≥ 0) so the green branch is taken.
        assert_eq!(gcp_distance(&zeros, &red, 1.2).unwrap(), 0.0);
    }

    #[test]
    fn distance_dims_mismatch() {
        let a = Tensor3::zeros((8, 8, 3));
        let b = Tensor3::zeros((4, 4, 3));
        assert!(matches!(gcp_distance(&a, &b, 1.2), Err(Error::Dims(_))));
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(schedule_references(8, 8, 8, 4), vec![PatchCoord::new(0, 0)]);
        let grid = schedule_references(12, 12, 8, 4);
        assert_eq!(
            grid,
            vec![
                PatchCoord::new(0, 0),
                PatchCoord::new(0, 4),
                PatchCoord::new(4, 0),
                PatchCoord::new(4, 4)
            ]
        );
        assert_eq!(axis_positions(13, 8, 4), vec![0, 4, 5]);
    }

    #[test]
    fn single_candidate_is_duplicated() {
        let img = ImageTensor::from_fn(8, 8, 3, |r, c, ch| (r * 8 + c + ch) as f64);
        let cfg = MatchConfig::default();
        let g = match_patches(&img, PatchCoord::new(0, 0), &cfg).unwrap();
        assert_eq!(g.len(), 32);
        assert!(g.coords.iter().all(|&c| c == PatchCoord::new(0, 0)));
        assert!(g.distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn constant_image_gives_zero_distances() {
        let img = ImageTensor::from_fn(40, 40, 1, |_, _, _| 7.0);
        let cfg = MatchConfig::default();
        let g = match_patches(&img, PatchCoord::new(16, 16), &cfg).unwrap();
        assert_eq!(g.coords[0], PatchCoord::new(16, 16));
        assert!(g.distances.iter().all(|&d| d == 0.0));
        assert_eq!(g.len(), 32);
    }

    #[test]
    fn periodic_texture_matches_exact_repeats() {
        let img = ImageTensor::from_fn(64, 64, 3, |r, c, ch| {
            ((r % 8) * 13 + (c % 8) * 7 + ch * 3) as f64
        });
        let cfg = MatchConfig {
            group_size: 8,
            ..MatchConfig::default()
        };
        let g = match_patches(&img, PatchCoord::new(24, 24), &cfg).unwrap();
        for (coord, d) in g.coords.iter().zip(&g.distances) {
            assert_eq!(*d, 0.0);
            assert_eq!(coord.row % 8, 0);
            assert_eq!(coord.col % 8, 0);
        }
    }

    #[test]
    fn small_image_rejected() {
        let img = ImageTensor::zeros(6, 10, 1);
        let cfg = MatchConfig::default();
        assert!(matches!(
            match_patches(&img, PatchCoord::new(0, 0), &cfg),
            Err(Error::PatchSize { .. })
        ));
    }

    #[test]
    fn green_branch_counts_fewer_pairs() {
        let green = ImageTensor::from_fn(
            32,
            32,
            3,
            |r, c, ch| if ch == 1 { (r * c) as f64 } else { 1.0 },
        );
        let red =
            ImageTensor::from_fn(
                32,
                32,
                3,
                |r, c, ch| if ch == 0 { (r * c) as f64 + 50.0 } else { 1.0 },
            );
        let cfg = MatchConfig {
            group_size: 8,
            window: 8,
            ..MatchConfig::default()
        };
        let (_, gs) = Matcher::new(&green, cfg)
            .unwrap()
            .match_with_stats(PatchCoord::new(12, 12))
            .unwrap();
        let (_, rs) = Matcher::new(&red, cfg)
            .unwrap()
            .match_with_stats(PatchCoord::new(12, 12))
            .unwrap();
        assert!(gs.green_branch && !rs.green_branch);
        assert_eq!(gs.candidates, rs.candidates);
        assert_eq!(gs.value_pairs * 3, rs.value_pairs);
        assert_eq!(gs.value_pairs, (gs.candidates - 1) * 64);
    }

    #[test]
    fn matcher_agrees_with_standalone_distance() {
        let img = ImageTensor::from_fn(30, 30, 3, |r, c, ch| {
            ((r * 31 + c * 17 + ch * 5) % 23) as f64
        });
        let cfg = MatchConfig {
            group_size: 16,
            window: 8,
            ..MatchConfig::default()
        };
        let reference = PatchCoord::new(10, 11);
        let g = match_patches(&img, reference, &cfg).unwrap();
        let p_ref = g.patch_tensor(0);
        for k in 1..g.len() {
            let d = gcp_distance(&p_ref, &g.patch_tensor(k), cfg.gcp_gamma).unwrap();
            assert!((d - g.distances[k]).abs() < 1e-9);
        }
        assert!(g.distances.windows(2).all(|w| w[0] <= w[1]));
    }
}
