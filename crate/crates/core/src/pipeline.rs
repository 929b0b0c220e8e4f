//! End-to-end denoising: grouping, filtering and aggregation.
//!
//! References are processed in fixed-size batches. Within a batch the groups
//! are matched and filtered in parallel; the estimates are then written into
//! the accumulator in reference order on the calling thread. The summation
//! order of every pixel therefore depends only on the reference schedule,
//! which makes the output bit-identical for any number of worker threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{extract_patch, schedule_references, MatchConfig, Matcher, PatchCoord};
use crate::image::{ImageTensor, Profile};
use crate::noise::{self, AdaptiveConfig, NoiseModel, NoiseSource};
use crate::tensor::{haar_matrix, HaarMatrix};
use crate::transform::{self, GlobalBasis, Workspace};

/// References filtered per parallel batch.
const BATCH: usize = 256;

/// Where the noise level comes from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaSource {
    /// Fixed σ on the 0–255 scale.
    User { value: f64 },
    /// Median-absolute-deviation estimate on the guide plane.
    #[default]
    Baseline,
    /// Per-subimage estimates in row-major tile order.
    External { values: Vec<f64> },
}

/// Weight given to every pixel of an estimated patch during aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Uniform,
    /// `1 / nnz` of the group's retained coefficients.
    InverseNnz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiseConfig {
    pub patch_size: usize,
    pub group_size: usize,
    pub window: usize,
    pub stride_ref: usize,
    pub stride_inner: usize,
    pub gcp_gamma: f64,
    pub sigma: SigmaSource,
    pub adaptive: bool,
    pub adaptive_config: AdaptiveConfig,
    pub aggregation: Aggregation,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            group_size: 32,
            window: 18,
            stride_ref: 4,
            stride_inner: 1,
            gcp_gamma: 1.2,
            sigma: SigmaSource::Baseline,
            adaptive: false,
            adaptive_config: AdaptiveConfig::default(),
            aggregation: Aggregation::Uniform,
            threads: 0,
        }
    }
}

impl DenoiseConfig {
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma: SigmaSource::User { value: sigma },
            ..Self::default()
        }
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            patch_size: self.patch_size,
            group_size: self.group_size,
            window: self.window,
            gcp_gamma: self.gcp_gamma,
            stride_inner: self.stride_inner,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(Error::Config(format!(
                "patch size {} must be at least 2",
                self.patch_size
            )));
        }
        if self.group_size < 2 || !self.group_size.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(self.group_size));
        }
        if self.stride_ref == 0 || self.stride_inner == 0 {
            return Err(Error::Config("strides must be positive".into()));
        }
        if self.gcp_gamma.is_nan() || self.gcp_gamma <= 0.0 {
            return Err(Error::Config("gcp gamma must be positive".into()));
        }
        match &self.sigma {
            SigmaSource::User { value } if !(value.is_finite() && *value >= 0.0) => {
                return Err(Error::Config(format!(
                    "sigma {value} must be finite and nonnegative"
                )));
            }
            SigmaSource::External { values }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) =>
            {
                return Err(Error::Config(
                    "external sigmas must be finite and nonnegative".into(),
                ));
            }
            _ => {}
        }
        if self.adaptive {
            self.adaptive_config.validate(self.group_size)?;
            if self.adaptive_config.subimage_height < self.patch_size
                || self.adaptive_config.subimage_width < self.patch_size
            {
                return Err(Error::Config(
                    "subimage must be at least one patch wide".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Running weighted sums for aggregation.
#[derive(Debug, Clone)]
pub struct Accumulator {
    height: usize,
    width: usize,
    channels: usize,
    value_sum: Vec<f64>,
    weight_sum: Vec<f64>,
}

impl Accumulator {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            channels,
            value_sum: vec![0.0; n * channels],
            weight_sum: vec![0.0; n],
        }
    }

    /// Adds `patches` (frontal-slice layout, back to back) at `coords`.
    pub fn aggregate(
        &mut self,
        patches: &[f64],
        coords: &[PatchCoord],
        ps: usize,
        weight: f64,
    ) -> Result<()> {
        let c = self.channels;
        let len = ps * ps * c;
        if patches.len() != len * coords.len() {
            return Err(Error::Dims(format!(
                "{} values for {} patches of {ps}x{ps}x{c}",
                patches.len(),
                coords.len()
            )));
        }
        if let Some(bad) = coords
            .iter()
            .find(|p| p.row + ps > self.height || p.col + ps > self.width)
        {
            return Err(Error::Coord {
                row: bad.row,
                col: bad.col,
                height: self.height,
                width: self.width,
            });
        }
        let plane = ps * ps;
        for (patch, coord) in patches.chunks_exact(len).zip(coords) {
            for r in 0..ps {
                for x in 0..ps {
                    let px = (coord.row + r) * self.width + coord.col + x;
                    self.weight_sum[px] += weight;
                    let dst = &mut self.value_sum[px * c..(px + 1) * c];
                    for (ch, d) in dst.iter_mut().enumerate() {
                        *d += weight * patch[ch * plane + r * ps + x];
                    }
                }
            }
        }
        Ok(())
    }

    /// `value_sum / weight_sum`; fails if a pixel was never written.
    pub fn finish(&self) -> Result<ImageTensor> {
        let c = self.channels;
        let mut data = Vec::with_capacity(self.value_sum.len());
        for (px, &w) in self.weight_sum.iter().enumerate() {
            if w.is_nan() || w <= 0.0 {
                return Err(Error::Numeric(format!(
                    "pixel ({}, {}) received no estimate",
                    px / self.width,
                    px % self.width
                )));
            }
            data.extend(self.value_sum[px * c..(px + 1) * c].iter().map(|v| v / w));
        }
        ImageTensor::new(self.height, self.width, c, data)
    }
}

/// Result of a denoising run with per-subimage provenance.
#[derive(Debug, Clone)]
pub struct DenoiseOutput {
    pub image: ImageTensor,
    /// One entry per subimage (a single entry in non-adaptive mode).
    pub noise: Vec<NoiseModel>,
    pub tiles: Vec<Tile>,
    pub groups: usize,
    pub bases_learned: usize,
    pub seconds: f64,
}

impl DenoiseOutput {
    pub fn adjusted_fraction(&self) -> f64 {
        if self.noise.is_empty() {
            return 0.0;
        }
        self.noise.iter().filter(|m| m.adjusted).count() as f64 / self.noise.len() as f64
    }

    /// Mean σ used for thresholding across subimages.
    pub fn mean_sigma(&self) -> f64 {
        if self.noise.is_empty() {
            return 0.0;
        }
        self.noise.iter().map(|m| m.sigma_hat).sum::<f64>() / self.noise.len() as f64
    }
}

/// Rectangular subimage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

/// Row-major tiles of `sub_h × sub_w`; the remainder along each axis is
/// merged into the last tile.
pub fn tile_grid(height: usize, width: usize, sub_h: usize, sub_w: usize) -> Vec<Tile> {
    let split = |len: usize, sub: usize| -> Vec<(usize, usize)> {
        let n = (len / sub).max(1);
        (0..n)
            .map(|i| {
                let start = i * sub;
                let end = if i + 1 == n { len } else { start + sub };
                (start, end - start)
            })
            .collect()
    };
    let rows = split(height, sub_h);
    let cols = split(width, sub_w);
    rows.iter()
        .flat_map(|&(row, h)| {
            cols.iter().map(move |&(col, w)| Tile {
                row,
                col,
                height: h,
                width: w,
            })
        })
        .collect()
}

/// Denoises `image` and returns only the result.
pub fn denoise(image: &ImageTensor, cfg: &DenoiseConfig) -> Result<ImageTensor> {
    denoise_with_report(image, cfg).map(|out| out.image)
}

/// Denoises a multiband cube: the same pipeline with the band count as the
/// third tensor mode and the middle-third band mean as the matching guide.
pub fn denoise_multiband(image: &ImageTensor, cfg: &DenoiseConfig) -> Result<ImageTensor> {
    if image.profile() == Profile::Multiband {
        denoise(image, cfg)
    } else {
        denoise(&image.clone().with_profile(Profile::Multiband), cfg)
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))
}

/// Denoises `image`, reporting the noise model of every subimage.
pub fn denoise_with_report(image: &ImageTensor, cfg: &DenoiseConfig) -> Result<DenoiseOutput> {
    cfg.validate()?;
    if image.height() < cfg.patch_size || image.width() < cfg.patch_size {
        return Err(Error::PatchSize {
            height: image.height(),
            width: image.width(),
            patch_size: cfg.patch_size,
        });
    }
    let start = Instant::now();
    let pool = thread_pool(cfg.threads)?;
    let mut out = pool.install(|| {
        if cfg.adaptive {
            denoise_adaptive(image, cfg)
        } else {
            denoise_global(image, cfg)
        }
    })?;
    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

fn denoise_global(image: &ImageTensor, cfg: &DenoiseConfig) -> Result<DenoiseOutput> {
    let (sigma_est, source) = match &cfg.sigma {
        SigmaSource::User { value } => (*value, NoiseSource::User),
        SigmaSource::Baseline => (
            noise::estimate_sigma_baseline(image),
            NoiseSource::BaselineEstimator,
        ),
        SigmaSource::External { values } => match values.as_slice() {
            [v] => (*v, NoiseSource::External),
            _ => {
                return Err(Error::Config(format!(
                    "non-adaptive mode needs exactly one external sigma, got {}",
                    values.len()
                )))
            }
        },
    };
    let model = NoiseModel {
        sigma_est,
        sigma_hat: sigma_est,
        rank_position: 1,
        adjusted: false,
        source,
        votes_adjust: 0,
        votes_total: 0,
    };
    let filter = GroupFilter::new(image, cfg, None)?;
    let (result, groups) = filter.run(sigma_est)?;
    Ok(DenoiseOutput {
        image: result,
        noise: vec![model],
        tiles: vec![Tile {
            row: 0,
            col: 0,
            height: image.height(),
            width: image.width(),
        }],
        groups,
        bases_learned: 1,
        seconds: 0.0,
    })
}

/// Seed of the vote in subimage `index`.
pub fn tile_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64)
        .wrapping_add(1)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn denoise_adaptive(image: &ImageTensor, cfg: &DenoiseConfig) -> Result<DenoiseOutput> {
    let acfg = &cfg.adaptive_config;
    let tiles = tile_grid(
        image.height(),
        image.width(),
        acfg.subimage_height,
        acfg.subimage_width,
    );
    if let SigmaSource::External { values } = &cfg.sigma {
        if values.len() != tiles.len() {
            return Err(Error::Config(format!(
                "{} external sigmas for {} subimages",
                values.len(),
                tiles.len()
            )));
        }
    }
    let shared_basis = if acfg.basis_per_subimage {
        None
    } else {
        Some(learn_image_basis(image, cfg)?)
    };
    let mut output = ImageTensor::zeros(image.height(), image.width(), image.channels())
        .with_profile(image.profile());
    let mut models = Vec::with_capacity(tiles.len());
    let mut groups = 0;
    for (index, tile) in tiles.iter().enumerate() {
        let sub = image.crop(tile.row, tile.col, tile.height, tile.width);
        let (sigma_est, source) = match &cfg.sigma {
            SigmaSource::User { value } => (*value, NoiseSource::User),
            SigmaSource::Baseline => (
                noise::estimate_sigma_baseline(&sub),
                NoiseSource::BaselineEstimator,
            ),
            SigmaSource::External { values } => (values[index], NoiseSource::External),
        };
        let matcher = Matcher::new(&sub, cfg.match_config())?;
        let vote_cfg = AdaptiveConfig {
            seed: tile_seed(acfg.seed, index),
            ..acfg.clone()
        };
        let positions =
            noise::sample_rank_positions(&matcher, acfg.n_sample_groups, vote_cfg.seed)?;
        let mut model = noise::decide_from_positions(sigma_est, source, &positions, &vote_cfg);
        if !acfg.local_adjustment {
            model.adjusted = false;
            model.sigma_hat = sigma_est;
        }
        let filter = GroupFilter::new(&sub, cfg, shared_basis.clone())?;
        let (denoised, n) = filter.run(model.sigma_hat)?;
        output.paste(&denoised, tile.row, tile.col);
        groups += n;
        models.push(model);
    }
    Ok(DenoiseOutput {
        image: output,
        noise: models,
        bases_learned: if acfg.basis_per_subimage {
            tiles.len()
        } else {
            1
        },
        tiles,
        groups,
        seconds: 0.0,
    })
}

/// Learns the global basis from every scheduled reference patch of `image`.
pub fn learn_image_basis(image: &ImageTensor, cfg: &DenoiseConfig) -> Result<GlobalBasis> {
    let ps = cfg.patch_size;
    let refs = schedule_references(image.height(), image.width(), ps, cfg.stride_ref);
    let len = ps * ps * image.channels();
    let mut flat = vec![0.0; refs.len() * len];
    flat.par_chunks_mut(len)
        .zip(refs.par_iter())
        .for_each(|(slot, &coord)| extract_patch(image, coord, ps, slot));
    transform::learn_basis_from_flat(&flat, ps, image.channels())
}

/// Estimated group plus its placement.
struct GroupEstimate {
    coords: Vec<PatchCoord>,
    data: Vec<f64>,
    nnz: usize,
}

/// One image region with its basis, Haar matrix and matcher.
pub struct GroupFilter<'a> {
    image: &'a ImageTensor,
    cfg: &'a DenoiseConfig,
    matcher: Matcher<'a>,
    basis: GlobalBasis,
    haar: HaarMatrix,
    refs: Vec<PatchCoord>,
}

impl<'a> GroupFilter<'a> {
    /// Prepares filtering of `image`, learning a basis unless one is given.
    pub fn new(
        image: &'a ImageTensor,
        cfg: &'a DenoiseConfig,
        basis: Option<GlobalBasis>,
    ) -> Result<Self> {
        let matcher = Matcher::new(image, cfg.match_config())?;
        let basis = match basis {
            Some(b) => b,
            None => learn_image_basis(image, cfg)?,
        };
        Ok(Self {
            image,
            cfg,
            matcher,
            basis,
            haar: haar_matrix(cfg.group_size)?,
            refs: schedule_references(
                image.height(),
                image.width(),
                cfg.patch_size,
                cfg.stride_ref,
            ),
        })
    }

    pub fn basis(&self) -> &GlobalBasis {
        &self.basis
    }

    pub fn references(&self) -> &[PatchCoord] {
        &self.refs
    }

    fn estimate(
        &self,
        reference: PatchCoord,
        tau: f64,
        ws: &mut Workspace,
    ) -> Result<GroupEstimate> {
        let group = self.matcher.match_patches(reference)?;
        let mut data = group.data;
        transform::forward_in_place(&mut data, &self.basis, &self.haar, ws)?;
        let nnz = transform::hard_threshold_in_place(&mut data, tau);
        transform::inverse_in_place(&mut data, &self.basis, &self.haar, ws)?;
        Ok(GroupEstimate {
            coords: group.coords,
            data,
            nnz,
        })
    }

    /// Filters every reference group at noise level `sigma` and aggregates.
    /// Returns the clamped image and the number of groups.
    pub fn run(&self, sigma: f64) -> Result<(ImageTensor, usize)> {
        let ps = self.cfg.patch_size;
        let tau = transform::threshold_value(sigma, self.image.channels(), self.cfg.group_size, ps);
        let mut acc = Accumulator::new(
            self.image.height(),
            self.image.width(),
            self.image.channels(),
        );
        for batch in self.refs.chunks(BATCH) {
            let estimates: Vec<Result<GroupEstimate>> = batch
                .par_iter()
                .map_init(Workspace::default, |ws, &r| self.estimate(r, tau, ws))
                .collect();
            for est in estimates {
                let est = est?;
                let weight = match self.cfg.aggregation {
                    Aggregation::Uniform => 1.0,
                    Aggregation::InverseNnz => 1.0 / est.nnz.max(1) as f64,
                };
                acc.aggregate(&est.data, &est.coords, ps, weight)?;
            }
        }
        let mut image = acc.finish()?.with_profile(self.image.profile());
        if image.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in the estimate".into()));
        }
        image.clamp(0.0, 255.0);
        Ok((image, self.refs.len()))
    }

    /// Mean wall time per group over `refs` (match, transform, threshold,
    /// inverse) on the calling thread.
    pub fn time_per_group(&self, refs: &[PatchCoord], sigma: f64) -> Result<f64> {
        let tau = transform::threshold_value(
            sigma,
            self.image.channels(),
            self.cfg.group_size,
            self.cfg.patch_size,
        );
        let mut ws = Workspace::default();
        let start = Instant::now();
        for &r in refs {
            std::hint::black_box(self.estimate(r, tau, &mut ws)?);
        }
        Ok(start.elapsed().as_secs_f64() / refs.len().max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_single_and_overlap() {
        let mut acc = Accumulator::new(3, 3, 1);
        acc.aggregate(&[1.0; 4], &[PatchCoord::new(0, 0)], 2, 1.0)
            .unwrap();
        acc.aggregate(&[3.0; 4], &[PatchCoord::new(1, 1)], 2, 1.0)
            .unwrap();
        acc.aggregate(&[5.0; 9], &[PatchCoord::new(0, 0)], 3, 1.0)
            .unwrap();
        let img = acc.finish().unwrap();
        assert_eq!(img.get(0, 0, 0), 3.0); // (1 + 5)/2
        assert_eq!(img.get(1, 1, 0), 3.0); // (1 + 3 + 5)/3
        assert_eq!(img.get(2, 2, 0), 4.0); // (3 + 5)/2
        assert_eq!(img.get(0, 2, 0), 5.0);
    }

    #[test]
    fn aggregate_identical_estimates() {
        let mut acc = Accumulator::new(4, 4, 2);
        let patch: Vec<f64> = (0..8).map(|i| i as f64).collect();
        for _ in 0..5 {
            acc.aggregate(&patch, &[PatchCoord::new(1, 1)], 2, 1.0)
                .unwrap();
        }
        acc.aggregate(&[0.0; 32], &[PatchCoord::new(0, 0)], 4, 1.0)
            .unwrap();
        let img = acc.finish().unwrap();
        assert_eq!(img.get(1, 1, 1), 4.0 * 5.0 / 6.0);
    }

    #[test]
    fn aggregate_out_of_bounds() {
        let mut acc = Accumulator::new(4, 4, 1);
        assert!(matches!(
            acc.aggregate(&[0.0; 4], &[PatchCoord::new(3, 0)], 2, 1.0),
            Err(Error::Coord { .. })
        ));
    }

    #[test]
    fn uncovered_pixel_fails() {
        let mut acc = Accumulator::new(3, 3, 1);
        acc.aggregate(&[1.0; 4], &[PatchCoord::new(0, 0)], 2, 1.0)
            .unwrap();
        assert!(matches!(acc.finish(), Err(Error::Numeric(_))));
    }

    #[test]
    fn tiles_merge_remainder() {
        let t = tile_grid(600, 300, 256, 256);
        assert_eq!(t.len(), 2);
        assert_eq!(
            t[0],
            Tile {
                row: 0,
                col: 0,
                height: 256,
                width: 300
            }
        );
        assert_eq!(
            t[1],
            Tile {
                row: 256,
                col: 0,
                height: 344,
                width: 300
            }
        );
        assert_eq!(tile_grid(100, 100, 256, 256).len(), 1);
        assert_eq!(tile_grid(512, 512, 256, 256).len(), 4);
    }

    #[test]
    fn config_validation() {
        assert!(DenoiseConfig::default().validate().is_ok());
        let bad = DenoiseConfig {
            group_size: 24,
            ..DenoiseConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::NotPowerOfTwo(24))));
        let bad = DenoiseConfig {
            stride_ref: 0,
            ..DenoiseConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = DenoiseConfig::with_sigma(-1.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = DenoiseConfig {
            sigma: SigmaSource::External {
                values: vec![10.0, 12.0],
            },
            adaptive: true,
            ..DenoiseConfig::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        let back: DenoiseConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        let partial: DenoiseConfig =
            serde_json::from_str(r#"{"group_size": 16, "sigma": {"kind": "user", "value": 5}}"#)
                .unwrap();
        assert_eq!(partial.group_size, 16);
        assert_eq!(partial.sigma, SigmaSource::User { value: 5.0 });
        assert_eq!(partial.window, 18);
    }

    #[test]
    fn small_image_rejected() {
        let img = ImageTensor::zeros(5, 20, 1);
        assert!(matches!(
            denoise(&img, &DenoiseConfig::with_sigma(10.0)),
            Err(Error::PatchSize { .. })
        ));
    }
}
