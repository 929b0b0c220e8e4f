//! Synthetic phantoms, parameter sweeps and the `bench` runner.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, Profile};
use crate::metrics::{add_awgn, psnr, ssim};
use crate::pipeline::{denoise_with_report, DenoiseConfig, GroupFilter, SigmaSource};

/// Deterministic phantom set description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub size: usize,
    pub seed: u64,
    pub bands: usize,
    /// Names to keep; empty keeps every phantom.
    pub include: Vec<String>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 128,
            seed: 0,
            bands: 8,
            include: Vec::new(),
        }
    }
}

/// Named synthetic image.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub name: String,
    pub image: ImageTensor,
}

/// Diagonal ramp from 0 at the top-left to 255 at the bottom-right.
pub fn ramp(size: usize) -> ImageTensor {
    let denom = (2 * (size - 1)).max(1) as f64;
    ImageTensor::from_fn(size, size, 1, |r, c, _| 255.0 * (r + c) as f64 / denom)
}

/// Checkerboard alternating 64/192 with the given full period.
pub fn checkerboard(size: usize, period: usize) -> ImageTensor {
    let half = (period / 2).max(1);
    ImageTensor::from_fn(size, size, 1, |r, c, _| {
        if (r / half + c / half).is_multiple_of(2) {
            64.0
        } else {
            192.0
        }
    })
}

pub fn flat(size: usize, value: f64) -> ImageTensor {
    ImageTensor::from_fn(size, size, 1, |_, _, _| value)
}

/// Repeated box-blurred white noise, rescaled to `[32, 224]`.
pub fn filtered_noise(size: usize, seed: u64, passes: usize, radius: usize) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plane: Vec<f64> = (0..size * size)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    for _ in 0..passes {
        plane = box_blur(&plane, size, radius);
    }
    let (lo, hi) = plane
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = (hi - lo).max(1e-12);
    ImageTensor::new(
        size,
        size,
        1,
        plane
            .iter()
            .map(|v| 32.0 + 192.0 * (v - lo) / span)
            .collect(),
    )
    .expect("finite values")
}

fn box_blur(plane: &[f64], size: usize, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let n = size as isize;
    let wrap = |i: isize| i.rem_euclid(n) as usize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..size {
        for x in 0..size {
            let s: f64 = (-r..=r)
                .map(|d| plane[y * size + wrap(x as isize + d)])
                .sum();
            tmp[y * size + x] = s / (2 * radius + 1) as f64;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..size {
        for x in 0..size {
            let s: f64 = (-r..=r).map(|d| tmp[wrap(y as isize + d) * size + x]).sum();
            out[y * size + x] = s / (2 * radius + 1) as f64;
        }
    }
    out
}

/// Grayscale mosaic of 64×64 cells, each holding a periodic pattern (stripes,
/// diagonal grating, checkerboard or product of sinusoids) with a seeded kind,
/// period, phase, mean and amplitude. Cell borders give sharp edges.
pub fn textured(size: usize, seed: u64) -> ImageTensor {
    const CELL: usize = 64;
    const PERIODS: [usize; 5] = [4, 6, 8, 12, 16];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = size.div_ceil(CELL);
    let params: Vec<(usize, usize, usize, f64, f64)> = (0..cells * cells)
        .map(|_| {
            (
                rng.random_range(0..5),
                PERIODS[rng.random_range(0..PERIODS.len())],
                rng.random_range(0..16),
                rng.random_range(60.0..190.0),
                rng.random_range(25.0..60.0),
            )
        })
        .collect();
    ImageTensor::from_fn(size, size, 1, |r, c, _| {
        let (kind, period, phase, mean, amp) = params[(r / CELL) * cells + c / CELL];
        let (y, x) = (r + phase, c + phase);
        let w = std::f64::consts::TAU / period as f64;
        let half = period / 2;
        let v = match kind {
            0 => (w * x as f64).sin(),
            1 => (w * y as f64).sin(),
            2 => (w * (x + y) as f64).sin(),
            3 => {
                if (x / half + y / half) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            _ => (w * x as f64).sin() * (w * y as f64).cos(),
        };
        (mean + amp * v).clamp(0.0, 255.0)
    })
}

/// RGB version of [`textured`] with a dominant green channel.
pub fn textured_rgb(size: usize, seed: u64) -> ImageTensor {
    let base = textured(size, seed);
    ImageTensor::from_fn(size, size, 3, |r, c, ch| {
        let v = base.get(r, c, 0);
        match ch {
            0 => 0.8 * v + 20.0,
            1 => v,
            _ => 0.6 * v + 40.0,
        }
    })
}

/// Multiband cube of band-dependent sinusoids.
pub fn sinusoid_cube(size: usize, bands: usize) -> ImageTensor {
    ImageTensor::from_fn(size, size, bands, |r, c, b| {
        let t = b as f64 / bands.max(1) as f64;
        let (y, x) = (r as f64, c as f64);
        128.0
            + 50.0 * (x / (5.0 + 4.0 * t)).sin() * (y / 9.0).cos()
            + 30.0 * ((x + y) / 11.0 + 3.0 * t).sin()
    })
    .with_profile(Profile::Multiband)
}

/// Deterministic phantom set.
pub fn generate_phantoms(spec: &PhantomSpec) -> Result<Vec<Phantom>> {
    if spec.size < 64 {
        return Err(Error::Config(format!(
            "phantom size {} is below 64",
            spec.size
        )));
    }
    let n = spec.size;
    let mut all = vec![
        Phantom {
            name: "flat".into(),
            image: flat(n, 128.0),
        },
        Phantom {
            name: "ramp".into(),
            image: ramp(n),
        },
        Phantom {
            name: "checker-8".into(),
            image: checkerboard(n, 8),
        },
        Phantom {
            name: "checker-16".into(),
            image: checkerboard(n, 16),
        },
        Phantom {
            name: "texture".into(),
            image: filtered_noise(n, spec.seed, 2, 2),
        },
        Phantom {
            name: "textured".into(),
            image: textured(n, spec.seed),
        },
        Phantom {
            name: "textured-rgb".into(),
            image: textured_rgb(n, spec.seed),
        },
    ];
    if spec.bands > 0 {
        all.push(Phantom {
            name: format!("cube-{}", spec.bands),
            image: sinusoid_cube(n.min(64), spec.bands),
        });
    }
    if !spec.include.is_empty() {
        all.retain(|p| spec.include.iter().any(|name| name == &p.name));
    }
    Ok(all)
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    #[serde(alias = "ps")]
    PatchSize,
    #[serde(alias = "w", alias = "W")]
    Window,
    #[serde(alias = "k", alias = "K")]
    GroupSize,
    Beta,
    RankGamma,
    /// Injected noise level; the threshold follows it.
    Sigma,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::PatchSize => "ps",
            Self::Window => "W",
            Self::GroupSize => "K",
            Self::Beta => "beta",
            Self::RankGamma => "rank_gamma",
            Self::Sigma => "sigma",
        }
    }

    fn apply(self, cfg: &mut DenoiseConfig, noise_sigma: &mut f64, value: f64) -> Result<()> {
        let as_count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!(
                    "{} must be a positive integer, got {value}",
                    self.name()
                )))
            }
        };
        match self {
            Self::PatchSize => cfg.patch_size = as_count()?,
            Self::Window => cfg.window = as_count()?,
            Self::GroupSize => {
                // Keep the rank threshold at the same fraction of K.
                let k = as_count()?;
                let gamma =
                    cfg.adaptive_config.rank_gamma as f64 * k as f64 / cfg.group_size as f64;
                cfg.adaptive_config.rank_gamma = (gamma.round() as usize).max(1);
                cfg.group_size = k;
            }
            Self::Beta => cfg.adaptive_config.beta = value,
            Self::RankGamma => cfg.adaptive_config.rank_gamma = as_count()?,
            Self::Sigma => *noise_sigma = value,
        }
        Ok(())
    }
}

/// Sweep description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default)]
    pub config: DenoiseConfig,
    #[serde(default)]
    pub phantoms: PhantomSpec,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_sigma() -> f64 {
    25.0
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// One sweep row. `off` runs estimate σ per subimage without the rank-based
/// adjustment, `on` runs apply it; everything else is shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub phantom: String,
    pub seed: u64,
    pub sigma: f64,
    pub psnr_noisy: f64,
    pub psnr_off: f64,
    pub ssim_off: f64,
    pub psnr_on: f64,
    pub ssim_on: f64,
    pub adjusted_fraction: f64,
    pub seconds_off: f64,
    pub seconds_on: f64,
    pub seconds_per_group: f64,
    pub error: String,
}

/// References timed per row for the per-group cost column.
const TIMED_GROUPS: usize = 64;

fn sweep_row(spec: &SweepSpec, value: f64, phantom: &Phantom, seed: u64) -> Result<SweepRow> {
    let mut cfg = spec.config.clone();
    let mut noise_sigma = spec.noise_sigma;
    spec.parameter.apply(&mut cfg, &mut noise_sigma, value)?;
    if matches!(cfg.sigma, SigmaSource::User { .. }) {
        cfg.sigma = SigmaSource::User { value: noise_sigma };
    }
    cfg.adaptive_config.seed = seed;
    let noisy = add_awgn(&phantom.image, noise_sigma, seed)?;

    let mut off_cfg = cfg.clone();
    off_cfg.adaptive_config.local_adjustment = false;
    let off = denoise_with_report(&noisy, &off_cfg)?;

    let mut on_cfg = cfg.clone();
    on_cfg.adaptive = true;
    on_cfg.adaptive_config.local_adjustment = true;
    let on = denoise_with_report(&noisy, &on_cfg)?;

    let filter = GroupFilter::new(&noisy, &off_cfg, None)?;
    let step = (filter.references().len() / TIMED_GROUPS).max(1);
    let timed: Vec<_> = filter
        .references()
        .iter()
        .step_by(step)
        .take(TIMED_GROUPS)
        .copied()
        .collect();
    let per_group = filter.time_per_group(&timed, off.mean_sigma())?;

    Ok(SweepRow {
        parameter: spec.parameter.name().to_string(),
        value,
        phantom: phantom.name.clone(),
        seed,
        sigma: noise_sigma,
        psnr_noisy: psnr(&phantom.image, &noisy)?,
        psnr_off: psnr(&phantom.image, &off.image)?,
        ssim_off: ssim(&phantom.image, &off.image)?,
        psnr_on: psnr(&phantom.image, &on.image)?,
        ssim_on: ssim(&phantom.image, &on.image)?,
        adjusted_fraction: on.adjusted_fraction(),
        seconds_off: off.seconds,
        seconds_on: on.seconds,
        seconds_per_group: per_group,
        error: String::new(),
    })
}

/// Runs every (value × phantom × seed) combination in order. A failing row is
/// kept with its error message and NaN metrics; the sweep continues.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let phantoms = generate_phantoms(&spec.phantoms)?;
    let mut rows = Vec::new();
    for &value in &spec.values {
        for phantom in &phantoms {
            for &seed in &spec.seeds {
                let row = sweep_row(spec, value, phantom, seed).unwrap_or_else(|e| SweepRow {
                    parameter: spec.parameter.name().to_string(),
                    value,
                    phantom: phantom.name.clone(),
                    seed,
                    sigma: spec.noise_sigma,
                    psnr_noisy: f64::NAN,
                    psnr_off: f64::NAN,
                    ssim_off: f64::NAN,
                    psnr_on: f64::NAN,
                    ssim_on: f64::NAN,
                    adjusted_fraction: f64::NAN,
                    seconds_off: f64::NAN,
                    seconds_on: f64::NAN,
                    seconds_per_group: f64::NAN,
                    error: e.to_string(),
                });
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// `bench` configuration: the denoiser fields at top level plus the
/// workload description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    #[serde(flatten)]
    pub denoise: DenoiseConfig,
    #[serde(default)]
    pub phantoms: Option<PhantomSpec>,
    /// Extra clean images to benchmark, relative to the config file.
    #[serde(default)]
    pub images: Vec<PathBuf>,
    #[serde(default = "default_sigmas")]
    pub noise_sigmas: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sweep: Option<SweepDef>,
}

fn default_sigmas() -> Vec<f64> {
    vec![25.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDef {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Per-image `bench` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    pub sigma: f64,
    pub psnr_noisy: f64,
    pub psnr_out: f64,
    pub ssim_out: f64,
    pub seconds: f64,
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            for p in &mut cfg.images {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn sweep_spec(&self) -> Option<SweepSpec> {
        self.sweep.as_ref().map(|s| SweepSpec {
            parameter: s.parameter,
            values: s.values.clone(),
            config: self.denoise.clone(),
            phantoms: self.phantoms.clone().unwrap_or_default(),
            noise_sigma: self.noise_sigmas.first().copied().unwrap_or(25.0),
            seeds: self.seeds.clone(),
        })
    }
}

/// Denoises every image at every noise level and seed.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut inputs: Vec<Phantom> = Vec::new();
    if let Some(spec) = &cfg.phantoms {
        inputs.extend(generate_phantoms(spec)?);
    }
    for path in &cfg.images {
        inputs.push(Phantom {
            name: path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image")
                .to_string(),
            image: crate::io::load(path)?,
        });
    }
    if inputs.is_empty() {
        inputs.extend(generate_phantoms(&PhantomSpec::default())?);
    }
    let mut rows = Vec::new();
    for input in &inputs {
        for &sigma in &cfg.noise_sigmas {
            for &seed in &cfg.seeds {
                let noisy = add_awgn(&input.image, sigma, seed)?;
                let mut dcfg = cfg.denoise.clone();
                if matches!(dcfg.sigma, SigmaSource::User { .. }) {
                    dcfg.sigma = SigmaSource::User { value: sigma };
                }
                dcfg.adaptive_config.seed = seed;
                let start = Instant::now();
                let out = denoise_with_report(&noisy, &dcfg)?;
                let seconds = start.elapsed().as_secs_f64();
                rows.push(BenchRow {
                    name: input.name.clone(),
                    sigma,
                    psnr_noisy: psnr(&input.image, &noisy)?,
                    psnr_out: psnr(&input.image, &out.image)?,
                    ssim_out: ssim(&input.image, &out.image)?,
                    seconds,
                });
            }
        }
    }
    Ok(rows)
}

/// Writes serialisable rows as CSV with a header line.
pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
