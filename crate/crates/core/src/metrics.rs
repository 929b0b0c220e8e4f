//! Quality metrics and synthetic noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, Profile};

const PEAK: f64 = 255.0;
const SSIM_WINDOW: usize = 8;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const SSIM_C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

fn same_dims(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if (a.height(), a.width(), a.channels()) != (b.height(), b.width(), b.channels()) {
        return Err(Error::Dims(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio with peak 255 over all channels; `+∞` for
/// identical inputs.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / m).log10())
}

/// Plane on which SSIM is evaluated: the channel itself, BT.601 luma for
/// RGB, the guide-band mean for multiband data.
fn luma_plane(img: &ImageTensor) -> Vec<f64> {
    match (img.channels(), img.profile()) {
        (1, _) => img.channel(0),
        (3, Profile::Srgb) => img
            .data()
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect(),
        _ => img.guide_plane(),
    }
}

fn gaussian_window(size: usize) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - center).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let mut w = Vec::with_capacity(size * size);
    for a in &g {
        for b in &g {
            w.push(a * b);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Mean structural similarity over all `8×8` Gaussian-weighted windows
/// (stride 1, no padding) of the luma/guide plane.
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    same_dims(a, b)?;
    let (h, w) = (a.height(), a.width());
    let win_h = SSIM_WINDOW.min(h);
    let win_w = SSIM_WINDOW.min(w);
    let pa = luma_plane(a);
    let pb = luma_plane(b);
    let weights = if win_h == win_w {
        gaussian_window(win_h)
    } else {
        let n = (win_h * win_w) as f64;
        vec![1.0 / n; win_h * win_w]
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=h - win_h {
        for c in 0..=w - win_w {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..win_h {
                for j in 0..win_w {
                    let wt = weights[i * win_w + j];
                    let idx = (r + i) * w + c + j;
                    ma += wt * pa[idx];
                    mb += wt * pb[idx];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..win_h {
                for j in 0..win_w {
                    let wt = weights[i * win_w + j];
                    let idx = (r + i) * w + c + j;
                    let (da, db) = (pa[idx] - ma, pb[idx] - mb);
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            }
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Adds seeded i.i.d. Gaussian noise with standard deviation `sigma`; values
/// are not clamped.
pub fn add_awgn(image: &ImageTensor, sigma: f64, seed: u64) -> Result<ImageTensor> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise sigma {sigma} must be finite and nonnegative"
        )));
    }
    let mut out = image.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Numeric(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.data_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

/// Summary written by `denoise --report`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(with = "opt_db", skip_serializing_if = "Option::is_none", default)]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ssim: Option<f64>,
    pub wall_time: f64,
    pub sigma_used: f64,
    pub adjusted_fraction: f64,
}

mod opt_db {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => super::serialize_db(x, s),
            None => s.serialize_none(),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Db>::deserialize(d)? {
            None => Ok(None),
            Some(Db::Num(x)) => Ok(Some(x)),
            Some(Db::Text(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
            Some(Db::Text(t)) => Err(serde::de::Error::custom(format!("bad dB value '{t}'"))),
        }
    }
}

/// Formats a dB value for CSV, writing `inf` for identical images.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phantom() -> ImageTensor {
        ImageTensor::from_fn(32, 32, 1, |r, c, _| {
            128.0 + 60.0 * ((r as f64) * 0.4).sin() + 40.0 * ((c as f64) * 0.3).cos()
        })
    }

    #[test]
    fn psnr_examples() {
        let a = phantom();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let mut b = a.clone();
        for v in b.data_mut() {
            *v += 1.0;
        }
        assert!((psnr(&a, &b).unwrap() - 20.0 * 255f64.log10()).abs() < 1e-12);
        assert!((psnr(&a, &b).unwrap() - 48.13).abs() < 0.01);
        let zero = ImageTensor::zeros(4, 4, 1);
        let full = ImageTensor::from_fn(4, 4, 1, |_, _, _| 255.0);
        assert_eq!(psnr(&zero, &full).unwrap(), 0.0);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert!(matches!(psnr(&a, &zero), Err(Error::Dims(_))));
    }

    #[test]
    fn ssim_examples() {
        let a = phantom();
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let inv = ImageTensor::from_fn(32, 32, 1, |r, c, _| 255.0 - a.get(r, c, 0));
        assert!(ssim(&a, &inv).unwrap() < 0.5);
        let flat = ImageTensor::from_fn(16, 16, 1, |_, _, _| 100.0);
        let shifted = ImageTensor::from_fn(16, 16, 1, |_, _, _| 110.0);
        let expected =
            (2.0 * 100.0 * 110.0 + SSIM_C1) / (100.0f64.powi(2) + 110.0f64.powi(2) + SSIM_C1);
        assert!((ssim(&flat, &shifted).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn awgn_is_seeded() {
        let a = ImageTensor::from_fn(16, 16, 1, |_, _, _| 100.0);
        assert_eq!(add_awgn(&a, 0.0, 1).unwrap(), a);
        assert_eq!(
            add_awgn(&a, 25.0, 7).unwrap(),
            add_awgn(&a, 25.0, 7).unwrap()
        );
        assert_ne!(
            add_awgn(&a, 25.0, 7).unwrap(),
            add_awgn(&a, 25.0, 8).unwrap()
        );
    }

    #[test]
    fn report_serialises_infinity() {
        let r = MetricsReport {
            psnr: Some(f64::INFINITY),
            ssim: Some(1.0),
            wall_time: 0.5,
            sigma_used: 0.0,
            adjusted_fraction: 0.0,
        };
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(r#""psnr":"inf""#), "{json}");
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.psnr, Some(f64::INFINITY));
    }
}
