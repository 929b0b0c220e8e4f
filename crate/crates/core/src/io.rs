//! Image and tensor files.
//!
//! 8-bit PNG and PGM/PPM hold grayscale or RGB images. Multiband data uses the
//! raw `HTSV` layout: the magic bytes `HTSV`, then `H`, `W`, `C` as
//! little-endian `u32`, then `H·W·C` little-endian `f32` values in row-major
//! order with the band index fastest.

use std::fs;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, Profile};

pub const HTSV_MAGIC: &[u8; 4] = b"HTSV";
const HTSV_HEADER: usize = 16;

/// On-disk format, chosen from the extension when writing and from the
/// content when reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Png,
    Pnm,
    Htsv,
}

impl FileFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(Self::Png),
            "pgm" | "ppm" | "pnm" => Ok(Self::Pnm),
            "htsv" => Ok(Self::Htsv),
            _ => Err(Error::Format(format!(
                "cannot infer a format from '{}'; use .png, .pgm, .ppm or .htsv",
                path.display()
            ))),
        }
    }
}

/// Serialises a tensor to the `HTSV` byte layout.
pub fn encode_htsv(image: &ImageTensor) -> Result<Vec<u8>> {
    let dim = |v: usize| {
        u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))
    };
    let (h, w, c) = (
        dim(image.height())?,
        dim(image.width())?,
        dim(image.channels())?,
    );
    let mut out = Vec::with_capacity(HTSV_HEADER + image.data().len() * 4);
    out.extend_from_slice(HTSV_MAGIC);
    for d in [h, w, c] {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in image.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Parses the `HTSV` byte layout; the result has the multiband profile.
pub fn decode_htsv(bytes: &[u8]) -> Result<ImageTensor> {
    if bytes.len() < HTSV_HEADER {
        return Err(Error::Format(format!(
            "HTSV header truncated ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[..4] != HTSV_MAGIC {
        return Err(Error::Format("bad magic, expected 'HTSV'".into()));
    }
    let read_u32 =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (h, w, c) = (read_u32(4), read_u32(8), read_u32(12));
    let count = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::Format(format!("dims {h}x{w}x{c} overflow")))?;
    let payload = count
        .checked_mul(4)
        .ok_or_else(|| Error::Format(format!("dims {h}x{w}x{c} overflow")))?;
    if count == 0 {
        return Err(Error::Format(format!("empty tensor {h}x{w}x{c}")));
    }
    let body = &bytes[HTSV_HEADER..];
    if body.len() < payload {
        return Err(Error::Format(format!(
            "payload truncated: {} of {payload} bytes",
            body.len()
        )));
    }
    if body.len() > payload {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            body.len() - payload
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("payload contains non-finite values".into()));
    }
    Ok(ImageTensor::new(h, w, c, data)?.with_profile(Profile::Multiband))
}

fn from_dynamic(img: DynamicImage) -> Result<ImageTensor> {
    let gray = matches!(
        img.color(),
        image::ColorType::L8
            | image::ColorType::La8
            | image::ColorType::L16
            | image::ColorType::La16
    );
    if gray {
        let g = img.to_luma8();
        let (w, h) = g.dimensions();
        ImageTensor::new(
            h as usize,
            w as usize,
            1,
            g.into_raw().into_iter().map(f64::from).collect(),
        )
    } else {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        ImageTensor::new(
            h as usize,
            w as usize,
            3,
            rgb.into_raw().into_iter().map(f64::from).collect(),
        )
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Reads any supported file; the format is detected from the content.
pub fn load(path: &Path) -> Result<ImageTensor> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(HTSV_MAGIC) {
        return decode_htsv(&bytes);
    }
    let img = image::load_from_memory(&bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    from_dynamic(img)
}

/// Writes `image` in the format implied by the extension. 8-bit formats round
/// and clamp to `[0, 255]` and accept one or three channels.
pub fn store(image: &ImageTensor, path: &Path) -> Result<()> {
    let format = FileFormat::from_path(path)?;
    if format == FileFormat::Htsv {
        fs::write(path, encode_htsv(image)?)?;
        return Ok(());
    }
    let (w, h) = (image.width() as u32, image.height() as u32);
    let raw: Vec<u8> = image.data().iter().map(|&v| to_u8(v)).collect();
    let dynamic = match image.channels() {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, raw).expect("buffer matches dims")),
        3 => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, raw).expect("buffer matches dims")),
        c => {
            return Err(Error::Format(format!(
                "{c}-channel images can only be stored as .htsv"
            )))
        }
    };
    let fmt = match format {
        FileFormat::Png => ImageFormat::Png,
        _ => ImageFormat::Pnm,
    };
    dynamic
        .save_with_format(path, fmt)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
