use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How channels are interpreted by the grouping guide and the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Grayscale or RGB; three-channel images use the green-channel prior.
    #[default]
    Srgb,
    /// Arbitrary band count; guided by the mean of the middle third of bands.
    Multiband,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "srgb" => Ok(Self::Srgb),
            "multiband" => Ok(Self::Multiband),
            other => Err(Error::Config(format!("unknown profile '{other}'"))),
        }
    }
}

/// `H×W×C` image on the 0–255 intensity scale, stored row-major with the
/// band index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    profile: Profile,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Dims(format!(
                "image dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::Dims("image dims overflow".into()))?;
        if data.len() != expected {
            return Err(Error::Dims(format!(
                "{} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("image contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            profile: Profile::Srgb,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::new(
            height,
            width,
            channels,
            vec![0.0; height * width * channels],
        )
        .expect("positive dims")
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::new(height, width, channels, data).expect("positive dims and finite values")
    }

    pub fn with_profile(mut self, profile: Profile) -> Self {
        self.profile = profile;
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = v;
    }

    /// Copies the `rows × cols` window starting at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, rows: usize, cols: usize) -> Self {
        assert!(row + rows <= self.height && col + cols <= self.width);
        let c = self.channels;
        let mut data = Vec::with_capacity(rows * cols * c);
        for r in row..row + rows {
            let start = (r * self.width + col) * c;
            data.extend_from_slice(&self.data[start..start + cols * c]);
        }
        Self {
            height: rows,
            width: cols,
            channels: c,
            profile: self.profile,
            data,
        }
    }

    /// Writes `tile` into this image at `(row, col)`.
    pub fn paste(&mut self, tile: &ImageTensor, row: usize, col: usize) {
        assert_eq!(tile.channels, self.channels);
        assert!(row + tile.height <= self.height && col + tile.width <= self.width);
        let c = self.channels;
        for r in 0..tile.height {
            let dst = ((row + r) * self.width + col) * c;
            let src = r * tile.width * c;
            self.data[dst..dst + tile.width * c]
                .copy_from_slice(&tile.data[src..src + tile.width * c]);
        }
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, ch: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(ch)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Per-pixel mean over the channel range `bands`.
    pub fn band_mean(&self, bands: std::ops::Range<usize>) -> Vec<f64> {
        let n = bands.len() as f64;
        self.data
            .chunks_exact(self.channels)
            .map(|px| px[bands.clone()].iter().sum::<f64>() / n)
            .collect()
    }

    /// Band range averaged into the grouping guide for non-RGB data: the
    /// middle third of the bands, at least one band wide.
    pub fn guide_bands(&self) -> std::ops::Range<usize> {
        guide_bands(self.channels)
    }

    /// Single-plane guide used for matching and noise estimation: the green
    /// channel of an sRGB image, otherwise the mean of the guide bands.
    pub fn guide_plane(&self) -> Vec<f64> {
        if self.profile == Profile::Srgb && self.channels == 3 {
            self.channel(1)
        } else {
            self.band_mean(self.guide_bands())
        }
    }

    pub fn clamp(&mut self, lo: f64, hi: f64) {
        for v in &mut self.data {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Middle third of `channels` bands.
pub fn guide_bands(channels: usize) -> std::ops::Range<usize> {
    let start = channels / 3;
    let end = (2 * channels).div_ceil(3).max(start + 1);
    start..end.min(channels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn middle_third() {
        assert_eq!(guide_bands(1), 0..1);
        assert_eq!(guide_bands(2), 0..2);
        assert_eq!(guide_bands(3), 1..2);
        assert_eq!(guide_bands(8), 2..6);
        assert_eq!(guide_bands(31), 10..21);
    }

    #[test]
    fn crop_and_paste() {
        let img = ImageTensor::from_fn(5, 6, 2, |r, c, ch| (r * 100 + c * 10 + ch) as f64);
        let tile = img.crop(1, 2, 3, 3);
        assert_eq!(tile.get(0, 0, 1), 121.0);
        let mut blank = ImageTensor::zeros(5, 6, 2);
        blank.paste(&tile, 1, 2);
        assert_eq!(blank.get(3, 4, 0), 340.0);
        assert_eq!(blank.get(0, 0, 0), 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ImageTensor::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageTensor::new(0, 2, 1, vec![]).is_err());
        assert!(ImageTensor::new(1, 1, 1, vec![f64::NAN]).is_err());
    }
}
