//! Nonlocal image denoising with a global t-SVD projection and a Haar
//! transform along the grouping dimension.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] – third-order tensor algebra in the circulant (Fourier)
//!   representation plus the Haar matrix.
//! * [`grouping`] – reference scheduling and green-channel guided block matching.
//! * [`transform`] – global basis learning, the one-step forward/inverse
//!   transform and hard thresholding.
//! * [`noise`] – noise estimation, the closed-form eigen-pairs of the group
//!   circulant Gram matrix and the rank-position based σ adjustment.
//! * [`pipeline`] – aggregation, tiling and the parallel end-to-end denoiser.
//! * [`io`], [`metrics`] – file formats, PSNR/SSIM and noise injection.
//! * [`bench`] – synthetic phantoms and parameter sweeps.

pub mod bench;
pub mod error;
pub mod grouping;
pub mod image;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod pipeline;
pub mod tensor;
pub mod transform;

pub use error::{Error, Result};
pub use image::{ImageTensor, Profile};
pub use pipeline::{denoise, denoise_multiband, DenoiseConfig, SigmaSource};
