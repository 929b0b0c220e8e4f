use haar_tsvd::bench::{checkerboard, sinusoid_cube, textured};
use haar_tsvd::metrics::{add_awgn, psnr};
use haar_tsvd::noise::AdaptiveConfig;
use haar_tsvd::pipeline::{denoise_with_report, DenoiseConfig, GroupFilter, SigmaSource};
use haar_tsvd::{denoise, denoise_multiband, Error, ImageTensor, Profile};

fn small_config(sigma: f64) -> DenoiseConfig {
    DenoiseConfig {
        group_size: 16,
        window: 8,
        ..DenoiseConfig::with_sigma(sigma)
    }
}

#[test]
fn output_is_clamped_and_finite() {
    let clean = checkerboard(64, 8);
    let noisy = add_awgn(&clean, 40.0, 3).unwrap();
    let out = denoise(&noisy, &small_config(40.0)).unwrap();
    assert!(out
        .data()
        .iter()
        .all(|v| v.is_finite() && (0.0..=255.0).contains(v)));
}

#[test]
fn repeated_runs_and_thread_counts_agree() {
    let clean = textured(96, 2);
    let noisy = add_awgn(&clean, 20.0, 5).unwrap();
    let mut cfg = small_config(20.0);
    cfg.threads = 1;
    let a = denoise(&noisy, &cfg).unwrap();
    cfg.threads = 3;
    let b = denoise(&noisy, &cfg).unwrap();
    let c = denoise(&noisy, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(b, c);
}

#[test]
fn adaptive_mode_reports_one_model_per_tile() {
    let clean = textured(80, 1);
    let noisy = add_awgn(&clean, 15.0, 1).unwrap();
    let cfg = DenoiseConfig {
        adaptive: true,
        adaptive_config: AdaptiveConfig {
            subimage_height: 32,
            subimage_width: 32,
            ..AdaptiveConfig::default()
        },
        ..small_config(15.0)
    };
    let out = denoise_with_report(&noisy, &cfg).unwrap();
    // 80 = 32 + 48 with the remainder merged into the last tile.
    assert_eq!(out.tiles.len(), 4);
    assert_eq!(out.noise.len(), 4);
    assert_eq!(out.bases_learned, 4);
    for m in &out.noise {
        assert_eq!(m.votes_total, 16);
        assert_eq!(m.adjusted, 2 * m.votes_adjust > m.votes_total);
    }
    assert!(psnr(&clean, &out.image).unwrap() > psnr(&clean, &noisy).unwrap());
}

#[test]
fn external_sigmas_must_match_tile_count() {
    let img = textured(64, 0);
    let cfg = DenoiseConfig {
        adaptive: true,
        sigma: SigmaSource::External {
            values: vec![10.0, 10.0],
        },
        ..small_config(0.0)
    };
    assert!(matches!(denoise(&img, &cfg), Err(Error::Config(_))));
    let cfg = DenoiseConfig {
        sigma: SigmaSource::External { values: vec![10.0] },
        ..cfg
    };
    assert!(denoise(&img, &cfg).is_ok());
}

#[test]
fn multiband_cube_gains_three_db() {
    let clean = sinusoid_cube(32, 8);
    let noisy = add_awgn(&clean, 20.0, 4).unwrap();
    let out = denoise_multiband(&noisy, &small_config(20.0)).unwrap();
    let gain = psnr(&clean, &out).unwrap() - psnr(&clean, &noisy).unwrap();
    assert!(gain >= 3.0, "gain {gain}");
}

#[test]
fn three_band_multiband_equals_denoise_with_multiband_guide() {
    let rgb = ImageTensor::from_fn(40, 40, 3, |r, c, ch| {
        ((r * 7 + c * 3 + ch * 50) % 256) as f64
    });
    let noisy = add_awgn(&rgb, 10.0, 0).unwrap();
    let cfg = small_config(10.0);
    let a = denoise_multiband(&noisy, &cfg).unwrap();
    let b = denoise(&noisy.clone().with_profile(Profile::Multiband), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_band_reduces_to_grayscale() {
    let gray = checkerboard(48, 8);
    let noisy = add_awgn(&gray, 10.0, 0).unwrap();
    let cfg = small_config(10.0);
    let a = denoise_multiband(&noisy, &cfg).unwrap();
    let b = denoise(&noisy, &cfg).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn per_group_time_grows_with_group_size() {
    let img = add_awgn(&textured(128, 0), 20.0, 0).unwrap();
    let mut times = Vec::new();
    for k in [8usize, 16, 32, 64] {
        let cfg = DenoiseConfig {
            group_size: k,
            threads: 1,
            ..DenoiseConfig::with_sigma(20.0)
        };
        let filter = GroupFilter::new(&img, &cfg, None).unwrap();
        let refs: Vec<_> = filter
            .references()
            .iter()
            .step_by(7)
            .take(64)
            .copied()
            .collect();
        let best = (0..3)
            .map(|_| filter.time_per_group(&refs, 20.0).unwrap())
            .fold(f64::INFINITY, f64::min);
        times.push(best);
    }
    assert!(times.windows(2).all(|w| w[0] <= w[1]), "{times:?}");
}
