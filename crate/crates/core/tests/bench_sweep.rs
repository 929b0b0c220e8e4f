use haar_tsvd::bench::{
    generate_phantoms, run_sweep, write_csv, PhantomSpec, SweepParameter, SweepSpec,
};
use haar_tsvd::grouping::{match_patches, MatchConfig, PatchCoord};
use haar_tsvd::pipeline::DenoiseConfig;

fn spec(parameter: SweepParameter, values: Vec<f64>) -> SweepSpec {
    SweepSpec {
        parameter,
        values,
        config: DenoiseConfig {
            window: 6,
            ..DenoiseConfig::with_sigma(20.0)
        },
        phantoms: PhantomSpec {
            size: 64,
            include: vec!["ramp".into(), "checker-8".into()],
            ..PhantomSpec::default()
        },
        noise_sigma: 20.0,
        seeds: vec![0],
    }
}

#[test]
fn checkerboard_with_period_ps_has_exact_repeats() {
    let phantoms = generate_phantoms(&PhantomSpec {
        size: 64,
        ..PhantomSpec::default()
    })
    .unwrap();
    let checker = phantoms.iter().find(|p| p.name == "checker-8").unwrap();
    let cfg = MatchConfig {
        group_size: 16,
        ..MatchConfig::default()
    };
    let group = match_patches(&checker.image, PatchCoord::new(20, 20), &cfg).unwrap();
    assert!(group.distances.iter().all(|&d| d == 0.0));
}

#[test]
fn k_sweep_emits_one_row_per_combination() {
    let rows = run_sweep(&spec(
        SweepParameter::GroupSize,
        vec![8.0, 16.0, 32.0, 64.0],
    ))
    .unwrap();
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert!(row.error.is_empty(), "{}", row.error);
        assert!(row.psnr_off > row.psnr_noisy && row.psnr_on > row.psnr_noisy);
        assert!(row.seconds_per_group > 0.0);
    }
}

#[test]
fn failing_rows_are_marked_and_the_sweep_continues() {
    let rows = run_sweep(&spec(SweepParameter::GroupSize, vec![12.0, 16.0])).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[..2]
        .iter()
        .all(|r| !r.error.is_empty() && r.psnr_off.is_nan()));
    assert!(rows[2..].iter().all(|r| r.error.is_empty()));
}

#[test]
fn zero_threshold_endpoint_is_lossless() {
    let rows = run_sweep(&spec(SweepParameter::Sigma, vec![0.0])).unwrap();
    for row in &rows {
        assert_eq!(row.psnr_noisy, f64::INFINITY);
        assert!(row.psnr_off > 100.0, "{}", row.psnr_off);
    }
}

#[test]
fn sweeps_are_deterministic_and_serialise() {
    let s = spec(SweepParameter::Beta, vec![1.2]);
    let a = run_sweep(&s).unwrap();
    let b = run_sweep(&s).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(
            (x.psnr_off, x.psnr_on, x.ssim_on),
            (y.psnr_off, y.psnr_on, y.ssim_on)
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    write_csv(&a, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with(
        "parameter,value,phantom,seed,sigma,psnr_noisy,psnr_off,ssim_off,psnr_on,ssim_on"
    ));
    assert_eq!(text.lines().count(), 3);
}
