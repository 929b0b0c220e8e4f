use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use haar_tsvd::bench::{self, BenchConfig};
use haar_tsvd::metrics::{self, MetricsReport};
use haar_tsvd::pipeline::{denoise_with_report, DenoiseConfig, SigmaSource};
use haar_tsvd::{io, noise, Error, Profile};

const EXIT_USAGE: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(
    name = "haar-tsvd",
    version,
    about = "Nonlocal t-SVD/Haar image denoiser"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Denoise an image or multiband cube.
    Denoise(DenoiseArgs),
    /// Add seeded Gaussian noise.
    Addnoise(AddnoiseArgs),
    /// Run the benchmark described by a JSON config.
    Bench(BenchArgs),
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("noise").required(true).args(["sigma", "adaptive", "sigma_file"])))]
struct DenoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Known noise level on the 0–255 scale.
    #[arg(long)]
    sigma: Option<f64>,
    /// Estimate σ per subimage and apply the rank-position adjustment.
    #[arg(long)]
    adaptive: bool,
    /// Per-subimage σ values, one per line in row-major tile order.
    #[arg(long)]
    sigma_file: Option<PathBuf>,
    #[arg(long)]
    ps: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    /// Reference stride.
    #[arg(long)]
    stride: Option<usize>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    profile: Option<Profile>,
    /// JSON file with DenoiseConfig fields; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Clean image for PSNR/SSIM.
    #[arg(long)]
    metrics_ref: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AddnoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    csv: PathBuf,
    /// Where to write sweep rows when the config has a sweep section.
    #[arg(long)]
    sweep_csv: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Format(_) | Error::Io(_) => EXIT_FORMAT,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn build_config(args: &DenoiseArgs) -> Result<DenoiseConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => DenoiseConfig::default(),
    };
    if let Some(v) = args.ps {
        cfg.patch_size = v;
    }
    if let Some(v) = args.k {
        cfg.group_size = v;
    }
    if let Some(v) = args.window {
        cfg.window = v;
    }
    if let Some(v) = args.stride {
        cfg.stride_ref = v;
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    if let Some(v) = args.seed {
        cfg.adaptive_config.seed = v;
    }
    if let Some(value) = args.sigma {
        cfg.sigma = SigmaSource::User { value };
        cfg.adaptive = false;
    } else if let Some(path) = &args.sigma_file {
        cfg.sigma = SigmaSource::External {
            values: noise::read_sigma_file(path)?,
        };
        cfg.adaptive = true;
    } else {
        cfg.sigma = SigmaSource::Baseline;
        cfg.adaptive = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_denoise(args: &DenoiseArgs) -> Result<(), Error> {
    let cfg = build_config(args)?;
    let mut input = io::load(&args.input)?;
    if let Some(profile) = args.profile {
        input = input.with_profile(profile);
    }
    let out = denoise_with_report(&input, &cfg)?;
    io::store(&out.image, &args.output)?;

    let (psnr, ssim) = match &args.metrics_ref {
        Some(path) => {
            let clean = io::load(path)?.with_profile(input.profile());
            (
                Some(metrics::psnr(&clean, &out.image)?),
                Some(metrics::ssim(&clean, &out.image)?),
            )
        }
        None => (None, None),
    };
    let report = MetricsReport {
        psnr,
        ssim,
        wall_time: out.seconds,
        sigma_used: out.mean_sigma(),
        adjusted_fraction: out.adjusted_fraction(),
    };
    if let Some(path) = &args.report {
        let json =
            serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, json)?;
    }
    if let Some(p) = psnr {
        eprintln!(
            "psnr {} dB, ssim {:.4}",
            metrics::format_db(p),
            ssim.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn run_addnoise(args: &AddnoiseArgs) -> Result<(), Error> {
    let img = io::load(&args.input)?;
    let noisy = metrics::add_awgn(&img, args.sigma, args.seed)?;
    io::store(&noisy, &args.output)
}

fn run_bench(args: &BenchArgs) -> Result<(), Error> {
    let cfg = BenchConfig::load(&args.config)?;
    let rows = bench::run_bench(&cfg)?;
    bench::write_csv(&rows, &args.csv)?;
    if let Some(spec) = cfg.sweep_spec() {
        let path = args
            .sweep_csv
            .clone()
            .unwrap_or_else(|| sweep_path(&args.csv));
        let rows = bench::run_sweep(&spec)?;
        bench::write_csv(&rows, &path)?;
    }
    Ok(())
}

fn sweep_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("bench");
    csv.with_file_name(format!("{stem}_sweep.csv"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Denoise(args) => run_denoise(args),
        Command::Addnoise(args) => run_addnoise(args),
        Command::Bench(args) => run_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
