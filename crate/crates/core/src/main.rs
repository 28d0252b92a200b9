use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use spad_core::grid::psnr;
use spad_core::io::{
    read_events_file, read_pgm, write_events_file, write_flux_csv, write_metrics_csv, write_pgm16, AcquisitionMode,
    RunConfig,
};
use spad_core::reconstruction::{dps_reconstruct, inverse_adapt, mle_reconstruct, parse_prior};
use spad_core::simulator::{simulate_image, simulate_image_fixed_count, CountSummary};
use spad_core::verify::{run_all, VerifyOptions};
use spad_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "spad",
    version,
    about = "SPAD event-stream simulation, estimation and reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value run configuration
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate detection events for a grayscale PGM image
    Simulate {
        /// Input image (binary PGM, 8 or 16 bit)
        image: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Illuminance of a white pixel
        #[arg(long, value_name = "F64")]
        lux: Option<f64>,
        /// Fixed exposure acquisition (the default)
        #[arg(long, conflicts_with = "fixed_count")]
        fixed_exposure: bool,
        /// Unbounded exposure, stopping after N detections per pixel
        #[arg(long, value_name = "N")]
        fixed_count: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Per-pixel maximum-likelihood flux from an event file
    Mle {
        events: PathBuf,
        /// Output PGM; a CSV with raw estimates is written next to it
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Run the statistical self-checks
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Diffusion posterior sampling reconstruction from an event file
    Reconstruct {
        events: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// gaussian:MEAN,STD | smooth:WEIGHT | remote:ADDRESS
        #[arg(long, value_name = "SPEC")]
        prior: Option<String>,
        /// Ground-truth PGM for PSNR
        #[arg(long, value_name = "PATH")]
        reference: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    out.with_file_name(name)
}

fn simulate(image: &Path, out: &Path, lux: Option<f64>, fixed_count: Option<usize>, common: &Common) -> Result<()> {
    let mut config = common.load()?;
    if let Some(lux) = lux {
        config.reference_lux = lux;
    }
    if let Some(n) = fixed_count {
        if n == 0 {
            return Err(Error::Config("--fixed-count must be at least 1".into()));
        }
        config.mode = AcquisitionMode::FixedCount(n);
    }
    config.validate()?;
    let picture = read_pgm(image)?;
    let sensor = config.effective_sensor();
    let events = match config.mode {
        AcquisitionMode::FixedExposure => simulate_image(&picture, config.reference_lux, &sensor, config.seed)?,
        AcquisitionMode::FixedCount(n) => {
            simulate_image_fixed_count(&picture, config.reference_lux, n, &sensor, config.seed)?
        }
    };
    write_events_file(out, &events)?;
    print!("{}", CountSummary::new(&events, 16));
    Ok(())
}

fn mle(events: &Path, out: &Path) -> Result<()> {
    let streams = read_events_file(events)?;
    let result = mle_reconstruct(&streams);
    let image = result.flux.image();
    let peak = image.data().iter().copied().fold(0.0, f64::max);
    let normalized = image.map(|v| if peak > 0.0 { v / peak } else { 0.0 });
    write_pgm16(out, &normalized)?;
    let csv = std::fs::File::create(sidecar(out, ".csv"))?;
    write_flux_csv(csv, &streams.counts(), image, &result.flags)?;
    println!("max flux {peak:e} /s over {} pixels", image.len());
    Ok(())
}

fn verify(common: &Common) -> Result<bool> {
    let config = common.load()?;
    let options = VerifyOptions {
        exposure: config.sensor.exposure,
        dead_time: config.sensor.dead_time,
        mc_pixels: config.mc_pixels,
        seed: config.seed,
        corrupt_cdf: config.corrupt_cdf,
    };
    let report = run_all(&options)?;
    print!("{report}");
    Ok(report.passed())
}

fn reconstruct(
    events: &Path,
    out: &Path,
    prior: Option<&str>,
    reference: Option<&Path>,
    common: &Common,
) -> Result<()> {
    let config = common.load()?;
    let streams = read_events_file(events)?;
    let prior = parse_prior(prior.unwrap_or(&config.prior))?;
    let transform = config.transform()?;
    let schedule = config.schedule()?;
    let result = dps_reconstruct(
        &streams,
        prior.as_ref(),
        &transform,
        &schedule,
        config.guidance,
        config.seed,
    )?;
    if result.masked_updates > 0 {
        warn!(
            "{} guidance updates skipped on pixels with detections at zero flux",
            result.masked_updates
        );
    }
    let shown = inverse_adapt(&result.flux, &transform).map(|x| (x + 1.0) / 2.0);
    write_pgm16(out, &shown)?;
    let mut metrics = vec![
        (
            "mean_flux",
            result.flux.image().data().iter().sum::<f64>() / shown.len() as f64,
        ),
        ("masked_updates", result.masked_updates as f64),
    ];
    if let Some(path) = reference {
        let truth = read_pgm(path)?;
        let value = psnr(&truth, &shown, 1.0)?;
        println!("psnr {value:.3} dB");
        metrics.push(("psnr", value));
    }
    write_metrics_csv(std::fs::File::create(sidecar(out, ".metrics.csv"))?, &metrics)?;
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("SPAD_THREADS") {
        let threads: usize = value
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("SPAD_THREADS must be a positive integer, got {value:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate {
            image,
            out,
            lux,
            fixed_count,
            common,
            ..
        } => simulate(image, out, *lux, *fixed_count, common).map(|_| true),
        Command::Mle { events, out } => mle(events, out).map(|_| true),
        Command::Verify { common } => verify(common),
        Command::Reconstruct {
            events,
            out,
            prior,
            reference,
            common,
        } => reconstruct(events, out, prior.as_deref(), reference.as_deref(), common).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
