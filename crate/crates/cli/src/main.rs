use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use ensemble_calib::blr::PredictiveMode;
use ensemble_calib::calibrator::DEFAULT_GRID_SIZE;
use ensemble_calib::prior_quality::QualityKind;
use ensemble_calib_cli::commands::{self, CalibrateArgs, Overrides};
use ensemble_calib_cli::config::int_list;
use ensemble_calib_cli::CliError;

const THREADS_ENV: &str = "ENSEMBLE_CALIB_THREADS";
const EXIT_INTERRUPTED: u8 = 130;

#[derive(Parser)]
#[command(name = "ensemble-calib", version, about = "Calibrated predictive intervals for Bayesian ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the prior-mean sweep and write rows.csv, summary.csv and manifest.json.
    RunStudy {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        mode: Option<PredictiveMode>,
        /// Comma-separated seeds, or an inclusive range `a..b`.
        #[arg(long)]
        seed_list: Option<String>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Pick the calibrated quantile level from predictive samples and labels.
    Calibrate {
        /// One row of comma-separated samples per calibration point, no header.
        #[arg(long)]
        samples: PathBuf,
        /// CSV with a header row and a `y` column.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
    },
    /// Monte Carlo estimate of a prior's frequentist coverage.
    PriorQuality {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "avg")]
        kind: QualityKind,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        mode: Option<PredictiveMode>,
    },
    /// Draw coverage.svg and width.svg from a summary.csv.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Target miscoverage for the reference line; defaults to the config's alpha.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(THREADS_ENV, format!("expected a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(THREADS_ENV, e.to_string()))
}

fn interrupt_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let handler_flag = Arc::clone(&flag);
    let installed = ctrlc::set_handler(move || {
        if handler_flag.swap(true, Ordering::SeqCst) {
            std::process::exit(EXIT_INTERRUPTED.into());
        }
        eprintln!("interrupt: finishing running cells, then writing partial results");
    });
    if let Err(e) = installed {
        eprintln!("warning: cannot install interrupt handler: {e}");
    }
    flag
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    configure_threads()?;
    match cli.command {
        Command::RunStudy { config, out, alpha, mode, seed_list, epsilon } => {
            let seeds = seed_list.map(|s| int_list::<u64>("seed-list", &s)).transpose()?;
            let overrides = Overrides { alpha, mode, seeds, epsilon };
            let cfg = commands::load_config(config.as_deref(), &overrides)?;
            let cancel = interrupt_flag();
            let outcome = commands::cmd_run_study(&cfg, &out, &cancel)?;
            let r = &outcome.report;
            eprintln!(
                "{} rows, {} failed cells, {} skipped cells -> {}",
                r.rows.len(),
                r.failures.len(),
                r.skipped,
                out.display()
            );
            for f in &r.failures {
                eprintln!("cell seed={} prior_mean={}: {}", f.seed, f.prior_mean, f.error);
            }
            if outcome.interrupted {
                return Ok(ExitCode::from(EXIT_INTERRUPTED));
            }
        }
        Command::Calibrate { samples, labels, alpha, epsilon, grid_size } => {
            let args = CalibrateArgs { samples, labels, alpha, epsilon, grid_size };
            print!("{}", commands::format_calibration(&commands::cmd_calibrate(&args)?));
        }
        Command::PriorQuality { config, kind, alpha, mode } => {
            let overrides = Overrides { alpha, mode, ..Default::default() };
            let cfg = commands::load_config(config.as_deref(), &overrides)?;
            print!("{}", commands::format_quality(&commands::cmd_prior_quality(&cfg, kind)?));
        }
        Command::Plot { summary, out, alpha, config } => {
            let alpha = match alpha {
                Some(a) => a,
                None => commands::load_config(config.as_deref(), &Overrides::default())?.study.alpha,
            };
            for p in commands::cmd_plot(&summary, &out, alpha)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
