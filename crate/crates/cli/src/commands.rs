use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use ensemble_calib::blr::{EmpiricalPredictive, Predictive, PredictiveMode, PriorSpec};
use ensemble_calib::calibrator::{calibrate_q, CalibrationResult, QuantileGrid, DEFAULT_EPSILON, DEFAULT_GRID_SIZE};
use ensemble_calib::gaussian::SpdMatrix;
use ensemble_calib::prior_quality::{self, BetaSource, GeneratorSpec, QualityEstimate, QualityKind, QualitySettings};
use ensemble_calib::simulation::{run_study_with_cancel, StudyReport};
use ensemble_calib::RngStream;
use nalgebra::DVector;

use crate::config::{parse_config, Config, QualityBeta};
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::output::{fmt17, read_labels, read_samples, read_summary, write_rows, write_summary};
use crate::plot::{self, Metric};

pub const ROWS_FILE: &str = "rows.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const COVERAGE_PLOT: &str = "coverage.svg";
pub const WIDTH_PLOT: &str = "width.svg";

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub mode: Option<PredictiveMode>,
    pub seeds: Option<Vec<u64>>,
    pub epsilon: Option<f64>,
}

/// Config file (or defaults when `path` is `None`) with overrides applied and
/// the result validated.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => parse_config(p)?,
        None => Config::default(),
    };
    if let Some(a) = overrides.alpha {
        cfg.study.alpha = a;
    }
    if let Some(m) = overrides.mode {
        cfg.study.mode = m;
        cfg.quality.mode = m;
    }
    if let Some(s) = &overrides.seeds {
        cfg.study.seeds = s.clone();
    }
    if let Some(e) = overrides.epsilon {
        cfg.study.epsilon = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Debug)]
pub struct StudyOutcome {
    pub report: StudyReport,
    pub manifest: RunManifest,
    /// True when `cancel` was raised before every cell ran.
    pub interrupted: bool,
}

/// Runs the study and writes `rows.csv`, `summary.csv` and `manifest.json`
/// into `out`. On cancellation the finished cells are still written and the
/// manifest is marked incomplete.
pub fn cmd_run_study(cfg: &Config, out: &Path, cancel: &AtomicBool) -> Result<StudyOutcome> {
    ensure_dir(out)?;
    let report = run_study_with_cancel(&cfg.study, cancel)?;
    write_rows(&out.join(ROWS_FILE), &report.rows)?;
    write_summary(&out.join(SUMMARY_FILE), &report.summary)?;
    let manifest = RunManifest::for_study(cfg, &report, &[ROWS_FILE, SUMMARY_FILE]);
    manifest.write(&out.join(MANIFEST_FILE))?;
    let interrupted = report.skipped > 0;
    Ok(StudyOutcome { report, manifest, interrupted })
}

#[derive(Debug, Clone)]
pub struct CalibrateArgs {
    pub samples: PathBuf,
    pub labels: PathBuf,
    pub alpha: f64,
    pub epsilon: Option<f64>,
    pub grid_size: usize,
}

impl CalibrateArgs {
    pub fn new(samples: impl Into<PathBuf>, labels: impl Into<PathBuf>, alpha: f64) -> Self {
        Self { samples: samples.into(), labels: labels.into(), alpha, epsilon: None, grid_size: DEFAULT_GRID_SIZE }
    }
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<CalibrationResult> {
    let rows = read_samples(&args.samples)?;
    let labels = read_labels(&args.labels)?;
    if rows.len() != labels.len() {
        return Err(CliError::Shape(format!(
            "{} sample rows in {} but {} labels in {}",
            rows.len(),
            args.samples.display(),
            labels.len(),
            args.labels.display()
        )));
    }
    if !(args.alpha > 0.0 && args.alpha <= 1.0) {
        return Err(CliError::config("alpha", format!("must lie in (0, 1], got {}", args.alpha)));
    }
    let epsilon = args.epsilon.unwrap_or(DEFAULT_EPSILON);
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(CliError::config("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    let predictives = rows
        .into_iter()
        .map(|r| EmpiricalPredictive::from_samples(r).map(Predictive::Empirical))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let grid = QuantileGrid::for_predictives(&predictives, args.grid_size)?;
    Ok(calibrate_q(&labels, &predictives, args.alpha, &grid, epsilon)?)
}

pub const CALIBRATE_HEADER: &str = "q_hat,empirical_risk,alpha,pac_slack,epsilon,calib_size,grid_size,saturated";

pub fn format_calibration(r: &CalibrationResult) -> String {
    format!(
        "{CALIBRATE_HEADER}\n{},{},{},{},{},{},{},{}\n",
        fmt17(r.q_hat),
        fmt17(r.empirical_risk),
        fmt17(r.alpha),
        fmt17(r.pac.slack),
        fmt17(r.pac.epsilon),
        r.pac.calib_size,
        r.pac.grid_size,
        r.saturated
    )
}

/// Prior, generator and settings for the prior-quality estimate described by `cfg`.
pub fn quality_problem(cfg: &Config) -> Result<(PriorSpec, GeneratorSpec, QualitySettings)> {
    let s = &cfg.study;
    let q = &cfg.quality;
    let prior = PriorSpec::isotropic(s.d, q.prior_mean, s.prior_scale)?;
    let beta = match q.beta {
        QualityBeta::Prior => BetaSource::Gaussian {
            mean: prior.mean().clone(),
            covariance: prior.covariance().clone(),
        },
        QualityBeta::Standard => BetaSource::Gaussian {
            mean: DVector::zeros(s.d),
            covariance: SpdMatrix::scaled_identity(s.d, 1.0)?,
        },
    };
    let gen = GeneratorSpec::new(beta, s.sigma2, s.n_train, s.missing_beta)?;
    let settings = QualitySettings {
        alpha: s.alpha,
        mc_reps: q.mc_reps,
        inner_reps: q.inner_reps,
        mode: q.mode,
        samples: q.samples,
        threshold: q.threshold,
    };
    Ok((prior, gen, settings))
}

pub fn cmd_prior_quality(cfg: &Config, kind: QualityKind) -> Result<QualityEstimate> {
    if !(cfg.study.alpha < 1.0) {
        return Err(CliError::config("alpha", "must be below 1 for prior quality"));
    }
    let (prior, gen, settings) = quality_problem(cfg)?;
    let rng = RngStream::new(cfg.quality.seed, 0);
    Ok(prior_quality::estimate(kind, &prior, &gen, &settings, &rng)?)
}

pub const QUALITY_HEADER: &str = "kind,value,std_error,mc_reps,inner_reps,saturated_reps";

pub fn format_quality(e: &QualityEstimate) -> String {
    format!(
        "{QUALITY_HEADER}\n{},{},{},{},{},{}\n",
        e.kind.as_str(),
        fmt17(e.value),
        fmt17(e.std_error),
        e.mc_reps,
        e.inner_reps,
        e.saturated_reps
    )
}

/// Writes `coverage.svg` and `width.svg` for the summary at `summary`.
pub fn cmd_plot(summary: &Path, out: &Path, alpha: f64) -> Result<[PathBuf; 2]> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::config("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let rows = read_summary(summary)?;
    ensure_dir(out)?;
    let coverage = plot::render(&rows, Metric::Coverage, Some(1.0 - alpha), "Coverage of test data");
    let width = plot::render(&rows, Metric::Width, None, "Average interval width");
    let paths = [out.join(COVERAGE_PLOT), out.join(WIDTH_PLOT)];
    for (path, svg) in paths.iter().zip([coverage, width]) {
        fs::write(path, svg).map_err(|e| CliError::io(path, e))?;
    }
    Ok(paths)
}
