//! Naive versus calibrated predictive intervals on simulated linear regression.
//!
//! Each cell `(prior mean i, seed)` fits the conjugate posterior under the prior
//! `N(i·1, prior_scale·I)` on a training set, then compares
//!
//! - the naive interval at predictive quantiles `[α/2, 1 - α/2]`, and
//! - the calibrated interval at `[q̂, 1 - q̂]`, with `q̂` chosen on a separate
//!   calibration set,
//!
//! by coverage and mean width on a test set. The true coefficients and all
//! three datasets depend only on the seed, so every prior within a seed sees
//! the same data.

use std::cmp::Ordering as CmpOrdering;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::blr::{posterior_update, PredictiveMode, PredictiveSource, PriorSpec};
use crate::calibrator::{calibrate_q, QuantileGrid, DEFAULT_EPSILON, DEFAULT_GRID_SIZE};
use crate::error::{Error, Result};
use crate::prior_quality::{BetaSource, GeneratedData, GeneratorSpec};
use crate::rng::RngStream;

const KEY_BETA: u64 = 1;
const KEY_DATA: u64 = 2;
const KEY_ENSEMBLE: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    /// Fitted feature count, intercept included.
    pub d: usize,
    pub n_train: usize,
    pub n_calib: usize,
    pub n_test: usize,
    pub sigma2: f64,
    pub prior_means: Vec<i64>,
    pub prior_scale: f64,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    pub mode: PredictiveMode,
    /// Ensemble size in sampling mode.
    pub samples: usize,
    /// Coefficient of a generator-only feature (misspecified study).
    pub missing_beta: Option<f64>,
    /// Use one set of true coefficients for every seed.
    pub fixed_beta: bool,
    pub grid_size: usize,
    pub epsilon: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            d: 20,
            n_train: 30,
            n_calib: 30,
            n_test: 300,
            sigma2: 4.0,
            prior_means: (-10..=10).collect(),
            prior_scale: 2.0,
            alpha: 0.1,
            seeds: (0..10).collect(),
            mode: PredictiveMode::Sampling,
            samples: 100_000,
            missing_beta: None,
            fixed_beta: false,
            grid_size: DEFAULT_GRID_SIZE,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::Config(format!("{key}: {why}")));
        if self.d == 0 {
            return bad("d", "must be at least 1".into());
        }
        for (key, v) in [("n_train", self.n_train), ("n_calib", self.n_calib), ("n_test", self.n_test)] {
            if v == 0 {
                return bad(key, "must be at least 1".into());
            }
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad("sigma2", format!("must be positive, got {}", self.sigma2));
        }
        if !(self.prior_scale > 0.0 && self.prior_scale.is_finite()) {
            return bad("prior_scale", format!("must be positive, got {}", self.prior_scale));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("must lie in (0, 1), got {}", self.alpha));
        }
        if self.prior_means.is_empty() {
            return bad("prior_means", "must not be empty".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds", "must not be empty".into());
        }
        if self.mode == PredictiveMode::Sampling && self.samples < 2 {
            return bad("samples", format!("must be at least 2, got {}", self.samples));
        }
        if self.grid_size == 0 {
            return bad("grid_size", "must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon", format!("must lie in (0, 1), got {}", self.epsilon));
        }
        if self.missing_beta.is_some_and(|b| !b.is_finite()) {
            return bad("missing_beta", "must be finite".into());
        }
        Ok(())
    }

    pub fn generator(&self, beta: DVector<f64>) -> Result<GeneratorSpec> {
        GeneratorSpec::new(BetaSource::Fixed(beta), self.sigma2, self.n_train, self.missing_beta)
    }

    fn role_size(&self, role: DataRole) -> usize {
        match role {
            DataRole::Train => self.n_train,
            DataRole::Calib => self.n_calib,
            DataRole::Test => self.n_test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataRole {
    Train,
    Calib,
    Test,
}

impl DataRole {
    fn key(self) -> u64 {
        match self {
            DataRole::Train => 0,
            DataRole::Calib => 1,
            DataRole::Test => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Naive,
    Calibrated,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Calibrated => "calibrated",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Method::Naive),
            "calibrated" => Ok(Method::Calibrated),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub seed: u64,
    pub prior_mean: i64,
    pub method: Method,
    pub coverage: f64,
    pub mean_width: f64,
    /// `α/2` for the naive method, `q̂` for the calibrated one.
    pub q_used: f64,
    pub saturated: bool,
}

/// Seed-averaged results for one `(prior mean, method)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub prior_mean: i64,
    pub method: Method,
    pub mean_coverage: f64,
    pub mean_width: f64,
    pub n_seeds: usize,
    pub n_saturated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub seed: u64,
    pub prior_mean: i64,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudyReport {
    /// Ordered by prior mean, then seed, then method.
    pub rows: Vec<StudyRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<CellFailure>,
    /// Cells not run because the study was cancelled.
    pub skipped: usize,
}

impl StudyReport {
    pub fn summary_for(&self, prior_mean: i64, method: Method) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.prior_mean == prior_mean && s.method == method)
    }
}

/// True coefficients for a seed, standard normal in every coordinate.
pub fn true_beta(cfg: &StudyConfig, seed: u64) -> DVector<f64> {
    let seed = if cfg.fixed_beta { 0 } else { seed };
    let mut rng = RngStream::keyed(seed, &[KEY_BETA]);
    DVector::from_fn(cfg.d, |_, _| StandardNormal.sample(&mut rng))
}

/// The dataset for `role` under `seed`; identical across prior means.
pub fn generate_data(cfg: &StudyConfig, role: DataRole, seed: u64) -> Result<GeneratedData> {
    cfg.validate()?;
    let beta = true_beta(cfg, seed);
    let gen = cfg.generator(beta.clone())?;
    let mut rng = RngStream::keyed(seed, &[KEY_DATA, role.key()]);
    gen.draw_dataset(&beta, cfg.role_size(role), &mut rng)
}

#[derive(Default)]
struct Tally {
    covered: usize,
    width: f64,
}

/// Fits one posterior and evaluates the naive and calibrated intervals on the
/// test set. Calibration saturation is recorded on the calibrated row.
pub fn run_cell(cfg: &StudyConfig, prior_mean: i64, seed: u64) -> Result<[StudyRow; 2]> {
    cfg.validate()?;
    let train = generate_data(cfg, DataRole::Train, seed)?.dataset;
    let calib = generate_data(cfg, DataRole::Calib, seed)?.dataset;
    let test = generate_data(cfg, DataRole::Test, seed)?.dataset;

    let prior = PriorSpec::isotropic(cfg.d, prior_mean as f64, cfg.prior_scale)?;
    let post = posterior_update(&prior, &train, cfg.sigma2)?;
    let ensemble_rng = RngStream::keyed(seed, &[KEY_ENSEMBLE, prior_mean as u64]);
    let mut source = PredictiveSource::new(&post, cfg.mode, cfg.samples, ensemble_rng)?;

    let calib_preds = (0..calib.len())
        .map(|i| source.predictive(&calib.input(i)))
        .collect::<Result<Vec<_>>>()?;
    let grid = QuantileGrid::for_predictives(&calib_preds, cfg.grid_size)?;
    let calibration = calibrate_q(calib.outputs().as_slice(), &calib_preds, cfg.alpha, &grid, cfg.epsilon)?;
    drop(calib_preds);

    let (mut naive, mut calibrated) = (Tally::default(), Tally::default());
    let levels = [cfg.alpha / 2.0, calibration.q_hat];
    for i in 0..test.len() {
        let y = test.outputs()[i];
        let ivs = source.symmetric_intervals(&test.input(i), &levels)?;
        let (naive_iv, calib_iv) = (ivs[0], ivs[1]);
        naive.covered += usize::from(naive_iv.contains(y));
        naive.width += naive_iv.width();
        calibrated.covered += usize::from(calib_iv.contains(y));
        calibrated.width += calib_iv.width();
    }
    let n = test.len() as f64;
    let row = |method, tally: &Tally, q_used, saturated| StudyRow {
        seed,
        prior_mean,
        method,
        coverage: tally.covered as f64 / n,
        mean_width: tally.width / n,
        q_used,
        saturated,
    };
    Ok([
        row(Method::Naive, &naive, cfg.alpha / 2.0, false),
        row(Method::Calibrated, &calibrated, calibration.q_hat, calibration.saturated),
    ])
}

/// Every `(prior mean, seed)` cell; see [`run_study_with_cancel`].
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    run_study_with_cancel(cfg, &AtomicBool::new(false))
}

/// Runs cells in parallel on the current rayon pool. Failed cells are listed
/// in `failures`; once `cancel` is set, cells that have not started are skipped.
/// The report is deterministic given the config.
pub fn run_study_with_cancel(cfg: &StudyConfig, cancel: &AtomicBool) -> Result<StudyReport> {
    cfg.validate()?;
    let cells: Vec<(i64, u64)> = cfg
        .prior_means
        .iter()
        .flat_map(|&i| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let outcomes: Vec<Option<Result<[StudyRow; 2]>>> = cells
        .par_iter()
        .map(|&(i, seed)| (!cancel.load(Ordering::Relaxed)).then(|| run_cell(cfg, i, seed)))
        .collect();

    let mut report = StudyReport::default();
    for (&(prior_mean, seed), outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Some(Ok(rows)) => report.rows.extend(rows),
            Some(Err(error)) => report.failures.push(CellFailure { seed, prior_mean, error }),
            None => report.skipped += 1,
        }
    }
    report.rows.sort_by(|a, b| {
        (a.prior_mean, a.seed, a.method)
            .partial_cmp(&(b.prior_mean, b.seed, b.method))
            .unwrap_or(CmpOrdering::Equal)
    });
    report.summary = summarize(&report.rows);
    Ok(report)
}

/// Arithmetic means over seeds, per `(prior mean, method)`.
pub fn summarize(rows: &[StudyRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(i64, Method), Vec<&StudyRow>> = BTreeMap::new();
    for row in rows {
        groups.entry((row.prior_mean, row.method)).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|((prior_mean, method), rows)| {
            let n = rows.len() as f64;
            SummaryRow {
                prior_mean,
                method,
                mean_coverage: rows.iter().map(|r| r.coverage).sum::<f64>() / n,
                mean_width: rows.iter().map(|r| r.mean_width).sum::<f64>() / n,
                n_seeds: rows.len(),
                n_saturated: rows.iter().filter(|r| r.saturated).count(),
            }
        })
        .collect()
}
