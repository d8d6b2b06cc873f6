//! Flat `key = value` run configuration.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored. Every key
//! is optional; missing keys take the defaults below. Unknown or repeated keys
//! are rejected.
//!
//! | key                  | default      | meaning                                         |
//! |----------------------|--------------|-------------------------------------------------|
//! | `d`                  | 20           | fitted features, intercept included             |
//! | `n_train`            | 30           | training set size                               |
//! | `n_calib`            | 30           | calibration (quantile-estimation) set size      |
//! | `n_test`             | 300          | test set size                                   |
//! | `sigma2`             | 4            | known noise variance                            |
//! | `prior_means`        | `-10..10`    | prior centers `i`; `a..b` is inclusive, or a comma list |
//! | `prior_scale`        | 2            | prior covariance `prior_scale · I`              |
//! | `alpha`              | 0.1          | target miscoverage                              |
//! | `seeds`              | `0..9`       | seeds, same syntax as `prior_means`             |
//! | `mode`               | `sampling`   | `analytic` or `sampling` predictives            |
//! | `samples`            | 100000       | ensemble size in sampling mode                  |
//! | `missing_beta`       | `none`       | coefficient of a generator-only feature         |
//! | `fixed_beta`         | `false`      | share one coefficient vector across seeds       |
//! | `grid_size`          | 512          | calibration grid size                           |
//! | `epsilon`            | 0.05         | PAC failure probability                         |
//! | `mc_reps`            | 200          | prior quality: training sets                    |
//! | `inner_reps`         | 1000         | prior quality: fresh pairs per training set     |
//! | `quality_prior_mean` | 0            | prior quality: prior center                     |
//! | `quality_beta`       | `prior`      | `prior` (β drawn from the evaluated prior) or `standard` (β ~ N(0, I)) |
//! | `quality_mode`       | `analytic`   | prior quality predictive mode                   |
//! | `quality_samples`    | 10000        | prior quality ensemble size                     |
//! | `quality_threshold`  | `auto`       | coverage threshold for `prob`; `auto` is `1 - alpha` |
//! | `quality_seed`       | 0            | prior quality random seed                       |

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ensemble_calib::blr::PredictiveMode;
use ensemble_calib::simulation::StudyConfig;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityBeta {
    /// True coefficients drawn from `N(0, I)` for each training set.
    Standard,
    /// True coefficients drawn from the evaluated prior itself.
    Prior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityConfig {
    pub mc_reps: usize,
    pub inner_reps: usize,
    pub prior_mean: f64,
    pub beta: QualityBeta,
    pub mode: PredictiveMode,
    pub samples: usize,
    pub threshold: Option<f64>,
    pub seed: u64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            mc_reps: 200,
            inner_reps: 1000,
            prior_mean: 0.0,
            beta: QualityBeta::Prior,
            mode: PredictiveMode::Analytic,
            samples: 10_000,
            threshold: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub study: StudyConfig,
    pub quality: QualityConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.study.validate().map_err(|e| match e {
            ensemble_calib::Error::Config(msg) => match msg.split_once(": ") {
                Some((key, rest)) => CliError::config(key, rest),
                None => CliError::config("config", msg),
            },
            other => CliError::Core(other),
        })?;
        let q = &self.quality;
        if q.mc_reps == 0 {
            return Err(CliError::config("mc_reps", "must be at least 1"));
        }
        if q.inner_reps == 0 {
            return Err(CliError::config("inner_reps", "must be at least 1"));
        }
        if !q.prior_mean.is_finite() {
            return Err(CliError::config("quality_prior_mean", "must be finite"));
        }
        if q.mode == PredictiveMode::Sampling && q.samples < 2 {
            return Err(CliError::config("quality_samples", "must be at least 2"));
        }
        if q.threshold.is_some_and(|t| !(0.0..=1.0).contains(&t)) {
            return Err(CliError::config("quality_threshold", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Fixed-order rendering of every field, used for hashing and manifests.
    pub fn canonical(&self) -> String {
        let s = &self.study;
        let q = &self.quality;
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("d", s.d.to_string());
        put("n_train", s.n_train.to_string());
        put("n_calib", s.n_calib.to_string());
        put("n_test", s.n_test.to_string());
        put("sigma2", format!("{:?}", s.sigma2));
        put("prior_means", join(&mut s.prior_means.iter().map(i64::to_string)));
        put("prior_scale", format!("{:?}", s.prior_scale));
        put("alpha", format!("{:?}", s.alpha));
        put("seeds", join(&mut s.seeds.iter().map(u64::to_string)));
        put("mode", s.mode.as_str().to_string());
        put("samples", s.samples.to_string());
        put("missing_beta", s.missing_beta.map_or("none".into(), |b| format!("{b:?}")));
        put("fixed_beta", s.fixed_beta.to_string());
        put("grid_size", s.grid_size.to_string());
        put("epsilon", format!("{:?}", s.epsilon));
        put("mc_reps", q.mc_reps.to_string());
        put("inner_reps", q.inner_reps.to_string());
        put("quality_prior_mean", format!("{:?}", q.prior_mean));
        put(
            "quality_beta",
            match q.beta {
                QualityBeta::Standard => "standard".into(),
                QualityBeta::Prior => "prior".into(),
            },
        );
        put("quality_mode", q.mode.as_str().to_string());
        put("quality_samples", q.samples.to_string());
        put("quality_threshold", q.threshold.map_or("auto".into(), |t| format!("{t:?}")));
        put("quality_seed", q.seed.to_string());
        out
    }

    /// SHA-256 of [`Config::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

pub fn parse_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    let mut seen = std::collections::HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::config(
                "config",
                format!("line {}: expected `key = value`, got {line:?}", lineno + 1),
            ));
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(CliError::config(key, "given more than once"));
        }
        apply(&mut cfg, key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::config(key, format!("cannot parse {value:?}")))
}

/// `a..b` (inclusive) or a comma-separated list.
pub fn int_list<T>(key: &str, value: &str) -> Result<Vec<T>>
where
    T: FromStr + Copy + Into<i128> + TryFrom<i128>,
{
    if let Some((a, b)) = value.split_once("..") {
        let a: T = number(key, a.trim())?;
        let b: T = number(key, b.trim())?;
        let (a, b): (i128, i128) = (a.into(), b.into());
        if a > b {
            return Err(CliError::config(key, format!("empty range {value:?}")));
        }
        return (a..=b)
            .map(|v| T::try_from(v).map_err(|_| CliError::config(key, "range out of bounds")))
            .collect();
    }
    value
        .split(',')
        .map(|item| number(key, item.trim()))
        .collect()
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::config(key, format!("expected true or false, got {value:?}"))),
    }
}

fn mode(key: &str, value: &str) -> Result<PredictiveMode> {
    value
        .parse()
        .map_err(|_| CliError::config(key, format!("expected analytic or sampling, got {value:?}")))
}

fn apply(cfg: &mut Config, key: &str, value: &str) -> Result<()> {
    let s = &mut cfg.study;
    let q = &mut cfg.quality;
    match key {
        "d" => s.d = number(key, value)?,
        "n_train" => s.n_train = number(key, value)?,
        "n_calib" => s.n_calib = number(key, value)?,
        "n_test" => s.n_test = number(key, value)?,
        "sigma2" => s.sigma2 = number(key, value)?,
        "prior_means" => s.prior_means = int_list(key, value)?,
        "prior_scale" => s.prior_scale = number(key, value)?,
        "alpha" => s.alpha = number(key, value)?,
        "seeds" => s.seeds = int_list(key, value)?,
        "mode" => s.mode = mode(key, value)?,
        "samples" => s.samples = number(key, value)?,
        "missing_beta" => {
            s.missing_beta = match value {
                "none" => None,
                v => Some(number(key, v)?),
            }
        }
        "fixed_beta" => s.fixed_beta = boolean(key, value)?,
        "grid_size" => s.grid_size = number(key, value)?,
        "epsilon" => s.epsilon = number(key, value)?,
        "mc_reps" => q.mc_reps = number(key, value)?,
        "inner_reps" => q.inner_reps = number(key, value)?,
        "quality_prior_mean" => q.prior_mean = number(key, value)?,
        "quality_beta" => {
            q.beta = match value {
                "standard" => QualityBeta::Standard,
                "prior" => QualityBeta::Prior,
                v => return Err(CliError::config(key, format!("expected standard or prior, got {v:?}"))),
            }
        }
        "quality_mode" => q.mode = mode(key, value)?,
        "quality_samples" => q.samples = number(key, value)?,
        "quality_threshold" => {
            q.threshold = match value {
                "auto" => None,
                v => Some(number(key, v)?),
            }
        }
        "quality_seed" => q.seed = number(key, value)?,
        other => return Err(CliError::config(other, "unknown key")),
    }
    Ok(())
}
