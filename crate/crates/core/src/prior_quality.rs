//! Monte Carlo estimates of how well a prior's `1 - α` predictive intervals
//! cover new data, from a frequentist point of view.
//!
//! For each of `mc_reps` training sets drawn from the generator, the posterior
//! predictive's equal-tailed interval is evaluated on `inner_reps` fresh
//! `(x*, y)` pairs, giving a conditional coverage `c_r`. Then:
//!
//! - average quality `Q` is the mean of the `c_r`;
//! - worst-case quality `Q'` is their minimum (a sampled lower envelope, not
//!   the true infimum over training sets, which is out of reach);
//! - probabilistic quality `Q''` is the fraction of `c_r` at or above a
//!   threshold, `1 - α` unless overridden.
//!
//! Replications whose predictive cannot resolve the interval's tail level are
//! counted as saturated and left out of all three estimates.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::blr::{posterior_update, Dataset, Interval, Predictive, PredictiveMode, PredictiveSource, PriorSpec};
use crate::error::{Error, Result};
use crate::gaussian::{mvn_sample, SpdMatrix};
use crate::rng::RngStream;

const KEY_TRAIN: u64 = 1;
const KEY_FRESH: u64 = 2;
const KEY_ENSEMBLE: u64 = 3;
const KEY_HIDDEN: u64 = 4;

/// Equal-tailed interval with predictive mass `1 - α`: quantiles `α/2` and `1 - α/2`.
pub fn central_interval(pred: &Predictive, alpha: f64) -> Result<Interval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    pred.symmetric_interval(alpha / 2.0)
}

/// Where the generator's true coefficients come from.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaSource {
    Fixed(DVector<f64>),
    /// Drawn afresh for every training set, e.g. from the prior itself.
    Gaussian { mean: DVector<f64>, covariance: SpdMatrix },
}

impl BetaSource {
    pub fn dim(&self) -> usize {
        match self {
            BetaSource::Fixed(b) => b.len(),
            BetaSource::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn draw(&self, rng: &mut RngStream) -> Result<DVector<f64>> {
        match self {
            BetaSource::Fixed(b) => Ok(b.clone()),
            BetaSource::Gaussian { mean, covariance } => {
                Ok(mvn_sample(mean, covariance, 1, rng)?.row(0).transpose())
            }
        }
    }
}

/// A dataset plus, in misspecified mode, the feature the fitted model never sees.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub dataset: Dataset,
    pub hidden: Option<DVector<f64>>,
}

/// Linear-Gaussian data generator.
///
/// Inputs are `[1, x₁, …, x_{d-1}]` with standard normal features and
/// `y ~ N(xᵀβ, σ²)`. With a missing coefficient `β_h`, an extra standard normal
/// feature `h` enters as `y ~ N(xᵀβ + β_h·h, σ²)` but is not part of the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub beta: BetaSource,
    pub noise_var: f64,
    pub n_train: usize,
    pub missing_coefficient: Option<f64>,
}

impl GeneratorSpec {
    pub fn new(
        beta: BetaSource,
        noise_var: f64,
        n_train: usize,
        missing_coefficient: Option<f64>,
    ) -> Result<Self> {
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::Domain(format!("noise variance must be positive, got {noise_var}")));
        }
        if n_train == 0 || beta.dim() == 0 {
            return Err(Error::Domain("generator sizes must be at least 1".into()));
        }
        if missing_coefficient.is_some_and(|b| !b.is_finite()) {
            return Err(Error::Domain("missing coefficient must be finite".into()));
        }
        Ok(Self { beta, noise_var, n_train, missing_coefficient })
    }

    pub fn dim(&self) -> usize {
        self.beta.dim()
    }

    /// `n` rows from the generator with coefficients `beta`. The hidden feature
    /// is drawn from its own substream, so a zero missing coefficient
    /// reproduces the well-specified data exactly.
    pub fn draw_dataset(&self, beta: &DVector<f64>, n: usize, rng: &mut RngStream) -> Result<GeneratedData> {
        let d = self.dim();
        if beta.len() != d {
            return Err(Error::Shape(format!(
                "coefficients have dimension {} but the generator has {d}",
                beta.len()
            )));
        }
        let mut hidden_rng = rng.substream(&[KEY_HIDDEN]);
        let noise_sd = self.noise_var.sqrt();
        let mut inputs = DMatrix::<f64>::zeros(n, d);
        let mut outputs = DVector::<f64>::zeros(n);
        let mut hidden = self.missing_coefficient.map(|_| DVector::<f64>::zeros(n));
        for i in 0..n {
            inputs[(i, 0)] = 1.0;
            for j in 1..d {
                inputs[(i, j)] = StandardNormal.sample(rng);
            }
            let eps: f64 = StandardNormal.sample(rng);
            let mut y = inputs.row(i).transpose().dot(beta) + noise_sd * eps;
            if let (Some(h), Some(coef)) = (hidden.as_mut(), self.missing_coefficient) {
                let feature: f64 = StandardNormal.sample(&mut hidden_rng);
                h[i] = feature;
                y += coef * feature;
            }
            outputs[i] = y;
        }
        Ok(GeneratedData { dataset: Dataset::new(inputs, outputs)?, hidden })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QualityKind {
    Average,
    Worst,
    Probabilistic,
}

impl QualityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            QualityKind::Average => "avg",
            QualityKind::Worst => "worst",
            QualityKind::Probabilistic => "prob",
        }
    }
}

impl std::str::FromStr for QualityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" | "average" => Ok(QualityKind::Average),
            "worst" => Ok(QualityKind::Worst),
            "prob" | "probabilistic" => Ok(QualityKind::Probabilistic),
            other => Err(Error::Config(format!("unknown quality kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualitySettings {
    pub alpha: f64,
    pub mc_reps: usize,
    pub inner_reps: usize,
    pub mode: PredictiveMode,
    /// Ensemble size in sampling mode.
    pub samples: usize,
    /// Coverage threshold for the probabilistic measure; `1 - alpha` when `None`.
    pub threshold: Option<f64>,
}

impl QualitySettings {
    pub fn analytic(alpha: f64, mc_reps: usize, inner_reps: usize) -> Self {
        Self { alpha, mc_reps, inner_reps, mode: PredictiveMode::Analytic, samples: 0, threshold: None }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or(1.0 - self.alpha)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.mc_reps == 0 || self.inner_reps == 0 {
            return Err(Error::Domain("mc_reps and inner_reps must be at least 1".into()));
        }
        if self.mode == PredictiveMode::Sampling && self.samples < 2 {
            return Err(Error::Domain("sampling mode needs at least 2 samples".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityEstimate {
    pub kind: QualityKind,
    pub value: f64,
    pub mc_reps: usize,
    pub inner_reps: usize,
    pub std_error: f64,
    pub saturated_reps: usize,
}

/// Per-replication conditional coverages; `None` marks a saturated replication.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageDraws {
    pub coverages: Vec<Option<f64>>,
    pub inner_reps: usize,
}

impl CoverageDraws {
    pub fn valid(&self) -> impl Iterator<Item = f64> + '_ {
        self.coverages.iter().flatten().copied()
    }

    pub fn saturated(&self) -> usize {
        self.coverages.iter().filter(|c| c.is_none()).count()
    }

    fn valid_vec(&self) -> Result<Vec<f64>> {
        let v: Vec<f64> = self.valid().collect();
        if v.is_empty() {
            return Err(Error::Saturated { level: f64::NAN, samples: 0 });
        }
        Ok(v)
    }

    fn estimate(&self, kind: QualityKind, value: f64, std_error: f64) -> QualityEstimate {
        QualityEstimate {
            kind,
            value,
            mc_reps: self.coverages.len(),
            inner_reps: self.inner_reps,
            std_error,
            saturated_reps: self.saturated(),
        }
    }

    /// Mean conditional coverage with its between-replication standard error.
    pub fn average(&self) -> Result<QualityEstimate> {
        let v = self.valid_vec()?;
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let se = if v.len() > 1 {
            (v.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Ok(self.estimate(QualityKind::Average, mean, se))
    }

    /// Minimum conditional coverage; the standard error is the binomial one of
    /// the minimizing replication.
    pub fn worst(&self) -> Result<QualityEstimate> {
        let v = self.valid_vec()?;
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let se = (min * (1.0 - min) / self.inner_reps as f64).sqrt();
        Ok(self.estimate(QualityKind::Worst, min, se))
    }

    /// Fraction of replications whose conditional coverage reaches `threshold`.
    pub fn probabilistic(&self, threshold: f64) -> Result<QualityEstimate> {
        let v = self.valid_vec()?;
        let n = v.len() as f64;
        let p = v.iter().filter(|&&c| c >= threshold).count() as f64 / n;
        Ok(self.estimate(QualityKind::Probabilistic, p, (p * (1.0 - p) / n).sqrt()))
    }
}

/// Runs the nested Monte Carlo once. Replication `r` uses the substream
/// `rng.substream(&[r])`, so results do not depend on thread scheduling.
pub fn conditional_coverages(
    prior: &PriorSpec,
    gen: &GeneratorSpec,
    settings: &QualitySettings,
    rng: &RngStream,
) -> Result<CoverageDraws> {
    settings.validate()?;
    if prior.dim() != gen.dim() {
        return Err(Error::Shape(format!(
            "prior has dimension {} but the generator has {}",
            prior.dim(),
            gen.dim()
        )));
    }
    let coverages = (0..settings.mc_reps)
        .into_par_iter()
        .map(|r| replication(prior, gen, settings, rng.substream(&[r as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoverageDraws { coverages, inner_reps: settings.inner_reps })
}

fn replication(
    prior: &PriorSpec,
    gen: &GeneratorSpec,
    settings: &QualitySettings,
    mut rng: RngStream,
) -> Result<Option<f64>> {
    let beta = gen.beta.draw(&mut rng)?;
    let train = gen.draw_dataset(&beta, gen.n_train, &mut rng.substream(&[KEY_TRAIN]))?;
    let fresh = gen.draw_dataset(&beta, settings.inner_reps, &mut rng.substream(&[KEY_FRESH]))?;
    let post = posterior_update(prior, &train.dataset, gen.noise_var)?;
    let mut source = PredictiveSource::new(
        &post,
        settings.mode,
        settings.samples,
        rng.substream(&[KEY_ENSEMBLE]),
    )?;
    let mut covered = 0usize;
    for i in 0..fresh.dataset.len() {
        let pred = source.predictive(&fresh.dataset.input(i))?;
        match central_interval(&pred, settings.alpha) {
            Ok(iv) => covered += usize::from(iv.contains(fresh.dataset.outputs()[i])),
            Err(Error::Saturated { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    Ok(Some(covered as f64 / settings.inner_reps as f64))
}

/// Average coverage `Q(π₀)`.
pub fn estimate_q(prior: &PriorSpec, gen: &GeneratorSpec, settings: &QualitySettings, rng: &RngStream) -> Result<QualityEstimate> {
    conditional_coverages(prior, gen, settings, rng)?.average()
}

/// Worst-case coverage `Q'(π₀)` over the sampled training sets.
pub fn estimate_q_worst(prior: &PriorSpec, gen: &GeneratorSpec, settings: &QualitySettings, rng: &RngStream) -> Result<QualityEstimate> {
    conditional_coverages(prior, gen, settings, rng)?.worst()
}

/// Probabilistic coverage `Q''(π₀)`.
pub fn estimate_q_prob(prior: &PriorSpec, gen: &GeneratorSpec, settings: &QualitySettings, rng: &RngStream) -> Result<QualityEstimate> {
    conditional_coverages(prior, gen, settings, rng)?.probabilistic(settings.threshold())
}

/// Dispatch on [`QualityKind`].
pub fn estimate(
    kind: QualityKind,
    prior: &PriorSpec,
    gen: &GeneratorSpec,
    settings: &QualitySettings,
    rng: &RngStream,
) -> Result<QualityEstimate> {
    let draws = conditional_coverages(prior, gen, settings, rng)?;
    match kind {
        QualityKind::Average => draws.average(),
        QualityKind::Worst => draws.worst(),
        QualityKind::Probabilistic => draws.probabilistic(settings.threshold()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blr::{EmpiricalPredictive, GaussianPredictive};

    fn small_generator(beta: BetaSource) -> GeneratorSpec {
        GeneratorSpec::new(beta, 1.0, 10, None).unwrap()
    }

    #[test]
    fn central_interval_standard_normal() {
        let p = Predictive::Analytic(GaussianPredictive::standard());
        let iv = central_interval(&p, 0.1).unwrap();
        assert!((iv.upper - 1.6448536).abs() < 1e-7);
        assert_eq!(iv.lower, -iv.upper);
        let narrow = central_interval(&p, 1.0 - 1e-9).unwrap();
        assert!(narrow.width() < 1e-8);
        let wide = central_interval(&p, 1e-12).unwrap();
        assert!(wide.lower < -7.0 && wide.upper > 7.0);
        assert!(central_interval(&p, 1.0).is_err());
    }

    #[test]
    fn central_interval_saturates_on_small_sample_sets() {
        let e = EmpiricalPredictive::from_samples((0..10).map(f64::from).collect()).unwrap();
        assert!(matches!(
            central_interval(&Predictive::Empirical(e), 0.1),
            Err(Error::Saturated { .. })
        ));
    }

    #[test]
    fn zero_missing_coefficient_reproduces_well_specified_data() {
        let beta = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let plain = GeneratorSpec::new(BetaSource::Fixed(beta.clone()), 4.0, 30, None).unwrap();
        let hidden = GeneratorSpec::new(BetaSource::Fixed(beta.clone()), 4.0, 30, Some(0.0)).unwrap();
        let a = plain.draw_dataset(&beta, 30, &mut RngStream::new(3, 3)).unwrap();
        let b = hidden.draw_dataset(&beta, 30, &mut RngStream::new(3, 3)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert!(b.hidden.is_some());
    }

    #[test]
    fn noiseless_limit_is_exactly_linear() {
        let beta = DVector::from_vec(vec![1.0, 2.0]);
        let gen = GeneratorSpec::new(BetaSource::Fixed(beta.clone()), 1e-300, 5, None).unwrap();
        let data = gen.draw_dataset(&beta, 20, &mut RngStream::new(1, 1)).unwrap().dataset;
        let fitted = data.inputs() * &beta;
        assert!((fitted - data.outputs()).amax() < 1e-140);
        assert!(data.inputs().column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn worst_not_above_average_and_single_rep_coincide() {
        let prior = PriorSpec::isotropic(3, 2.0, 1.0).unwrap();
        let gen = small_generator(BetaSource::Fixed(DVector::zeros(3)));
        let rng = RngStream::new(11, 0);
        let settings = QualitySettings::analytic(0.1, 20, 200);
        let avg = estimate_q(&prior, &gen, &settings, &rng).unwrap();
        let worst = estimate_q_worst(&prior, &gen, &settings, &rng).unwrap();
        assert!(worst.value <= avg.value);
        let one = QualitySettings::analytic(0.1, 1, 200);
        assert_eq!(
            estimate_q(&prior, &gen, &one, &rng).unwrap().value,
            estimate_q_worst(&prior, &gen, &one, &rng).unwrap().value
        );
    }

    #[test]
    fn zero_threshold_gives_full_probability() {
        let prior = PriorSpec::isotropic(3, 5.0, 1.0).unwrap();
        let gen = small_generator(BetaSource::Fixed(DVector::zeros(3)));
        let settings = QualitySettings { threshold: Some(0.0), ..QualitySettings::analytic(1.0 - 1e-9, 10, 50) };
        let q = estimate_q_prob(&prior, &gen, &settings, &RngStream::new(0, 0)).unwrap();
        assert_eq!(q.value, 1.0);
    }

    #[test]
    fn tiny_alpha_covers_everything() {
        let prior = PriorSpec::isotropic(3, 0.0, 1.0).unwrap();
        let gen = small_generator(BetaSource::Fixed(DVector::zeros(3)));
        let settings = QualitySettings::analytic(1e-12, 10, 100);
        let q = estimate_q(&prior, &gen, &settings, &RngStream::new(2, 0)).unwrap();
        assert_eq!(q.value, 1.0);
    }

    #[test]
    fn probabilistic_is_an_indicator_when_reps_repeat() {
        // A fixed β and one replication: the estimate is 0 or 1.
        let prior = PriorSpec::isotropic(3, 0.0, 1.0).unwrap();
        let gen = small_generator(BetaSource::Fixed(DVector::from_vec(vec![0.1, 0.2, 0.3])));
        let settings = QualitySettings::analytic(0.1, 1, 100);
        let q = estimate_q_prob(&prior, &gen, &settings, &RngStream::new(4, 4)).unwrap();
        assert!(q.value == 0.0 || q.value == 1.0);
    }

    #[test]
    fn saturated_replications_are_counted() {
        let prior = PriorSpec::isotropic(3, 0.0, 1.0).unwrap();
        let gen = small_generator(BetaSource::Fixed(DVector::zeros(3)));
        let settings = QualitySettings {
            mode: PredictiveMode::Sampling,
            samples: 10,
            ..QualitySettings::analytic(0.1, 4, 5)
        };
        let draws = conditional_coverages(&prior, &gen, &settings, &RngStream::new(0, 0)).unwrap();
        assert_eq!(draws.saturated(), 4);
        assert!(matches!(draws.average(), Err(Error::Saturated { .. })));
    }

    #[test]
    fn rejects_bad_settings() {
        let prior = PriorSpec::isotropic(2, 0.0, 1.0).unwrap();
        let gen = small_generator(BetaSource::Fixed(DVector::zeros(3)));
        let rng = RngStream::new(0, 0);
        let settings = QualitySettings::analytic(0.1, 2, 2);
        assert!(matches!(estimate_q(&prior, &gen, &settings, &rng), Err(Error::Shape(_))));
        let bad = QualitySettings::analytic(0.1, 0, 2);
        let prior3 = PriorSpec::isotropic(3, 0.0, 1.0).unwrap();
        assert!(matches!(estimate_q(&prior3, &gen, &bad, &rng), Err(Error::Domain(_))));
        assert!(GeneratorSpec::new(BetaSource::Fixed(DVector::zeros(3)), 0.0, 1, None).is_err());
    }
}
