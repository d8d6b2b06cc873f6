//! Bayesian linear regression with a Gaussian prior on the weights and known
//! noise variance.
//!
//! With negative log-likelihood loss and KL regularization toward the prior,
//! the optimal distribution over weights is the ordinary Bayes posterior, which
//! is Gaussian here and available in closed form.

mod predictive;

pub use predictive::{
    empirical_symmetric_intervals, predictive_quantile, EmpiricalPredictive, GaussianPredictive,
    Interval, Predictive,
};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gaussian::{mvn_sample, SpdMatrix};
use crate::rng::RngStream;

/// How predictive distributions are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictiveMode {
    /// Exact Gaussian predictive.
    Analytic,
    /// Sorted samples from a finite posterior ensemble.
    Sampling,
}

impl PredictiveMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictiveMode::Analytic => "analytic",
            PredictiveMode::Sampling => "sampling",
        }
    }
}

impl std::str::FromStr for PredictiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(PredictiveMode::Analytic),
            "sampling" => Ok(PredictiveMode::Sampling),
            other => Err(Error::Config(format!("unknown predictive mode {other:?}"))),
        }
    }
}

/// Source of predictives for one fitted posterior: either exact Gaussians or a
/// fixed ensemble of weight draws plus fresh observation noise per input.
#[derive(Debug)]
#[allow(clippy::large_enum_variant)] // one per study cell
pub enum PredictiveSource<'a> {
    Analytic(&'a PosteriorState),
    Ensemble { ensemble: PosteriorEnsemble, rng: RngStream },
}

impl<'a> PredictiveSource<'a> {
    /// `samples` is only used in sampling mode; ensemble draws come from `rng`.
    pub fn new(
        post: &'a PosteriorState,
        mode: PredictiveMode,
        samples: usize,
        mut rng: RngStream,
    ) -> Result<Self> {
        match mode {
            PredictiveMode::Analytic => Ok(PredictiveSource::Analytic(post)),
            PredictiveMode::Sampling => {
                let ensemble = post.ensemble(samples, &mut rng)?;
                Ok(PredictiveSource::Ensemble { ensemble, rng })
            }
        }
    }

    pub fn predictive(&mut self, x: &DVector<f64>) -> Result<Predictive> {
        match self {
            PredictiveSource::Analytic(post) => Ok(Predictive::Analytic(post.predictive(x)?)),
            PredictiveSource::Ensemble { ensemble, rng } => {
                Ok(Predictive::Empirical(ensemble.predictive(x, rng)?))
            }
        }
    }

    /// `predictive(x)?.symmetric_interval(q)` for each `q` in `levels`,
    /// skipping the full sort of ensemble samples. Consumes the same random
    /// draws as [`Self::predictive`].
    pub fn symmetric_intervals(&mut self, x: &DVector<f64>, levels: &[f64]) -> Result<Vec<Interval>> {
        match self {
            PredictiveSource::Analytic(post) => {
                let pred = Predictive::Analytic(post.predictive(x)?);
                levels.iter().map(|&q| pred.symmetric_interval(q)).collect()
            }
            PredictiveSource::Ensemble { ensemble, rng } => {
                let mut samples = ensemble.raw_samples(x, rng)?;
                empirical_symmetric_intervals(&mut samples, levels)
            }
        }
    }
}

/// Gaussian prior `N(mean, covariance)` over regression weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    mean: DVector<f64>,
    covariance: SpdMatrix,
}

impl PriorSpec {
    pub fn new(mean: DVector<f64>, covariance: SpdMatrix) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return Err(Error::Shape(format!(
                "prior mean has dimension {} but covariance is {1}x{1}",
                mean.len(),
                covariance.dim()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("prior mean has non-finite entries".into()));
        }
        Ok(Self { mean, covariance })
    }

    /// `N(center · 1, scale · I)`.
    pub fn isotropic(dim: usize, center: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Domain(format!("prior scale must be positive, got {scale}")));
        }
        Self::new(DVector::from_element(dim, center), SpdMatrix::scaled_identity(dim, scale)?)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &SpdMatrix {
        &self.covariance
    }
}

/// Inputs (one row per observation) and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    outputs: DVector<f64>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, outputs: DVector<f64>) -> Result<Self> {
        if inputs.nrows() != outputs.len() {
            return Err(Error::Shape(format!(
                "{} input rows but {} outputs",
                inputs.nrows(),
                outputs.len()
            )));
        }
        if inputs.ncols() == 0 {
            return Err(Error::Shape("inputs need at least one column".into()));
        }
        if inputs.iter().chain(outputs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset has non-finite entries".into()));
        }
        Ok(Self { inputs, outputs })
    }

    pub fn empty(dim: usize) -> Self {
        Self { inputs: DMatrix::zeros(0, dim), outputs: DVector::zeros(0) }
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    pub fn input(&self, i: usize) -> DVector<f64> {
        self.inputs.row(i).transpose()
    }

    /// First `k` rows and the remainder.
    pub fn split_at(&self, k: usize) -> (Dataset, Dataset) {
        let k = k.min(self.len());
        let n = self.len();
        let head = Dataset {
            inputs: self.inputs.rows(0, k).into_owned(),
            outputs: self.outputs.rows(0, k).into_owned(),
        };
        let tail = Dataset {
            inputs: self.inputs.rows(k, n - k).into_owned(),
            outputs: self.outputs.rows(k, n - k).into_owned(),
        };
        (head, tail)
    }
}

/// Gaussian posterior over weights with known noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    mean: DVector<f64>,
    covariance: SpdMatrix,
    noise_var: f64,
}

impl PosteriorState {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &SpdMatrix {
        &self.covariance
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The posterior reused as a prior for a further update.
    pub fn as_prior(&self) -> PriorSpec {
        PriorSpec { mean: self.mean.clone(), covariance: self.covariance.clone() }
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "input has dimension {} but the model has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Exact predictive `N(xᵀμₙ, σ² + xᵀΣₙx)`.
    pub fn predictive(&self, x: &DVector<f64>) -> Result<GaussianPredictive> {
        let (m, v) = predictive_analytic(self, x)?;
        GaussianPredictive::new(m, v)
    }

    /// Draws `samples` weight vectors once. The returned ensemble then produces
    /// sample-based predictives at any number of inputs.
    pub fn ensemble(&self, samples: usize, rng: &mut RngStream) -> Result<PosteriorEnsemble> {
        if samples < 2 {
            return Err(Error::Domain(format!("ensemble needs at least 2 members, got {samples}")));
        }
        let draws = mvn_sample(&self.mean, &self.covariance, samples, rng)?;
        Ok(PosteriorEnsemble { draws, noise_sd: self.noise_var.sqrt() })
    }
}

/// Conjugate update `Σₙ = (Σ₀⁻¹ + XᵀX/σ²)⁻¹`, `μₙ = Σₙ(Σ₀⁻¹μ₀ + Xᵀy/σ²)`.
///
/// Both moments come from Cholesky solves on the posterior precision. An
/// empty dataset returns the prior unchanged.
pub fn posterior_update(prior: &PriorSpec, data: &Dataset, noise_var: f64) -> Result<PosteriorState> {
    if !(noise_var > 0.0) || !noise_var.is_finite() {
        return Err(Error::Domain(format!("noise variance must be positive, got {noise_var}")));
    }
    if data.dim() != prior.dim() {
        return Err(Error::Shape(format!(
            "prior has dimension {} but inputs have {} columns",
            prior.dim(),
            data.dim()
        )));
    }
    if data.is_empty() {
        return Ok(PosteriorState {
            mean: prior.mean.clone(),
            covariance: prior.covariance.clone(),
            noise_var,
        });
    }
    let x = data.inputs();
    let prior_precision = prior.covariance.inverse();
    let precision = SpdMatrix::new(&prior_precision + x.transpose() * x / noise_var)?;
    let rhs = prior.covariance.solve_vec(&prior.mean) + x.transpose() * data.outputs() / noise_var;
    let mean = precision.solve_vec(&rhs);
    let covariance = SpdMatrix::new(precision.inverse())?;
    Ok(PosteriorState { mean, covariance, noise_var })
}

/// `(m*, v*) = (xᵀμₙ, σ² + xᵀΣₙx)`.
pub fn predictive_analytic(post: &PosteriorState, x: &DVector<f64>) -> Result<(f64, f64)> {
    post.check_input(x)?;
    let m = x.dot(&post.mean);
    let v = post.noise_var + post.covariance.quadratic_form(x);
    Ok((m, v))
}

/// `s` draws of `xᵀβ + ε` with a fresh `β ~ N(μₙ, Σₙ)` and `ε ~ N(0, σ²)` for
/// each draw, returned sorted.
pub fn predictive_samples(
    post: &PosteriorState,
    x: &DVector<f64>,
    s: usize,
    rng: &mut RngStream,
) -> Result<EmpiricalPredictive> {
    post.check_input(x)?;
    if s < 2 {
        return Err(Error::Domain(format!("need at least 2 predictive samples, got {s}")));
    }
    let betas = mvn_sample(&post.mean, &post.covariance, s, rng)?;
    let noise_sd = post.noise_var.sqrt();
    let samples: Vec<f64> = (betas * x)
        .iter()
        .map(|signal| {
            let eps: f64 = StandardNormal.sample(rng);
            signal + noise_sd * eps
        })
        .collect();
    EmpiricalPredictive::from_samples(samples)
}

/// A finite posterior ensemble: `S` weight vectors drawn once from the posterior.
#[derive(Debug, Clone)]
pub struct PosteriorEnsemble {
    draws: DMatrix<f64>,
    noise_sd: f64,
}

impl PosteriorEnsemble {
    pub fn size(&self) -> usize {
        self.draws.nrows()
    }

    pub fn draws(&self) -> &DMatrix<f64> {
        &self.draws
    }

    /// Sorted samples `xᵀβ⁽ʲ⁾ + ε⁽ʲ⁾`, one per member, with fresh noise.
    pub fn predictive(&self, x: &DVector<f64>, rng: &mut RngStream) -> Result<EmpiricalPredictive> {
        EmpiricalPredictive::from_samples(self.raw_samples(x, rng)?)
    }

    /// The unsorted samples behind [`Self::predictive`].
    pub fn raw_samples(&self, x: &DVector<f64>, rng: &mut RngStream) -> Result<Vec<f64>> {
        if x.len() != self.draws.ncols() {
            return Err(Error::Shape(format!(
                "input has dimension {} but the ensemble has {}",
                x.len(),
                self.draws.ncols()
            )));
        }
        let mut samples = &self.draws * x;
        for v in samples.iter_mut() {
            let eps: f64 = StandardNormal.sample(rng);
            *v += self.noise_sd * eps;
        }
        Ok(samples.data.into())
    }
}
