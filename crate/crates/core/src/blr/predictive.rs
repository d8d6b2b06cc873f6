//! Predictive distributions for a single input: an exact Gaussian, or a sorted
//! sample set standing in for the ensemble integral.

use crate::error::{Error, Result};
use crate::gaussian::normal_quantile;

/// Closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::Domain(format!(
                "interval lower bound {lower} exceeds upper bound {upper}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Endpoints are covered.
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

/// Gaussian predictive `N(mean, variance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPredictive {
    mean: f64,
    variance: f64,
}

impl GaussianPredictive {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::Domain(format!(
                "gaussian predictive needs finite mean and positive variance, got ({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn standard() -> Self {
        Self { mean: 0.0, variance: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// `[m - k·sd, m + k·sd]`.
    pub fn centered_interval(&self, k: f64) -> Interval {
        let half = self.std_dev() * k;
        Interval { lower: self.mean - half, upper: self.mean + half }
    }
}

/// Sorted sample set. The empirical CDF is `F(y) = #{s ≤ y} / S`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPredictive {
    sorted: Vec<f64>,
}

impl EmpiricalPredictive {
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain(format!(
                "empirical predictive needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("empirical predictive has non-finite samples".into()));
        }
        samples.sort_unstable_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Number of samples whose tail mass `level · S` covers, with a small
    /// tolerance so that e.g. `0.05 · 100` counts as 5.
    fn tail_count(&self, level: f64) -> usize {
        tail_count(level, self.sorted.len())
    }

    /// `sup{y : F(y) ≤ level}` taken over the sample set: the k-th smallest
    /// sample with `k = ⌊level · S⌋`.
    pub fn lower_bound(&self, level: f64) -> Result<f64> {
        let k = self.tail_count(level).min(self.sorted.len());
        if k == 0 {
            return Err(self.saturated(level));
        }
        Ok(self.sorted[k - 1])
    }

    /// `inf{y : F(y⁻) ≥ level}` taken over the sample set: the k-th largest
    /// sample with `k = ⌊(1 - level) · S⌋`. Mirrors [`Self::lower_bound`], so
    /// `[lower_bound(q), upper_bound(1 - q)]` drops `⌊qS⌋ - 1` samples per tail.
    pub fn upper_bound(&self, level: f64) -> Result<f64> {
        self.upper_tail(1.0 - level)
    }

    /// Upper endpoint leaving tail mass `mass` above it: the k-th largest sample
    /// with `k = ⌊mass · S⌋`.
    pub fn upper_tail(&self, mass: f64) -> Result<f64> {
        let k = self.tail_count(mass).min(self.sorted.len());
        if k == 0 {
            return Err(self.saturated(mass));
        }
        Ok(self.sorted[self.sorted.len() - k])
    }

    /// Smallest tail probability the sample set can resolve.
    pub fn resolution(&self) -> f64 {
        1.0 / self.sorted.len() as f64
    }

    fn saturated(&self, level: f64) -> Error {
        Error::Saturated { level, samples: self.sorted.len() }
    }
}

fn tail_count(level: f64, len: usize) -> usize {
    let count = (level * len as f64 + 1e-9).floor();
    count.max(0.0) as usize
}

/// Same result as building an [`EmpiricalPredictive`] from `samples` and
/// calling `symmetric_interval(q)` for every `q` in `levels`, but found by
/// selection instead of a full sort. `samples` is reordered.
pub fn empirical_symmetric_intervals(samples: &mut [f64], levels: &[f64]) -> Result<Vec<Interval>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Domain(format!("empirical predictive needs at least 2 samples, got {n}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("empirical predictive has non-finite samples".into()));
    }
    let mut ranks = Vec::with_capacity(2 * levels.len());
    for &q in levels {
        if !(q > 0.0 && q <= 0.5) {
            return Err(Error::Domain(format!("tail level q must lie in (0, 0.5], got {q}")));
        }
        let k = tail_count(q, n).min(n);
        if k == 0 {
            return Err(Error::Saturated { level: q, samples: n });
        }
        ranks.push((k - 1, n - k));
    }
    let mut order: Vec<usize> = ranks.iter().flat_map(|&(a, b)| [a, b]).collect();
    order.sort_unstable();
    order.dedup();
    // After placing index `prev`, everything right of it is >= it, so the next
    // rank can be selected within the remaining suffix.
    let mut start = 0;
    for &idx in &order {
        samples[start..].select_nth_unstable_by(idx - start, f64::total_cmp);
        start = idx + 1;
    }
    ranks.into_iter().map(|(lo, hi)| Interval::new(samples[lo], samples[hi])).collect()
}

/// Predictive distribution of `Y*` at one input.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictive {
    Analytic(GaussianPredictive),
    Empirical(EmpiricalPredictive),
}

impl Predictive {
    /// Smallest resolvable tail probability; zero for the analytic form.
    pub fn resolution(&self) -> f64 {
        match self {
            Predictive::Analytic(_) => 0.0,
            Predictive::Empirical(e) => e.resolution(),
        }
    }

    /// Lower interval endpoint at CDF level `level`.
    pub fn lower_bound(&self, level: f64) -> Result<f64> {
        check_level(level)?;
        match self {
            Predictive::Analytic(g) => Ok(g.mean + g.std_dev() * normal_quantile(level)?),
            Predictive::Empirical(e) => e.lower_bound(level),
        }
    }

    /// Upper interval endpoint at CDF level `level`.
    pub fn upper_bound(&self, level: f64) -> Result<f64> {
        check_level(level)?;
        match self {
            Predictive::Analytic(g) => Ok(g.mean - g.std_dev() * normal_quantile(1.0 - level)?),
            Predictive::Empirical(e) => e.upper_bound(level),
        }
    }

    /// `[lower_bound(q), upper_bound(1 - q)]` for a tail probability `q ∈ (0, 0.5]`.
    pub fn symmetric_interval(&self, q: f64) -> Result<Interval> {
        if !(q > 0.0 && q <= 0.5) {
            return Err(Error::Domain(format!("tail level q must lie in (0, 0.5], got {q}")));
        }
        match self {
            Predictive::Analytic(g) => Ok(g.centered_interval(-normal_quantile(q)?)),
            Predictive::Empirical(e) => Interval::new(e.lower_bound(q)?, e.upper_tail(q)?),
        }
    }

    /// `[lower_bound(q1), upper_bound(q2)]` for CDF levels `q1 ≤ q2`.
    pub fn asymmetric_interval(&self, q1: f64, q2: f64) -> Result<Interval> {
        if !(q1 <= q2) {
            return Err(Error::Domain(format!("need q1 <= q2, got ({q1}, {q2})")));
        }
        let lower = self.lower_bound(q1)?;
        // The analytic bounds use mirrored quantiles, so q1 == q2 can land one
        // ulp apart in the wrong order.
        Interval::new(lower, self.upper_bound(q2)?.max(lower))
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability must lie in (0, 1), got {level}")))
    }
}

/// Quantile of the predictive at probability `p`.
///
/// Analytic: `m* + √v*·Φ⁻¹(p)`. Empirical: the lower construction below the
/// median and the upper construction above it; reports [`Error::Saturated`]
/// when `p < 1/S` or `p > 1 - 1/S`.
pub fn predictive_quantile(pred: &Predictive, p: f64) -> Result<f64> {
    check_level(p)?;
    if p <= 0.5 {
        pred.lower_bound(p)
    } else {
        pred.upper_bound(p)
    }
}
