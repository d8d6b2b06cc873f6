//! Frequentist calibration of ensemble predictive intervals.
//!
//! Each calibration point contributes a 0-1 loss: zero when its label falls in
//! the symmetric predictive interval `[c₁(q), c₂(q)]`, one otherwise. Intervals
//! nest as `q` shrinks, so the empirical risk is monotone in `q` and a walk down
//! a descending grid finds the narrowest admissible interval. The PAC slack is a
//! Hoeffding bound with a union bound over the grid, since `q̂` is selected
//! from the same data.

use crate::blr::{Interval, Predictive};
use crate::error::{Error, Result};
use crate::gaussian::normal_quantile;

pub const DEFAULT_GRID_SIZE: usize = 512;
/// Smallest grid level for analytic predictives.
pub const ANALYTIC_Q_MIN: f64 = 1e-6;
/// Smallest grid level for sample-based predictives (raised to `1/S` if larger).
pub const EMPIRICAL_Q_FLOOR: f64 = 1e-4;
pub const DEFAULT_EPSILON: f64 = 0.05;
/// Levels per axis of the default asymmetric grid.
pub const DEFAULT_PAIR_LEVELS: usize = 64;

/// `[c₁(q), c₂(q)]` with `c₁ = sup{y : F(y) ≤ q}` and `c₂ = inf{y : F(y) ≥ 1 - q}`.
pub fn interval_bounds(pred: &Predictive, q: f64) -> Result<Interval> {
    pred.symmetric_interval(q)
}

/// 0 when `y` lies in the closed interval at level `q`, 1 otherwise.
pub fn loss_01(y: f64, q: f64, pred: &Predictive) -> Result<u8> {
    Ok(u8::from(!interval_bounds(pred, q)?.contains(y)))
}

fn check_alignment(labels: &[f64], predictives: &[Predictive]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Shape("calibration set is empty".into()));
    }
    if labels.len() != predictives.len() {
        return Err(Error::Shape(format!(
            "{} calibration labels but {} predictives",
            labels.len(),
            predictives.len()
        )));
    }
    Ok(())
}

/// Miss count at level `q`. `Φ⁻¹(q)` is computed once and shared by every
/// analytic predictive.
fn count_misses(labels: &[f64], predictives: &[Predictive], q: f64) -> Result<usize> {
    let mut half_width_factor = None;
    let mut misses = 0;
    for (&y, pred) in labels.iter().zip(predictives) {
        let interval = match pred {
            Predictive::Analytic(g) => {
                let k = match half_width_factor {
                    Some(k) => k,
                    None => {
                        if !(q > 0.0 && q <= 0.5) {
                            return Err(Error::Domain(format!(
                                "tail level q must lie in (0, 0.5], got {q}"
                            )));
                        }
                        let k = -normal_quantile(q)?;
                        half_width_factor = Some(k);
                        k
                    }
                };
                g.centered_interval(k)
            }
            Predictive::Empirical(_) => interval_bounds(pred, q)?,
        };
        if !interval.contains(y) {
            misses += 1;
        }
    }
    Ok(misses)
}

/// `(1/m) Σ loss_01` over the calibration set.
pub fn empirical_risk(labels: &[f64], predictives: &[Predictive], q: f64) -> Result<f64> {
    check_alignment(labels, predictives)?;
    Ok(count_misses(labels, predictives, q)? as f64 / labels.len() as f64)
}

/// Descending list of tail levels in `(0, 0.5]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    values: Vec<f64>,
}

impl QuantileGrid {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("quantile grid is empty".into()));
        }
        if let Some(bad) = values.iter().find(|q| !(**q > 0.0 && **q <= 0.5)) {
            return Err(Error::Domain(format!("grid level {bad} is outside (0, 0.5]")));
        }
        if values.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Config("quantile grid must be strictly descending".into()));
        }
        Ok(Self { values })
    }

    /// `size` levels evenly spaced from 0.5 down to `q_min`, both included.
    /// `q_min = 0.5` (e.g. two-sample predictives) collapses to the single level 0.5.
    pub fn linear(q_min: f64, size: usize) -> Result<Self> {
        if !(q_min > 0.0 && q_min <= 0.5) {
            return Err(Error::Domain(format!("grid minimum {q_min} is outside (0, 0.5]")));
        }
        match size {
            0 => Err(Error::Config("quantile grid is empty".into())),
            _ if size == 1 || q_min == 0.5 => Self::from_values(vec![0.5]),
            _ => {
                let step = (0.5 - q_min) / (size - 1) as f64;
                let mut values: Vec<f64> = (0..size).map(|j| 0.5 - step * j as f64).collect();
                values[size - 1] = q_min;
                Self::from_values(values)
            }
        }
    }

    /// Default grid for a set of predictives: floor `1e-6` when all are
    /// analytic, `max(1e-4, 1/S)` otherwise.
    pub fn for_predictives(predictives: &[Predictive], size: usize) -> Result<Self> {
        Self::linear(minimum_level(predictives), size)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Smallest tail level the predictives can resolve under the grid rules.
pub fn minimum_level(predictives: &[Predictive]) -> f64 {
    let coarsest = predictives.iter().map(Predictive::resolution).fold(0.0, f64::max);
    if coarsest > 0.0 {
        coarsest.max(EMPIRICAL_Q_FLOOR)
    } else {
        ANALYTIC_Q_MIN
    }
}

/// High-probability bound `R(q̂) ≤ R̂(q̂) + slack`, holding with probability
/// at least `1 - epsilon` over the calibration draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacBound {
    pub epsilon: f64,
    pub slack: f64,
    pub calib_size: usize,
    pub grid_size: usize,
}

/// `slack = √(ln(2G/ε) / (2m))`: two-sided Hoeffding at each of the `G` grid
/// levels, union-bounded.
pub fn pac_slack(m: usize, grid_size: usize, epsilon: f64) -> Result<PacBound> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if m == 0 || grid_size == 0 {
        return Err(Error::Domain(format!(
            "calibration size and grid size must be positive, got m = {m}, G = {grid_size}"
        )));
    }
    let slack = ((2.0 * grid_size as f64 / epsilon).ln() / (2.0 * m as f64)).sqrt();
    Ok(PacBound { epsilon, slack, calib_size: m, grid_size })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub q_hat: f64,
    pub empirical_risk: f64,
    pub alpha: f64,
    /// Levels evaluated, in walk order.
    pub grid: Vec<f64>,
    /// No resolvable level reached `risk ≤ alpha`; `q_hat` is the smallest
    /// resolvable level instead.
    pub saturated: bool,
    pub pac: PacBound,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// Largest grid level whose empirical risk is at most `alpha`.
///
/// Walks the grid from its widest level (0.5) toward narrower tail levels and
/// stops at the first admissible one. When the walk runs out of grid, or
/// reaches levels a sample-based predictive cannot resolve, the smallest
/// resolvable level is returned with `saturated = true`.
pub fn calibrate_q(
    labels: &[f64],
    predictives: &[Predictive],
    alpha: f64,
    grid: &QuantileGrid,
    epsilon: f64,
) -> Result<CalibrationResult> {
    check_alignment(labels, predictives)?;
    check_alpha(alpha)?;
    if grid.is_empty() {
        return Err(Error::Config("quantile grid is empty".into()));
    }
    let pac = pac_slack(labels.len(), grid.len(), epsilon)?;
    let m = labels.len() as f64;
    let mut evaluated = Vec::new();
    let mut last = None;
    for &q in grid.values() {
        let risk = match count_misses(labels, predictives, q) {
            Ok(misses) => misses as f64 / m,
            Err(Error::Saturated { .. }) => break,
            Err(e) => return Err(e),
        };
        evaluated.push(q);
        if risk <= alpha {
            return Ok(CalibrationResult {
                q_hat: q,
                empirical_risk: risk,
                alpha,
                grid: evaluated,
                saturated: false,
                pac,
            });
        }
        last = Some((q, risk));
    }
    match last {
        Some((q_hat, empirical_risk)) => Ok(CalibrationResult {
            q_hat,
            empirical_risk,
            alpha,
            grid: evaluated,
            saturated: true,
            pac,
        }),
        None => Err(Error::Saturated {
            level: grid.values()[0],
            samples: (1.0 / minimum_level(predictives)).round() as usize,
        }),
    }
}

/// Pairs of CDF levels `(q₁, q₂)` with `q₁ ≤ q₂`; the interval at a pair is
/// `[lower_bound(q₁), upper_bound(q₂)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrid {
    pairs: Vec<(f64, f64)>,
}

impl PairGrid {
    pub fn from_pairs(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Config("pair grid is empty".into()));
        }
        for &(q1, q2) in &pairs {
            let inside = |q: f64| q > 0.0 && q < 1.0;
            if !inside(q1) || !inside(q2) || q1 > q2 {
                return Err(Error::Domain(format!(
                    "pair ({q1}, {q2}) must satisfy 0 < q1 <= q2 < 1"
                )));
            }
        }
        Ok(Self { pairs })
    }

    /// Triangular grid over levels `k / (levels + 1)`, `k = 1..=levels`.
    pub fn triangular(levels: usize) -> Result<Self> {
        let axis: Vec<f64> = (1..=levels).map(|k| k as f64 / (levels + 1) as f64).collect();
        let mut pairs = Vec::with_capacity(levels * (levels + 1) / 2);
        for (i, &q1) in axis.iter().enumerate() {
            for &q2 in &axis[i..] {
                pairs.push((q1, q2));
            }
        }
        Self::from_pairs(pairs)
    }

    /// Symmetric pairs `(q, 1 - q)` for each level of a one-dimensional grid.
    pub fn symmetric(grid: &QuantileGrid) -> Result<Self> {
        Self::from_pairs(grid.values().iter().map(|&q| (q, 1.0 - q)).collect())
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricCalibration {
    pub q_lower: f64,
    pub q_upper: f64,
    pub empirical_risk: f64,
    pub mean_width: f64,
    pub alpha: f64,
    /// Pairs evaluated; pairs a sample-based predictive cannot resolve are skipped.
    pub evaluated: usize,
    /// No resolvable pair was admissible; the widest evaluated pair is returned.
    pub saturated: bool,
    pub pac: PacBound,
}

/// Admissible pair (`risk ≤ alpha`) with the smallest mean interval width over
/// the calibration set. Ties go to the earliest pair in grid order.
pub fn calibrate_q2(
    labels: &[f64],
    predictives: &[Predictive],
    alpha: f64,
    grid: &PairGrid,
    epsilon: f64,
) -> Result<AsymmetricCalibration> {
    check_alignment(labels, predictives)?;
    check_alpha(alpha)?;
    if grid.is_empty() {
        return Err(Error::Config("pair grid is empty".into()));
    }
    let pac = pac_slack(labels.len(), grid.len(), epsilon)?;
    let m = labels.len() as f64;

    #[derive(Clone, Copy)]
    struct Candidate {
        pair: (f64, f64),
        risk: f64,
        width: f64,
    }
    let mut best: Option<Candidate> = None;
    let mut widest: Option<Candidate> = None;
    let mut evaluated = 0;

    'pairs: for &(q1, q2) in grid.pairs() {
        let mut misses = 0usize;
        let mut width = 0.0;
        for (&y, pred) in labels.iter().zip(predictives) {
            let interval = match pred.asymmetric_interval(q1, q2) {
                Ok(iv) => iv,
                Err(Error::Saturated { .. }) => continue 'pairs,
                Err(e) => return Err(e),
            };
            width += interval.width();
            if !interval.contains(y) {
                misses += 1;
            }
        }
        evaluated += 1;
        let candidate = Candidate { pair: (q1, q2), risk: misses as f64 / m, width: width / m };
        if widest.is_none_or(|w| candidate.width > w.width) {
            widest = Some(candidate);
        }
        if candidate.risk <= alpha && best.is_none_or(|b| candidate.width < b.width) {
            best = Some(candidate);
        }
    }

    let (chosen, saturated) = match (best, widest) {
        (Some(b), _) => (b, false),
        (None, Some(w)) => (w, true),
        (None, None) => {
            return Err(Error::Saturated {
                level: grid.pairs()[0].0,
                samples: (1.0 / minimum_level(predictives)).round() as usize,
            })
        }
    };
    Ok(AsymmetricCalibration {
        q_lower: chosen.pair.0,
        q_upper: chosen.pair.1,
        empirical_risk: chosen.risk,
        mean_width: chosen.width,
        alpha,
        evaluated,
        saturated,
        pac,
    })
}
