//! Split weighted conformal calibration of quantile-regression intervals.
//!
//! The pipeline is: score every calibration point against the naive
//! `[lo, hi]` intervals, turn the density ratio between the test and
//! calibration context distributions into a weighted empirical distribution
//! over the scores (plus an atom at `+inf` for the test point), read off the
//! correction quantile and widen the naive intervals by it.
//!
//! Three set constructors are exposed:
//! - [`ccke_prediction_set`]: weighted calibration (covariate-shift aware).
//! - [`nccke_prediction_set`]: the same pipeline with uniform weights.
//! - [`cke_prediction_set`]: the naive intervals, uncalibrated.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

/// Absolute slack when comparing a cumulative probability mass against the
/// quantile threshold. Masses are sums of up to a few thousand normalized
/// weights, so accumulated roundoff stays well below this.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("length mismatch: expected {expected} KPIs, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("an interval set needs at least one KPI")]
    NoKpis,
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("non-finite calibration score at index {index}")]
    NonFiniteScore { index: usize },
    #[error("invalid weight {value} at index {index}: weights must be finite and nonnegative")]
    InvalidWeight { index: usize, value: f64 },
    #[error(
        "degenerate selection policy: every weight is zero, the target app is never selected under any observed context"
    )]
    DegeneratePolicy,
    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("alpha = {alpha} is below the minimum feasible level 1/(N_cal+1) = {min_alpha} for N_cal = {n_cal}")]
    AlphaBelowMinimum { alpha: f64, min_alpha: f64, n_cal: usize },
    #[error("probabilities must be nonnegative and sum to 1 (sum = {sum})")]
    NotNormalized { sum: f64 },
}

pub type Result<T> = std::result::Result<T, ConformalError>;

/// Per-KPI lower and upper quantile estimates for one context.
///
/// `lo[k] > hi[k]` (quantile crossing) is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl IntervalSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(ConformalError::NoKpis);
        }
        if lo.len() != hi.len() {
            return Err(ConformalError::LengthMismatch {
                expected: lo.len(),
                actual: hi.len(),
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn kpi_count(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }
}

/// Nonconformity score: the largest signed violation of any KPI interval.
///
/// Positive iff at least one `y[k]` falls outside `[lo[k], hi[k]]`.
pub fn compute_score(intervals: &IntervalSet, y: &[f64]) -> Result<f64> {
    if y.len() != intervals.kpi_count() {
        return Err(ConformalError::LengthMismatch {
            expected: intervals.kpi_count(),
            actual: y.len(),
        });
    }
    Ok(intervals
        .lo
        .iter()
        .zip(&intervals.hi)
        .zip(y)
        .map(|((&lo, &hi), &y)| (lo - y).max(y - hi))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Calibration scores together with the contexts they were computed at.
#[derive(Debug, Clone)]
pub struct CalibrationScores<C> {
    scores: Vec<f64>,
    contexts: Vec<C>,
}

impl<C> CalibrationScores<C> {
    pub fn new(scores: Vec<f64>, contexts: Vec<C>) -> Result<Self> {
        if scores.is_empty() {
            return Err(ConformalError::EmptyCalibration);
        }
        if scores.len() != contexts.len() {
            return Err(ConformalError::LengthMismatch {
                expected: scores.len(),
                actual: contexts.len(),
            });
        }
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(ConformalError::NonFiniteScore { index });
        }
        Ok(Self { scores, contexts })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn contexts(&self) -> &[C] {
        &self.contexts
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Normalized probabilities `p_n(x)` of the calibration atoms and `p_inf(x)`
/// of the test-point atom at `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProbabilities {
    pub point_probs: Vec<f64>,
    pub infinity_prob: f64,
}

impl WeightProbabilities {
    /// Uniform weights: every atom, including `+inf`, gets `1/(n_cal+1)`.
    pub fn uniform(n_cal: usize) -> Result<Self> {
        if n_cal == 0 {
            return Err(ConformalError::EmptyCalibration);
        }
        let p = 1.0 / (n_cal as f64 + 1.0);
        Ok(Self {
            point_probs: vec![p; n_cal],
            infinity_prob: p,
        })
    }
}

/// Normalizes density-ratio weights `w(x_n)` and `w(x)` into atom probabilities.
pub fn compute_weight_probabilities<C, W>(
    weight_fn: W,
    cal_contexts: &[C],
    test_context: &C,
) -> Result<WeightProbabilities>
where
    W: Fn(&C) -> f64,
{
    if cal_contexts.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    let check = |index: usize, w: f64| {
        if w.is_finite() && w >= 0.0 {
            Ok(w)
        } else {
            Err(ConformalError::InvalidWeight { index, value: w })
        }
    };
    let cal = cal_contexts
        .iter()
        .enumerate()
        .map(|(i, c)| check(i, weight_fn(c)))
        .collect::<Result<Vec<_>>>()?;
    let test = check(cal_contexts.len(), weight_fn(test_context))?;
    let total = cal.iter().sum::<f64>() + test;
    if total <= 0.0 {
        return Err(ConformalError::DegeneratePolicy);
    }
    Ok(WeightProbabilities {
        point_probs: cal.iter().map(|w| w / total).collect(),
        infinity_prob: test / total,
    })
}

/// Same as [`compute_weight_probabilities`] but from natural-log weights.
///
/// Selection policies with small temperatures produce density ratios like
/// `exp(±1e4)` that overflow; normalizing in the log domain keeps the
/// probabilities exact up to roundoff. `-inf` encodes a zero weight.
pub fn compute_log_weight_probabilities<C, W>(
    log_weight_fn: W,
    cal_contexts: &[C],
    test_context: &C,
) -> Result<WeightProbabilities>
where
    W: Fn(&C) -> f64,
{
    if cal_contexts.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    let check = |index: usize, lw: f64| {
        if lw.is_nan() || lw == f64::INFINITY {
            Err(ConformalError::InvalidWeight { index, value: lw.exp() })
        } else {
            Ok(lw)
        }
    };
    let cal = cal_contexts
        .iter()
        .enumerate()
        .map(|(i, c)| check(i, log_weight_fn(c)))
        .collect::<Result<Vec<_>>>()?;
    let test = check(cal_contexts.len(), log_weight_fn(test_context))?;
    let max = cal.iter().copied().fold(test, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(ConformalError::DegeneratePolicy);
    }
    let cal: Vec<f64> = cal.iter().map(|lw| (lw - max).exp()).collect();
    let test = (test - max).exp();
    let total = cal.iter().sum::<f64>() + test;
    Ok(WeightProbabilities {
        point_probs: cal.iter().map(|w| w / total).collect(),
        infinity_prob: test / total,
    })
}

/// Calibration scores with their atom probabilities, plus the atom at `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedScoreDistribution {
    scores: Vec<f64>,
    point_probs: Vec<f64>,
    infinity_prob: f64,
}

impl WeightedScoreDistribution {
    pub fn new(scores: Vec<f64>, probs: WeightProbabilities) -> Result<Self> {
        if scores.is_empty() {
            return Err(ConformalError::EmptyCalibration);
        }
        if scores.len() != probs.point_probs.len() {
            return Err(ConformalError::LengthMismatch {
                expected: scores.len(),
                actual: probs.point_probs.len(),
            });
        }
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(ConformalError::NonFiniteScore { index });
        }
        let sum = probs.point_probs.iter().sum::<f64>() + probs.infinity_prob;
        let negative = probs
            .point_probs
            .iter()
            .chain(std::iter::once(&probs.infinity_prob))
            .any(|&p| !(p >= 0.0));
        if negative || (sum - 1.0).abs() > 1e-9 {
            return Err(ConformalError::NotNormalized { sum });
        }
        Ok(Self {
            scores,
            point_probs: probs.point_probs,
            infinity_prob: probs.infinity_prob,
        })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn point_probs(&self) -> &[f64] {
        &self.point_probs
    }

    pub fn infinity_prob(&self) -> f64 {
        self.infinity_prob
    }

    pub fn n_cal(&self) -> usize {
        self.scores.len()
    }
}

/// The correction term added to both ends of every naive interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrectionQuantile {
    Finite(f64),
    Infinite,
}

impl CorrectionQuantile {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Self::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Self::Finite(v) => Some(v),
            Self::Infinite => None,
        }
    }

    /// `+inf` for the infinite case.
    pub fn as_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for CorrectionQuantile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(v) => write!(f, "{v}"),
            Self::Infinite => f.write_str("inf"),
        }
    }
}

/// Cumulative-mass level the correction quantile must reach:
/// `(1 - alpha)(N_cal + 1) / N_cal`.
pub fn quantile_threshold(alpha: f64, n_cal: usize) -> f64 {
    let n = n_cal as f64;
    (1.0 - alpha) * (n + 1.0) / n
}

pub fn check_alpha(alpha: f64, n_cal: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConformalError::AlphaOutOfRange(alpha));
    }
    if n_cal == 0 {
        return Err(ConformalError::EmptyCalibration);
    }
    let min_alpha = 1.0 / (n_cal as f64 + 1.0);
    if alpha * (n_cal as f64 + 1.0) < 1.0 - MASS_TOLERANCE {
        return Err(ConformalError::AlphaBelowMinimum {
            alpha,
            min_alpha,
            n_cal,
        });
    }
    Ok(())
}

/// Smallest `s` in `scores ∪ {+inf}` whose cumulative weighted mass reaches
/// [`quantile_threshold`]. The atom at `+inf` always counts at `s = +inf`.
pub fn weighted_quantile(dist: &WeightedScoreDistribution, alpha: f64) -> Result<CorrectionQuantile> {
    check_alpha(alpha, dist.n_cal())?;
    let threshold = quantile_threshold(alpha, dist.n_cal());
    let mut order: Vec<usize> = (0..dist.n_cal()).collect();
    order.sort_by(|&a, &b| {
        dist.scores[a]
            .partial_cmp(&dist.scores[b])
            .unwrap_or(Ordering::Equal)
    });
    let mut mass = 0.0;
    let mut i = 0;
    while i < order.len() {
        // Equal scores share their cumulative mass.
        let s = dist.scores[order[i]];
        while i < order.len() && dist.scores[order[i]] == s {
            mass += dist.point_probs[order[i]];
            i += 1;
        }
        if mass >= threshold - MASS_TOLERANCE {
            return Ok(CorrectionQuantile::Finite(s));
        }
    }
    Ok(CorrectionQuantile::Infinite)
}

/// One KPI's calibrated interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KpiInterval {
    Closed { lo: f64, hi: f64 },
    Empty,
}

impl KpiInterval {
    fn from_bounds(lo: f64, hi: f64) -> Self {
        if hi < lo {
            Self::Empty
        } else {
            Self::Closed { lo, hi }
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        match *self {
            Self::Closed { lo, hi } => lo <= y && y <= hi,
            Self::Empty => false,
        }
    }

    pub fn width(&self) -> f64 {
        match *self {
            Self::Closed { lo, hi } => hi - lo,
            Self::Empty => 0.0,
        }
    }

    /// Width of the intersection with `[domain_lo, domain_hi]`.
    pub fn clipped_width(&self, domain_lo: f64, domain_hi: f64) -> f64 {
        match *self {
            Self::Closed { lo, hi } => (hi.min(domain_hi) - lo.max(domain_lo)).max(0.0),
            Self::Empty => 0.0,
        }
    }
}

/// Labels of the app whose KPIs are predicted (`target`) and the app that
/// actually ran on the test context (`actual`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppPair {
    pub target: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetBounds {
    Bounded(Vec<KpiInterval>),
    Unbounded { kpi_count: usize },
}

/// Calibrated prediction set over all KPIs of one test context.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    bounds: SetBounds,
    correction: CorrectionQuantile,
    apps: Option<AppPair>,
}

impl PredictionSet {
    /// Widens every naive interval by `correction` on both sides.
    pub fn widen(intervals: &IntervalSet, correction: CorrectionQuantile) -> Self {
        let bounds = match correction {
            CorrectionQuantile::Infinite => SetBounds::Unbounded {
                kpi_count: intervals.kpi_count(),
            },
            CorrectionQuantile::Finite(q) => SetBounds::Bounded(
                intervals
                    .lo
                    .iter()
                    .zip(&intervals.hi)
                    .map(|(&lo, &hi)| KpiInterval::from_bounds(lo - q, hi + q))
                    .collect(),
            ),
        };
        Self {
            bounds,
            correction,
            apps: None,
        }
    }

    pub fn with_apps(mut self, target: impl Into<String>, actual: impl Into<String>) -> Self {
        self.apps = Some(AppPair {
            target: target.into(),
            actual: actual.into(),
        });
        self
    }

    pub fn bounds(&self) -> &SetBounds {
        &self.bounds
    }

    pub fn intervals(&self) -> Option<&[KpiInterval]> {
        match &self.bounds {
            SetBounds::Bounded(v) => Some(v),
            SetBounds::Unbounded { .. } => None,
        }
    }

    pub fn correction(&self) -> CorrectionQuantile {
        self.correction
    }

    pub fn apps(&self) -> Option<&AppPair> {
        self.apps.as_ref()
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self.bounds, SetBounds::Unbounded { .. })
    }

    pub fn kpi_count(&self) -> usize {
        match &self.bounds {
            SetBounds::Bounded(v) => v.len(),
            SetBounds::Unbounded { kpi_count } => *kpi_count,
        }
    }

    /// True iff every KPI of `y` lies in its interval.
    pub fn covers(&self, y: &[f64]) -> Result<bool> {
        if y.len() != self.kpi_count() {
            return Err(ConformalError::LengthMismatch {
                expected: self.kpi_count(),
                actual: y.len(),
            });
        }
        Ok(match &self.bounds {
            SetBounds::Unbounded { .. } => true,
            SetBounds::Bounded(v) => v.iter().zip(y).all(|(iv, &y)| iv.contains(y)),
        })
    }

    /// Per-KPI widths; `None` for an unbounded set.
    pub fn widths(&self) -> Option<Vec<f64>> {
        self.intervals()
            .map(|v| v.iter().map(KpiInterval::width).collect())
    }

    /// Per-KPI widths after intersecting with the KPI domain; an unbounded
    /// set spans the whole domain.
    pub fn clipped_widths(&self, domain_lo: f64, domain_hi: f64) -> Vec<f64> {
        match &self.bounds {
            SetBounds::Bounded(v) => v
                .iter()
                .map(|iv| iv.clipped_width(domain_lo, domain_hi))
                .collect(),
            SetBounds::Unbounded { kpi_count } => vec![(domain_hi - domain_lo).max(0.0); *kpi_count],
        }
    }
}

fn check_same_model<C>(intervals: &IntervalSet, cal: &CalibrationScores<C>) -> Result<()> {
    if cal.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    if intervals.kpi_count() == 0 {
        return Err(ConformalError::NoKpis);
    }
    Ok(())
}

/// Weighted-calibrated prediction set. `weight_fn` is the density ratio
/// `p(a|x) / p(a'|x)` of the actual over the target app.
pub fn ccke_prediction_set<C, W>(
    model_intervals: &IntervalSet,
    cal: &CalibrationScores<C>,
    weight_fn: W,
    test_context: &C,
    alpha: f64,
) -> Result<PredictionSet>
where
    W: Fn(&C) -> f64,
{
    check_same_model(model_intervals, cal)?;
    let probs = compute_weight_probabilities(weight_fn, cal.contexts(), test_context)?;
    calibrated_set(model_intervals, cal, probs, alpha)
}

/// [`ccke_prediction_set`] with a log-domain density ratio.
pub fn ccke_prediction_set_log<C, W>(
    model_intervals: &IntervalSet,
    cal: &CalibrationScores<C>,
    log_weight_fn: W,
    test_context: &C,
    alpha: f64,
) -> Result<PredictionSet>
where
    W: Fn(&C) -> f64,
{
    check_same_model(model_intervals, cal)?;
    let probs = compute_log_weight_probabilities(log_weight_fn, cal.contexts(), test_context)?;
    calibrated_set(model_intervals, cal, probs, alpha)
}

/// Calibration that ignores covariate shift: all atoms weigh `1/(N_cal+1)`.
pub fn nccke_prediction_set<C>(
    model_intervals: &IntervalSet,
    cal: &CalibrationScores<C>,
    alpha: f64,
) -> Result<PredictionSet> {
    check_same_model(model_intervals, cal)?;
    let probs = WeightProbabilities::uniform(cal.len())?;
    calibrated_set(model_intervals, cal, probs, alpha)
}

/// Uncalibrated naive intervals (correction recorded as zero).
pub fn cke_prediction_set(model_intervals: &IntervalSet) -> PredictionSet {
    PredictionSet::widen(model_intervals, CorrectionQuantile::Finite(0.0))
}

/// Correction quantile for uniform weights; it does not depend on the test
/// context, so callers evaluating many test points compute it once.
pub fn uniform_correction(scores: &[f64], alpha: f64) -> Result<CorrectionQuantile> {
    let probs = WeightProbabilities::uniform(scores.len())?;
    let dist = WeightedScoreDistribution::new(scores.to_vec(), probs)?;
    weighted_quantile(&dist, alpha)
}

fn calibrated_set<C>(
    intervals: &IntervalSet,
    cal: &CalibrationScores<C>,
    probs: WeightProbabilities,
    alpha: f64,
) -> Result<PredictionSet> {
    let dist = WeightedScoreDistribution::new(cal.scores().to_vec(), probs)?;
    let correction = weighted_quantile(&dist, alpha)?;
    Ok(PredictionSet::widen(intervals, correction))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: &[f64], hi: &[f64]) -> IntervalSet {
        IntervalSet::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    #[test]
    fn score_examples() {
        assert_eq!(compute_score(&iv(&[2.0], &[5.0]), &[6.0]).unwrap(), 1.0);
        assert_eq!(compute_score(&iv(&[3.0], &[3.0]), &[3.0]).unwrap(), 0.0);
        assert_eq!(
            compute_score(&iv(&[0.0, 1.0], &[4.0, 3.0]), &[2.0, 2.0]).unwrap(),
            -1.0
        );
    }

    #[test]
    fn score_length_mismatch() {
        let err = compute_score(&iv(&[0.0, 1.0], &[4.0, 3.0]), &[2.0]).unwrap_err();
        assert_eq!(err, ConformalError::LengthMismatch { expected: 2, actual: 1 });
    }

    #[test]
    fn interval_set_rejects_bad_shapes() {
        assert_eq!(IntervalSet::new(vec![], vec![]), Err(ConformalError::NoKpis));
        assert!(IntervalSet::new(vec![1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn weight_probability_examples() {
        let ctx = [0, 1, 2, 3];
        let p = compute_weight_probabilities(|_| 1.0, &ctx, &9).unwrap();
        assert!(p.point_probs.iter().all(|&q| (q - 0.2).abs() < 1e-15));
        assert!((p.infinity_prob - 0.2).abs() < 1e-15);

        let p = compute_weight_probabilities(|&c| if c == 9 { 1.0 } else { 0.0 }, &ctx, &9).unwrap();
        assert_eq!(p.infinity_prob, 1.0);

        let w = [1.0, 3.0];
        let p = compute_weight_probabilities(|&c: &usize| if c < 2 { w[c] } else { 1.0 }, &[0, 1], &2)
            .unwrap();
        assert!((p.point_probs[0] - 0.2).abs() < 1e-15);
        assert!((p.point_probs[1] - 0.6).abs() < 1e-15);
        assert!((p.infinity_prob - 0.2).abs() < 1e-15);
    }

    #[test]
    fn all_zero_weights_is_degenerate() {
        let err = compute_weight_probabilities(|_| 0.0, &[1, 2], &3).unwrap_err();
        assert_eq!(err, ConformalError::DegeneratePolicy);
        let err = compute_log_weight_probabilities(|_| f64::NEG_INFINITY, &[1, 2], &3).unwrap_err();
        assert_eq!(err, ConformalError::DegeneratePolicy);
    }

    #[test]
    fn negative_or_nan_weights_rejected() {
        assert!(matches!(
            compute_weight_probabilities(|_| -1.0, &[1], &2),
            Err(ConformalError::InvalidWeight { .. })
        ));
        assert!(matches!(
            compute_weight_probabilities(|_| f64::NAN, &[1], &2),
            Err(ConformalError::InvalidWeight { .. })
        ));
    }

    #[test]
    fn log_weights_survive_overflow() {
        // exp(1000) overflows; the log-domain path must not.
        let p = compute_log_weight_probabilities(|&c: &i32| if c == 0 { 1000.0 } else { 0.0 }, &[0, 1], &2)
            .unwrap();
        assert_eq!(p.point_probs[0], 1.0);
        assert_eq!(p.point_probs[1], 0.0);
        assert_eq!(p.infinity_prob, 0.0);
    }

    #[test]
    fn log_and_linear_weights_agree() {
        let w = [0.5, 2.0, 0.1];
        let lin = compute_weight_probabilities(|&c: &usize| w[c], &[0, 1], &2).unwrap();
        let log = compute_log_weight_probabilities(|&c: &usize| w[c].ln(), &[0, 1], &2).unwrap();
        for (a, b) in lin.point_probs.iter().zip(&log.point_probs) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((lin.infinity_prob - log.infinity_prob).abs() < 1e-15);
    }

    fn uniform_dist(scores: Vec<f64>) -> WeightedScoreDistribution {
        let n = scores.len();
        WeightedScoreDistribution::new(scores, WeightProbabilities::uniform(n).unwrap()).unwrap()
    }

    #[test]
    fn quantile_uniform_one_to_nine() {
        let d = uniform_dist((1..=9).map(f64::from).collect());
        assert_eq!(weighted_quantile(&d, 0.2).unwrap(), CorrectionQuantile::Finite(9.0));
    }

    #[test]
    fn quantile_all_mass_at_infinity() {
        let d = WeightedScoreDistribution::new(
            vec![3.0],
            WeightProbabilities {
                point_probs: vec![0.0],
                infinity_prob: 1.0,
            },
        )
        .unwrap();
        assert_eq!(weighted_quantile(&d, 0.5).unwrap(), CorrectionQuantile::Infinite);
    }

    #[test]
    fn quantile_single_score_threshold_one() {
        // Threshold (1 - 0.5)(1 + 1)/1 = 1.0 is only reached by the +inf atom.
        let d = WeightedScoreDistribution::new(
            vec![5.0],
            WeightProbabilities {
                point_probs: vec![0.9],
                infinity_prob: 0.1,
            },
        )
        .unwrap();
        assert_eq!(weighted_quantile(&d, 0.5).unwrap(), CorrectionQuantile::Infinite);
    }

    #[test]
    fn quantile_alpha_precondition() {
        let d = uniform_dist(vec![1.0, 2.0, 3.0]);
        let err = weighted_quantile(&d, 0.2).unwrap_err();
        match err {
            ConformalError::AlphaBelowMinimum { min_alpha, n_cal, .. } => {
                assert_eq!(n_cal, 3);
                assert_eq!(min_alpha, 0.25);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("0.25"));
        assert!(weighted_quantile(&d, 0.25).is_ok());
        assert!(matches!(
            weighted_quantile(&d, 1.0),
            Err(ConformalError::AlphaOutOfRange(_))
        ));
    }

    #[test]
    fn ties_share_mass() {
        // Four atoms at 1.0 carry 0.8 together; threshold 0.8 * 5/4 = 1.0 needs +inf.
        let d = uniform_dist(vec![1.0; 4]);
        assert_eq!(weighted_quantile(&d, 0.2).unwrap(), CorrectionQuantile::Infinite);
        let d = uniform_dist(vec![1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        // threshold 0.8 * 10/9 = 0.889; eight ones give 0.8, the two reaches 0.9.
        assert_eq!(weighted_quantile(&d, 0.2).unwrap(), CorrectionQuantile::Finite(2.0));
    }

    #[test]
    fn distribution_rejects_unnormalized() {
        let err = WeightedScoreDistribution::new(
            vec![1.0, 2.0],
            WeightProbabilities {
                point_probs: vec![0.5, 0.5],
                infinity_prob: 0.5,
            },
        )
        .unwrap_err();
        assert!(matches!(err, ConformalError::NotNormalized { .. }));
    }

    #[test]
    fn ccke_widening_examples() {
        let naive = iv(&[2.0], &[5.0]);
        let set = PredictionSet::widen(&naive, CorrectionQuantile::Finite(1.5));
        assert_eq!(set.intervals().unwrap(), &[KpiInterval::Closed { lo: 0.5, hi: 6.5 }]);
        let set = PredictionSet::widen(&naive, CorrectionQuantile::Finite(0.0));
        assert_eq!(set.intervals().unwrap(), &[KpiInterval::Closed { lo: 2.0, hi: 5.0 }]);
        let set = PredictionSet::widen(&naive, CorrectionQuantile::Infinite);
        assert!(set.is_unbounded());
        assert!(set.covers(&[1e300]).unwrap());
    }

    #[test]
    fn ccke_end_to_end_matches_manual_pipeline() {
        let naive = iv(&[2.0], &[5.0]);
        let scores: Vec<f64> = (1..=9).map(f64::from).collect();
        let cal = CalibrationScores::new(scores, (0..9).collect()).unwrap();
        let set = ccke_prediction_set(&naive, &cal, |_| 1.0, &100, 0.2).unwrap();
        assert_eq!(set.correction(), CorrectionQuantile::Finite(9.0));
        assert_eq!(set.intervals().unwrap(), &[KpiInterval::Closed { lo: -7.0, hi: 14.0 }]);
    }

    #[test]
    fn nccke_matches_uniform_example_and_rejects_empty() {
        let naive = iv(&[0.0], &[0.0]);
        let cal = CalibrationScores::new((1..=9).map(f64::from).collect(), vec![(); 9]).unwrap();
        let set = nccke_prediction_set(&naive, &cal, 0.2).unwrap();
        assert_eq!(set.correction(), CorrectionQuantile::Finite(9.0));
        assert_eq!(
            CalibrationScores::<()>::new(vec![], vec![]).unwrap_err(),
            ConformalError::EmptyCalibration
        );
        assert_eq!(uniform_correction(&[], 0.2).unwrap_err(), ConformalError::EmptyCalibration);
    }

    #[test]
    fn cke_examples() {
        let set = cke_prediction_set(&iv(&[2.0], &[5.0]));
        assert_eq!(set.intervals().unwrap(), &[KpiInterval::Closed { lo: 2.0, hi: 5.0 }]);
        assert_eq!(set.correction(), CorrectionQuantile::Finite(0.0));

        let crossed = cke_prediction_set(&iv(&[5.0], &[2.0]));
        assert_eq!(crossed.intervals().unwrap(), &[KpiInterval::Empty]);
        assert_eq!(crossed.widths().unwrap(), vec![0.0]);
        assert!(!crossed.covers(&[3.0]).unwrap());

        let three = cke_prediction_set(&iv(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]));
        assert_eq!(three.intervals().unwrap().len(), 3);
    }

    #[test]
    fn clipped_widths() {
        let set = PredictionSet::widen(&iv(&[-5.0, 2.0], &[3.0, 4.0]), CorrectionQuantile::Finite(1.0));
        assert_eq!(set.clipped_widths(0.0, 4.0), vec![4.0, 3.0]);
        let unb = PredictionSet::widen(&iv(&[0.0], &[1.0]), CorrectionQuantile::Infinite);
        assert_eq!(unb.clipped_widths(1.0, 10.0), vec![9.0]);
        assert_eq!(unb.widths(), None);
    }

    #[test]
    fn apps_are_recorded() {
        let set = cke_prediction_set(&iv(&[0.0], &[1.0])).with_apps("rr", "pfca");
        assert_eq!(set.apps().unwrap().target, "rr");
        assert_eq!(set.apps().unwrap().actual, "pfca");
    }
}
