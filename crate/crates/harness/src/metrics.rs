//! Empirical coverage and normalized inefficiency of a batch of prediction sets.

use ccke_core::conformal::PredictionSet;

use crate::error::{HarnessError, Result};

/// Fraction of samples whose every KPI lies inside its interval.
pub fn evaluate_coverage(sets: &[PredictionSet], truths: &[Vec<f64>]) -> Result<f64> {
    if sets.len() != truths.len() {
        return Err(HarnessError::LengthMismatch {
            what: "truths",
            expected: sets.len(),
            actual: truths.len(),
        });
    }
    if sets.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut covered = 0usize;
    for (set, y) in sets.iter().zip(truths) {
        if set.covers(y)? {
            covered += 1;
        }
    }
    Ok(covered as f64 / sets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inefficiency {
    /// Mean over bounded sets only; NaN when every set is unbounded.
    pub raw: f64,
    /// Mean over all sets after intersecting each interval with the KPI
    /// domain; unbounded sets span the whole domain.
    pub clipped: f64,
    pub n_unbounded: usize,
}

/// Mean over samples of `(1/K) Σ_k |Γ^k| / ε_n`.
pub fn evaluate_inefficiency(
    sets: &[PredictionSet],
    normalizers: &[f64],
    domains: &[(f64, f64)],
) -> Result<Inefficiency> {
    for (what, len) in [("normalizers", normalizers.len()), ("domains", domains.len())] {
        if len != sets.len() {
            return Err(HarnessError::LengthMismatch {
                what,
                expected: sets.len(),
                actual: len,
            });
        }
    }
    if sets.is_empty() {
        return Err(HarnessError::Empty);
    }
    let (mut raw_sum, mut clipped_sum, mut n_unbounded) = (0.0, 0.0, 0usize);
    for (index, ((set, &eps), &(lo, hi))) in sets.iter().zip(normalizers).zip(domains).enumerate() {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(HarnessError::InvalidNormalizer { index, value: eps });
        }
        let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
        match set.widths() {
            Some(w) => raw_sum += mean(&w) / eps,
            None => n_unbounded += 1,
        }
        clipped_sum += mean(&set.clipped_widths(lo, hi)) / eps;
    }
    let n_bounded = sets.len() - n_unbounded;
    Ok(Inefficiency {
        raw: if n_bounded == 0 { f64::NAN } else { raw_sum / n_bounded as f64 },
        clipped: clipped_sum / sets.len() as f64,
        n_unbounded,
    })
}
