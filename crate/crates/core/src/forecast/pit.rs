//! Nonrandomized probability integral transform histogram for counts.

use crate::error::{Error, Result};
use crate::forecast::scores::PredictiveDistribution;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitHistogram<F> {
    /// `J + 1` equally spaced edges from 0 to 1.
    pub edges: Vec<F>,
    /// Density heights; a calibrated forecaster gives 1 in every bin.
    pub heights: Vec<F>,
    pub n_used: usize,
    /// Targets observed where the predictive distribution has no mass.
    pub n_skipped: usize,
}

/// Averages the conditional PIT distribution
/// `F̄(u) = clamp((u − P(Y ≤ y−1)) / P(Y = y), 0, 1)` over targets and
/// differences it over `bins` equal bins.
pub fn pit_histogram<F: Scalar>(
    predictions: &[PredictiveDistribution<F>],
    observations: &[u64],
    bins: usize,
) -> Result<PitHistogram<F>> {
    if predictions.len() != observations.len() {
        return Err(Error::LengthMismatch(predictions.len(), observations.len()));
    }
    if bins < 2 {
        return Err(Error::invalid("a PIT histogram needs at least two bins"));
    }
    let j = F::from_index(bins);
    let edges: Vec<F> = (0..=bins).map(|b| F::from_index(b) / j).collect();
    let mut cum = vec![F::zero(); bins + 1];
    let (mut used, mut skipped) = (0usize, 0usize);
    for (p, &y) in predictions.iter().zip(observations) {
        let upper = p.cdf(y);
        let lower = if y == 0 { F::zero() } else { p.cdf(y - 1) };
        let mass = upper - lower;
        if !(mass > F::zero()) {
            skipped += 1;
            continue;
        }
        used += 1;
        for (acc, &u) in cum.iter_mut().zip(&edges) {
            *acc += ((u - lower) / mass).max(F::zero()).min(F::one());
        }
    }
    if used == 0 {
        return Err(Error::Numerical(
            "every observation has zero predictive probability".into(),
        ));
    }
    let n = F::from_index(used);
    let heights = (0..bins).map(|b| j * (cum[b + 1] - cum[b]) / n).collect();
    Ok(PitHistogram {
        edges,
        heights,
        n_used: used,
        n_skipped: skipped,
    })
}
