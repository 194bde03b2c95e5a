//! Predictive distributions and proper scoring rules for counts.

use crate::error::{Error, Result};
use crate::model::data::SurveillanceCounts;
use crate::model::family::{cdf_count, ln_pmf, pmf, pmf_ratio, upper_tail, Family};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Default truncation error bound of the ranked probability score.
pub const RPS_EPSILON: f64 = 1e-6;

/// One-step-ahead predictive distribution of `Y_it`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution<F> {
    pub family: Family,
    pub mu: F,
    pub psi: F,
    /// Region index.
    pub region: usize,
    /// 1-based time index of the target.
    pub time: usize,
}

impl<F: Scalar> PredictiveDistribution<F> {
    pub fn new(family: Family, mu: F, psi: F, region: usize, time: usize) -> Result<Self> {
        if !(mu > F::zero()) || !mu.is_finite() {
            return Err(Error::invalid(format!(
                "predictive mean must be positive, got {mu}"
            )));
        }
        if !(psi >= F::zero()) || !psi.is_finite() {
            return Err(Error::invalid(format!(
                "overdispersion must be nonnegative, got {psi}"
            )));
        }
        Ok(Self {
            family,
            mu,
            psi,
            region,
            time,
        })
    }

    pub fn variance(&self) -> F {
        self.family.variance(self.mu, self.psi)
    }

    pub fn pmf(&self, y: u64) -> F {
        pmf(self.family, y, self.mu, self.psi)
    }

    pub fn cdf(&self, y: u64) -> F {
        cdf_count(self.family, y, self.mu, self.psi)
    }
}

/// `−log P(Y = y)`.
pub fn log_score<F: Scalar>(p: &PredictiveDistribution<F>, y: u64) -> F {
    -ln_pmf(p.family, y, p.mu, p.psi)
}

/// `(y − μ)²/σ² + log σ²` with the predictive mean and variance.
pub fn dawid_sebastiani_score<F: Scalar>(p: &PredictiveDistribution<F>, y: u64) -> F {
    let v = p.variance();
    let d = F::from_count(y) - p.mu;
    d * d / v + v.ln()
}

/// `Σ_k (P(Y ≤ k) − 1{y ≤ k})²`, truncated so the omitted mass
/// contributes less than `eps`.
///
/// The sum starts at the largest `k_lo ≤ min(y, μ)` with
/// `k_lo · P(Y < k_lo) < eps/100`, skipping summands below it. It stops
/// at the first `K ≥ y` with `(1 − P(Y ≤ K)) · max(μ, 1) < eps/10`, since
/// `Σ_{k>K} (1 − P(Y ≤ k))² ≤ (1 − P(Y ≤ K)) · E[(Y − K)⁺] ≤ (1 − P(Y ≤ K)) μ`.
pub fn ranked_probability_score<F: Scalar>(p: &PredictiveDistribution<F>, y: u64, eps: F) -> F {
    let (family, mu, psi) = (p.family, p.mu, p.psi);
    let small = eps / F::lit(100.0);
    let k_lo = {
        // largest k <= min(y, μ) with k · P(Y <= k - 1) < eps/100; the
        // product is increasing in k, so bisect
        let hi_bound = mu.floor().to_u64().unwrap_or(0).min(y);
        let ok = |k: u64| k == 0 || F::from_count(k) * cdf_count(family, k - 1, mu, psi) < small;
        let (mut lo, mut hi) = (0u64, hi_bound);
        if ok(hi) {
            lo = hi;
        } else {
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if ok(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        lo
    };
    let mut total = F::zero();
    // left of the mean: accumulate the cdf
    let k_mid = mu.floor().to_u64().unwrap_or(0);
    let mut k = k_lo;
    let mut prob = pmf(family, k, mu, psi);
    let mut cum = cdf_count(family, k, mu, psi);
    loop {
        let d = if y <= k { F::one() - cum } else { cum };
        total += d * d;
        if k >= k_mid {
            break;
        }
        k += 1;
        prob *= pmf_ratio(family, k, mu, psi);
        if prob == F::zero() {
            // underflow far left of the mode
            prob = pmf(family, k, mu, psi);
            cum = cdf_count(family, k, mu, psi);
        } else {
            cum += prob;
        }
    }
    // right of the mean: track the upper tail directly
    k += 1;
    let variance = family.variance(mu, psi);
    let second_moment = variance + mu * mu;
    let tail_tol = eps / F::lit(10.0) / mu.max(F::one());
    prob = pmf(family, k, mu, psi);
    let mut tail = upper_tail(family, k, mu, psi);
    loop {
        if k < y {
            // Σ_{j ≥ k} (1 − (1 − tail_j)²) ≤ 2 E[(Y − k)⁺] ≤ 2 √(E[Y²] P(Y > k))
            if F::lit(2.0) * (second_moment * tail).sqrt() < small {
                total += F::from_count(y - k);
                k = y;
                prob = pmf(family, k, mu, psi);
                tail = upper_tail(family, k, mu, psi);
                continue;
            }
            let d = F::one() - tail;
            total += d * d;
        } else {
            total += tail * tail;
            if tail < tail_tol {
                break;
            }
        }
        k += 1;
        prob *= pmf_ratio(family, k, mu, psi);
        if prob == F::zero() {
            if k > y {
                break;
            }
            prob = pmf(family, k, mu, psi);
            tail = upper_tail(family, k, mu, psi);
        } else {
            tail = (tail - prob).max(F::zero());
        }
    }
    total
}

/// Scores of one forecast target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord<F> {
    pub region: usize,
    pub time: usize,
    pub y: u64,
    pub mu: F,
    pub psi: F,
    #[serde(rename = "logS")]
    pub log_s: F,
    #[serde(rename = "RPS")]
    pub rps: F,
    #[serde(rename = "DSS")]
    pub dss: F,
}

/// Per-target scores in (time, region) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable<F> {
    pub records: Vec<ScoreRecord<F>>,
}

/// Mean of each scoring rule over all targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScores<F> {
    #[serde(rename = "logS")]
    pub log_s: F,
    #[serde(rename = "RPS")]
    pub rps: F,
    #[serde(rename = "DSS")]
    pub dss: F,
}

impl<F: Scalar> ScoreTable<F> {
    pub fn score(
        predictions: &[PredictiveDistribution<F>],
        observed: &[u64],
        eps: F,
    ) -> Result<Self> {
        if predictions.len() != observed.len() {
            return Err(Error::LengthMismatch(predictions.len(), observed.len()));
        }
        let records = predictions
            .iter()
            .zip(observed)
            .map(|(p, &y)| ScoreRecord {
                region: p.region,
                time: p.time,
                y,
                mu: p.mu,
                psi: p.psi,
                log_s: log_score(p, y),
                rps: ranked_probability_score(p, y, eps),
                dss: dawid_sebastiani_score(p, y),
            })
            .collect();
        Ok(Self { records })
    }

    /// Scores against the counts stored in `data`.
    pub fn against(
        predictions: &[PredictiveDistribution<F>],
        data: &SurveillanceCounts<F>,
        eps: F,
    ) -> Result<Self> {
        let observed = predictions
            .iter()
            .map(|p| {
                if p.time == 0 || p.time > data.n_times() || p.region >= data.n_regions() {
                    Err(Error::invalid(format!(
                        "no observation for region {} at time {}",
                        p.region, p.time
                    )))
                } else {
                    Ok(data.count(p.region, p.time))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::score(predictions, &observed, eps)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn means(&self) -> MeanScores<F> {
        let n = F::from_index(self.records.len().max(1));
        MeanScores {
            log_s: self.records.iter().map(|r| r.log_s).sum::<F>() / n,
            rps: self.records.iter().map(|r| r.rps).sum::<F>() / n,
            dss: self.records.iter().map(|r| r.dss).sum::<F>() / n,
        }
    }

    pub fn column(&self, rule: ScoringRule) -> Vec<F> {
        self.records
            .iter()
            .map(|r| match rule {
                ScoringRule::Log => r.log_s,
                ScoringRule::Rps => r.rps,
                ScoringRule::Dss => r.dss,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoringRule {
    #[serde(rename = "logS")]
    Log,
    #[serde(rename = "RPS")]
    Rps,
    #[serde(rename = "DSS")]
    Dss,
}
