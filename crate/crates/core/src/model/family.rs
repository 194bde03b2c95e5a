//! Count distributions parameterised by mean `μ` and overdispersion `ψ`:
//! negative binomial with variance `μ(1 + ψμ)`, Poisson at `ψ = 0`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::{ln_factorial, ln_rising};
use serde::{Deserialize, Serialize};

/// Below this overdispersion the negative binomial is evaluated as Poisson.
pub const POISSON_PSI_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Poisson,
    /// Negative binomial with one overdispersion shared by all regions.
    #[serde(alias = "negbin", alias = "negbin_shared_psi")]
    NegBin,
}

impl Family {
    /// True when `(family, psi)` behaves as a Poisson distribution.
    pub fn is_poisson<F: Scalar>(self, psi: F) -> bool {
        self == Family::Poisson || psi < F::lit(POISSON_PSI_CUTOFF)
    }

    pub fn variance<F: Scalar>(self, mu: F, psi: F) -> F {
        if self.is_poisson(psi) {
            mu
        } else {
            mu * (F::one() + psi * mu)
        }
    }
}

/// Validated conversion of a signed count.
pub fn checked_count(y: i64) -> Result<u64> {
    u64::try_from(y).map_err(|_| Error::NegativeCount(y))
}

/// Log probability mass; `y` must be nonnegative.
pub fn log_pmf<F: Scalar>(family: Family, y: i64, mu: F, psi: F) -> Result<F> {
    Ok(ln_pmf(family, checked_count(y)?, mu, psi))
}

/// Cumulative distribution `P(Y <= y)`; 0 for negative `y`.
pub fn cdf<F: Scalar>(family: Family, y: i64, mu: F, psi: F) -> F {
    match u64::try_from(y) {
        Ok(y) => cdf_count(family, y, mu, psi),
        Err(_) => F::zero(),
    }
}

pub(crate) fn ln_pmf<F: Scalar>(family: Family, y: u64, mu: F, psi: F) -> F {
    if mu <= F::zero() {
        return if y == 0 { F::zero() } else { F::neg_infinity() };
    }
    let yf = F::from_count(y);
    if family.is_poisson(psi) {
        return yf * mu.ln() - mu - ln_factorial::<F>(y);
    }
    let r = psi.recip();
    ln_rising(y, r) - ln_factorial::<F>(y) - r * (mu / r).ln_1p() + yf * (mu.ln() - (r + mu).ln())
}

pub(crate) fn pmf<F: Scalar>(family: Family, y: u64, mu: F, psi: F) -> F {
    ln_pmf(family, y, mu, psi).exp()
}

/// `P(Y = k) / P(Y = k - 1)` for `k >= 1`.
#[inline]
pub(crate) fn pmf_ratio<F: Scalar>(family: Family, k: u64, mu: F, psi: F) -> F {
    let kf = F::from_count(k);
    if family.is_poisson(psi) {
        mu / kf
    } else {
        let r = psi.recip();
        (kf - F::one() + r) / kf * (mu / (r + mu))
    }
}

const SUM_REL_TOL: f64 = 1e-17;

pub(crate) fn cdf_count<F: Scalar>(family: Family, y: u64, mu: F, psi: F) -> F {
    if mu <= F::zero() {
        return F::one();
    }
    let tol = F::lit(SUM_REL_TOL);
    if F::from_count(y) <= mu {
        // lower tail summed downwards from y
        let mut term = pmf(family, y, mu, psi);
        let mut acc = term;
        let mut k = y;
        while k > 0 {
            term /= pmf_ratio(family, k, mu, psi);
            k -= 1;
            acc += term;
            if term <= acc * tol {
                break;
            }
        }
        acc.min(F::one())
    } else {
        (F::one() - upper_tail(family, y, mu, psi)).max(F::zero())
    }
}

/// `P(Y > k)` summed upwards from `k + 1`; accurate in the right tail.
pub(crate) fn upper_tail<F: Scalar>(family: Family, k: u64, mu: F, psi: F) -> F {
    if mu <= F::zero() {
        return F::zero();
    }
    let tol = F::lit(SUM_REL_TOL);
    let mut j = k + 1;
    let mut term = pmf(family, j, mu, psi);
    let mut acc = term;
    loop {
        j += 1;
        let next = term * pmf_ratio(family, j, mu, psi);
        // left of the mode terms grow; only stop once they shrink
        if next <= acc * tol && next <= term || next == F::zero() {
            break;
        }
        term = next;
        acc += term;
    }
    acc.min(F::one())
}

/// Smallest `K` with `P(Y <= K) >= 1 - eps`.
pub fn support_bound<F: Scalar>(family: Family, mu: F, psi: F, eps: F) -> u64 {
    let target = F::one() - eps;
    let mut k = mu.floor().to_u64().unwrap_or(0);
    let mut c = cdf_count(family, k, mu, psi);
    if c >= target {
        while k > 0 {
            let below = c - pmf(family, k, mu, psi);
            if below < target {
                break;
            }
            c = below;
            k -= 1;
        }
        k
    } else {
        let mut p = pmf(family, k, mu, psi);
        while c < target {
            k += 1;
            p *= pmf_ratio(family, k, mu, psi);
            c += p;
            if p == F::zero() {
                // pmf underflowed before the cdf reached the target
                c = cdf_count(family, k, mu, psi);
                p = pmf(family, k, mu, psi);
            }
        }
        k
    }
}
