//! Log-likelihood, analytic score and information matrices.
//!
//! The likelihood conditions on the first period and accumulates
//! `t = 2..=T`. Derivatives are taken with respect to every entry of the
//! packed parameter vector on its estimation scale; penalties for random
//! effects are added by the caller.

use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::model::data::SurveillanceCounts;
use crate::model::family::ln_pmf;
use crate::model::layout::{Layout, ParameterVector};
use crate::model::mean::design_row_centred;
use crate::model::spec::{Component, ModelSpec};
use crate::scalar::Scalar;
use crate::special::{digamma_rising, trigamma_rising};
use crate::weights::weight_derivatives;
use ndarray::{Array1, Array2};
use rayon::prelude::*;

/// How much of the derivative information to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EvalLevel {
    LoglikOnly,
    Score,
    Information,
}

/// Log-likelihood with its derivatives over the full packed vector.
#[derive(Debug, Clone)]
pub struct Evaluation<F> {
    pub loglik: F,
    pub score: Array1<F>,
    /// Negative Hessian.
    pub observed_info: Array2<F>,
    /// Expected (Fisher) information of the mean parameters; the
    /// overdispersion entry is the observed one.
    pub expected_info: Array2<F>,
    /// False when some mean or log-probability overflowed.
    pub finite: bool,
}

/// Times are grouped into chunks that depend only on `T`, so the parallel
/// reduction is independent of the thread count.
const MIN_TIME_CHUNK: usize = 8;
const MAX_CHUNKS: usize = 32;

/// Precomputed design of one likelihood problem.
pub struct Likelihood<'a, F> {
    spec: &'a ModelSpec<F>,
    data: &'a SurveillanceCounts<F>,
    graph: Option<&'a RegionGraph>,
    layout: &'a Layout,
    /// `design[c][(t - 2) * I + i]` is the design row of component `c`.
    design: [Vec<Vec<F>>; 3],
    offsets: Vec<F>,
}

impl<'a, F: Scalar> Likelihood<'a, F> {
    pub fn new(
        spec: &'a ModelSpec<F>,
        layout: &'a Layout,
        data: &'a SurveillanceCounts<F>,
        graph: Option<&'a RegionGraph>,
    ) -> Result<Self> {
        spec.validate(data, graph)?;
        if data.n_times() < 2 {
            return Err(Error::invalid("at least two time points are required"));
        }
        let n = data.n_regions();
        let centre = F::lit(layout.trend_centre);
        let mut design: [Vec<Vec<F>>; 3] = Default::default();
        for c in Component::ALL {
            let comp = spec.component(c);
            if !comp.include {
                continue;
            }
            let mut rows = Vec::with_capacity(n * (data.n_times() - 1));
            for t in 2..=data.n_times() {
                for i in 0..n {
                    rows.push(design_row_centred(comp, data, i, t, centre)?);
                }
            }
            design[c.index()] = rows;
        }
        let mut offsets = Vec::with_capacity(n * (data.n_times() - 1));
        for t in 2..=data.n_times() {
            for i in 0..n {
                offsets.push(data.offset(i, t)?);
            }
        }
        Ok(Self {
            spec,
            data,
            graph,
            layout,
            design,
            offsets,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.data.n_regions() * (self.data.n_times() - 1)
    }

    pub fn layout(&self) -> &Layout {
        self.layout
    }

    pub fn evaluate(&self, values: &[F], level: EvalLevel) -> Result<Evaluation<F>> {
        let p = self.layout.len();
        if values.len() != p {
            return Err(Error::LengthMismatch(values.len(), p));
        }
        let n = self.data.n_regions();
        let n_t = self.data.n_times();
        let deriv_order = match level {
            EvalLevel::LoglikOnly => 0,
            EvalLevel::Score => 1,
            EvalLevel::Information => 2,
        };

        // neighbourhood sums s_it and their weight derivatives
        let weight_idx = &self.layout.weights;
        let q = weight_idx.len();
        let ne = if self.spec.spatiotemporal.include {
            let wparams: Vec<F> = weight_idx.iter().map(|&k| values[k]).collect();
            let graph = self.graph.expect("validated");
            let wd = weight_derivatives(&self.spec.weights, &wparams, graph, deriv_order)?;
            let lagged = |m: &Array2<F>| -> Array2<F> {
                // (W^T Y_lag)[i, t-2]
                let mut out = Array2::<F>::zeros((n, n_t - 1));
                for t in 2..=n_t {
                    for i in 0..n {
                        let mut s = F::zero();
                        for j in 0..n {
                            let w = m[[j, i]];
                            if w != F::zero() {
                                s += w * F::from_count(self.data.count(j, t - 1));
                            }
                        }
                        out[[i, t - 2]] = s;
                    }
                }
                out
            };
            let s0 = lagged(&wd.matrix);
            let s1: Vec<Array2<F>> = wd.grad.iter().map(lagged).collect();
            let s2: Vec<Vec<Array2<F>>> = wd
                .hess
                .iter()
                .map(|row| row.iter().map(lagged).collect())
                .collect();
            Some((s0, s1, s2))
        } else {
            None
        };

        let psi = self.layout.log_psi.map_or(F::zero(), |k| values[k].exp());
        let family = self.spec.family;
        let poisson = family.is_poisson(psi);

        let chunk = MIN_TIME_CHUNK.max((n_t - 1).div_ceil(MAX_CHUNKS));
        let chunks: Vec<(usize, usize)> = (2..=n_t)
            .step_by(chunk)
            .map(|start| (start, (start + chunk - 1).min(n_t)))
            .collect();

        let partials: Vec<Evaluation<F>> = chunks
            .par_iter()
            .map(|&(t0, t1)| {
                let mut acc = Evaluation {
                    loglik: F::zero(),
                    score: Array1::zeros(if level >= EvalLevel::Score { p } else { 0 }),
                    observed_info: Array2::zeros(if level >= EvalLevel::Information {
                        (p, p)
                    } else {
                        (0, 0)
                    }),
                    expected_info: Array2::zeros(if level >= EvalLevel::Information {
                        (p, p)
                    } else {
                        (0, 0)
                    }),
                    finite: true,
                };
                let mut grad: Vec<(usize, F)> = Vec::with_capacity(p);
                // per-component term lists (index, x)
                let mut terms: [Vec<(usize, F)>; 3] = Default::default();
                for t in t0..=t1 {
                    for i in 0..n {
                        let obs = (t - 2) * n + i;
                        let y = self.data.count(i, t);
                        let ylag = F::from_count(self.data.count(i, t - 1));
                        let mut mu = F::zero();
                        let mut contrib = [F::zero(); 3];
                        let mut rates = [F::zero(); 3];
                        for c in Component::ALL {
                            terms[c.index()].clear();
                            if !self.spec.component(c).include {
                                continue;
                            }
                            let lay = self.layout.component(c);
                            let row = &self.design[c.index()][obs];
                            let mut eta = F::zero();
                            for (&x, &k) in row.iter().zip(&lay.columns) {
                                eta += x * values[k];
                                terms[c.index()].push((k, x));
                            }
                            if let Some(region) = &lay.region {
                                let k = region.indices[i];
                                eta += values[k];
                                terms[c.index()].push((k, F::one()));
                            }
                            let multiplier = match c {
                                Component::Endemic => self.offsets[obs],
                                Component::Autoregressive => ylag,
                                Component::Spatiotemporal => ne.as_ref().unwrap().0[[i, t - 2]],
                            };
                            rates[c.index()] = eta.exp();
                            let m = rates[c.index()] * multiplier;
                            contrib[c.index()] = m;
                            mu += m;
                        }
                        let ll = ln_pmf(family, y, mu, psi);
                        if !ll.is_finite() || !mu.is_finite() {
                            acc.finite = false;
                            acc.loglik = F::neg_infinity();
                            continue;
                        }
                        acc.loglik += ll;
                        if level == EvalLevel::LoglikOnly {
                            continue;
                        }

                        // gradient of mu
                        grad.clear();
                        for c in Component::ALL {
                            let m = contrib[c.index()];
                            for &(k, x) in &terms[c.index()] {
                                grad.push((k, m * x));
                            }
                        }
                        let phi_ne = rates[Component::Spatiotemporal.index()];
                        if let Some((_, s1, _)) = &ne {
                            for a in 0..q {
                                grad.push((weight_idx[a], phi_ne * s1[a][[i, t - 2]]));
                            }
                        }

                        let yf = F::from_count(y);
                        // y / mu and y / mu^2 vanish for y = 0, also at mu = 0
                        let (ym, ym2) = if y == 0 {
                            (F::zero(), F::zero())
                        } else {
                            (yf / mu, yf / (mu * mu))
                        };
                        let (d1, d2, r) = if poisson {
                            (ym - F::one(), -ym2, F::infinity())
                        } else {
                            let r = psi.recip();
                            let rm = r + mu;
                            (ym - (r + yf) / rm, -ym2 + (r + yf) / (rm * rm), r)
                        };
                        for &(k, g) in &grad {
                            acc.score[k] += d1 * g;
                        }
                        // overdispersion
                        let psi_terms = self.layout.log_psi.map(|kpsi| {
                            if poisson {
                                (kpsi, F::zero(), F::zero(), F::zero())
                            } else {
                                let rm = r + mu;
                                let l_r = digamma_rising(y, r) - (mu / r).ln_1p() + (mu - yf) / rm;
                                let l_rr = trigamma_rising(y, r) + r.recip()
                                    - rm.recip()
                                    - (mu - yf) / (rm * rm);
                                let l_k = -r * l_r;
                                let l_kk = r * r * l_rr + r * l_r;
                                let l_mk = -r * (yf - mu) / (rm * rm);
                                (kpsi, l_k, l_kk, l_mk)
                            }
                        });
                        if let Some((kpsi, l_k, _, _)) = psi_terms {
                            acc.score[kpsi] += l_k;
                        }
                        if level < EvalLevel::Information {
                            continue;
                        }

                        let fisher_w = if mu == F::zero() {
                            F::zero()
                        } else if poisson {
                            mu.recip()
                        } else {
                            r / (mu * (r + mu))
                        };
                        for &(k, gk) in &grad {
                            for &(l, gl) in &grad {
                                acc.observed_info[[k, l]] -= d2 * gk * gl;
                                acc.expected_info[[k, l]] += fisher_w * gk * gl;
                            }
                        }
                        // second derivatives of mu within each component
                        for c in Component::ALL {
                            let m = contrib[c.index()];
                            if m == F::zero() {
                                continue;
                            }
                            let tl = &terms[c.index()];
                            for &(k, xk) in tl {
                                for &(l, xl) in tl {
                                    acc.observed_info[[k, l]] -= d1 * m * xk * xl;
                                }
                            }
                        }
                        if let Some((_, s1, s2)) = &ne {
                            let tl = &terms[Component::Spatiotemporal.index()];
                            for a in 0..q {
                                let ka = weight_idx[a];
                                let ds = phi_ne * s1[a][[i, t - 2]];
                                for &(k, x) in tl {
                                    acc.observed_info[[k, ka]] -= d1 * ds * x;
                                    acc.observed_info[[ka, k]] -= d1 * ds * x;
                                }
                                for b in 0..q {
                                    acc.observed_info[[ka, weight_idx[b]]] -=
                                        d1 * phi_ne * s2[a][b][[i, t - 2]];
                                }
                            }
                        }
                        if let Some((kpsi, _, l_kk, l_mk)) = psi_terms {
                            acc.observed_info[[kpsi, kpsi]] -= l_kk;
                            acc.expected_info[[kpsi, kpsi]] -= l_kk;
                            for &(k, g) in &grad {
                                acc.observed_info[[k, kpsi]] -= l_mk * g;
                                acc.observed_info[[kpsi, k]] -= l_mk * g;
                            }
                        }
                    }
                }
                acc
            })
            .collect();

        let mut total = Evaluation {
            loglik: F::zero(),
            score: Array1::zeros(p),
            observed_info: Array2::zeros((p, p)),
            expected_info: Array2::zeros((p, p)),
            finite: true,
        };
        for part in partials {
            total.loglik += part.loglik;
            total.finite &= part.finite;
            if level >= EvalLevel::Score {
                total.score += &part.score;
            }
            if level >= EvalLevel::Information {
                total.observed_info += &part.observed_info;
                total.expected_info += &part.expected_info;
            }
        }
        if !total.finite {
            total.loglik = F::neg_infinity();
        }
        Ok(total)
    }
}

/// Log-likelihood, score and observed information at `theta`.
pub fn loglik_score_info<F: Scalar>(
    spec: &ModelSpec<F>,
    theta: &ParameterVector<F>,
    data: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
) -> Result<Evaluation<F>> {
    let lik = Likelihood::new(spec, &theta.layout, data, graph)?;
    lik.evaluate(&theta.values, EvalLevel::Information)
}

/// Plain log-likelihood at `theta`.
pub fn loglik<F: Scalar>(
    spec: &ModelSpec<F>,
    theta: &ParameterVector<F>,
    data: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
) -> Result<F> {
    let lik = Likelihood::new(spec, &theta.layout, data, graph)?;
    Ok(lik.evaluate(&theta.values, EvalLevel::LoglikOnly)?.loglik)
}
