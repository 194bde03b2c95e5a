//! Region-specific random intercepts by penalized likelihood.
//!
//! For fixed variances the fixed effects, `log ψ`, the weight parameters and
//! the region effects `b` maximise `ℓ(θ, b) − ½ Σ b²/σ²`. The variances are
//! chosen by maximising the Laplace approximation
//! `ℓ_pen − ½ Σ_c n_c log σ²_c − ½ log det H_bb`, where `H_bb` is the
//! penalized information of the region effects at the inner optimum.

use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::inference::fit::{covariance_of, default_init, point_from, FitOptions, FitResult};
use crate::inference::likelihood::{EvalLevel, Likelihood};
use crate::inference::newton::{maximize, NewtonOptions, NewtonOutcome, Point};
use crate::linalg::Cholesky;
use crate::model::data::SurveillanceCounts;
use crate::model::layout::{ParamRole, ParameterVector};
use crate::model::spec::{Component, InterceptKind, ModelSpec};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

/// Bounds on `log σ²` during the outer search.
pub const LOG_VARIANCE_BOUNDS: (f64, f64) = (-15.0, 10.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSpec {
    /// Estimate each variance from the approximate marginal likelihood.
    Estimate,
    /// Fixed variances (natural scale), one per listed component.
    Fixed(Vec<f64>),
}

/// Which components carry estimated region effects, with a diagonal
/// covariance (one variance per component).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffectsSpec {
    pub components: Vec<Component>,
    pub variances: VarianceSpec,
}

impl RandomEffectsSpec {
    /// Every per-region-random component of `spec`, variances estimated.
    pub fn from_model<F: Scalar>(spec: &ModelSpec<F>) -> Self {
        Self {
            components: Component::ALL
                .into_iter()
                .filter(|&c| {
                    let comp = spec.component(c);
                    comp.include && comp.intercept == InterceptKind::PerRegionRandom
                })
                .collect(),
            variances: VarianceSpec::Estimate,
        }
    }

    fn validate<F: Scalar>(&self, spec: &ModelSpec<F>) -> Result<()> {
        for (k, c) in self.components.iter().enumerate() {
            let comp = spec.component(*c);
            if !comp.include || comp.intercept != InterceptKind::PerRegionRandom {
                return Err(Error::invalid(format!(
                    "random effects requested for the {} component, which is not per-region-random",
                    c.prefix()
                )));
            }
            if self.components[..k].contains(c) {
                return Err(Error::invalid(format!(
                    "component {} listed twice",
                    c.prefix()
                )));
            }
        }
        if let VarianceSpec::Fixed(v) = &self.variances {
            if v.len() != self.components.len() {
                return Err(Error::LengthMismatch(v.len(), self.components.len()));
            }
            if v.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                return Err(Error::invalid(
                    "fixed variances must be positive and finite",
                ));
            }
        }
        Ok(())
    }
}

struct Inner<F> {
    outcome: NewtonOutcome<F>,
    values: Vec<F>,
    loglik: F,
    penalized: F,
    marginal: F,
}

struct Problem<'a, F> {
    lik: Likelihood<'a, F>,
    /// Inner free indices: fixed effects then region effects.
    free: Vec<usize>,
    /// For each inner free index, the random component it belongs to.
    group: Vec<Option<usize>>,
    group_sizes: Vec<usize>,
    options: NewtonOptions<F>,
}

impl<F: Scalar> Problem<'_, F> {
    fn solve(&self, base: &[F], log_var: &[F]) -> Result<Inner<F>> {
        let precision: Vec<F> = log_var.iter().map(|v| (-*v).exp()).collect();
        let expand = |x: &Array1<F>| {
            let mut v = base.to_vec();
            for (a, &k) in self.free.iter().enumerate() {
                v[k] = x[a];
            }
            v
        };
        let penalize = |x: &Array1<F>, pt: &mut Point<F>, full: bool| {
            for (a, g) in self.group.iter().enumerate() {
                if let Some(g) = g {
                    let p = precision[*g];
                    pt.value -= F::lit(0.5) * p * x[a] * x[a];
                    if full {
                        pt.grad[a] -= p * x[a];
                        pt.info[[a, a]] += p;
                        if let Some(e) = pt.fallback_info.as_mut() {
                            e[[a, a]] += p;
                        }
                    }
                }
            }
        };
        let x0 = Array1::from_shape_fn(self.free.len(), |a| base[self.free[a]]);
        let outcome = maximize(
            |x, full| {
                let level = if full {
                    EvalLevel::Information
                } else {
                    EvalLevel::LoglikOnly
                };
                let mut pt = point_from(self.lik.evaluate(&expand(x), level)?, &self.free, full);
                penalize(x, &mut pt, full);
                Ok(pt)
            },
            x0,
            &self.options,
        )?;
        let values = expand(&outcome.x);
        let penalized = outcome.point.value;
        let mut quad = F::zero();
        for (a, g) in self.group.iter().enumerate() {
            if let Some(g) = g {
                quad += F::lit(0.5) * precision[*g] * outcome.x[a] * outcome.x[a];
            }
        }
        let loglik = penalized + quad;
        // Laplace term over the region-effect block
        let b_pos: Vec<usize> = (0..self.free.len())
            .filter(|&a| self.group[a].is_some())
            .collect();
        let block = |m: &Array2<F>| {
            Array2::from_shape_fn((b_pos.len(), b_pos.len()), |(u, v)| m[[b_pos[u], b_pos[v]]])
        };
        let ln_det = if b_pos.is_empty() {
            F::zero()
        } else {
            Cholesky::new(&block(&outcome.point.info))
                .or_else(|| {
                    outcome
                        .point
                        .fallback_info
                        .as_ref()
                        .and_then(|e| Cholesky::new(&block(e)))
                })
                .map(|ch| ch.ln_det())
                .ok_or_else(|| {
                    Error::Numerical("region-effect information is not positive definite".into())
                })?
        };
        let mut marginal = penalized - F::lit(0.5) * ln_det;
        for (g, &n) in self.group_sizes.iter().enumerate() {
            marginal -= F::lit(0.5) * F::from_index(n) * log_var[g];
        }
        Ok(Inner {
            outcome,
            values,
            loglik,
            penalized,
            marginal,
        })
    }
}

/// Central-difference gradient and negative Hessian of `f` at `x`.
fn fd_point<F: Scalar>(
    f: &mut dyn FnMut(&Array1<F>) -> Result<F>,
    x: &Array1<F>,
    fx: F,
    h: F,
) -> Result<(Array1<F>, Array2<F>)> {
    let m = x.len();
    let mut grad = Array1::zeros(m);
    let mut info = Array2::zeros((m, m));
    let shifted = |x: &Array1<F>, a: usize, da: F, b: usize, db: F| {
        let mut y = x.clone();
        y[a] += da;
        y[b] += db;
        y
    };
    for a in 0..m {
        let fp = f(&shifted(x, a, h, a, F::zero()))?;
        let fm = f(&shifted(x, a, -h, a, F::zero()))?;
        grad[a] = (fp - fm) / (F::lit(2.0) * h);
        info[[a, a]] = -(fp - F::lit(2.0) * fx + fm) / (h * h);
        for b in 0..a {
            let fpp = f(&shifted(x, a, h, b, h))?;
            let fpm = f(&shifted(x, a, h, b, -h))?;
            let fmp = f(&shifted(x, a, -h, b, h))?;
            let fmm = f(&shifted(x, a, -h, b, -h))?;
            let v = -(fpp - fpm - fmp + fmm) / (F::lit(4.0) * h * h);
            info[[a, b]] = v;
            info[[b, a]] = v;
        }
    }
    Ok((grad, info))
}

/// Penalized-likelihood fit with region-specific random intercepts.
///
/// Components marked per-region-random in `spec` but not listed in
/// `re_spec` keep their region effects at 0.
pub fn fit_random_effects<F: Scalar>(
    spec: &ModelSpec<F>,
    data: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
    re_spec: &RandomEffectsSpec,
    options: &FitOptions,
) -> Result<FitResult<F>> {
    spec.validate(data, graph)?;
    re_spec.validate(spec)?;
    if data.n_times() < 3 {
        return Err(Error::invalid(
            "fitting requires at least three time points",
        ));
    }
    let start = default_init(spec, data)?;
    let layout = start.layout.clone();
    let lik = Likelihood::new(spec, &layout, data, graph)?;

    let mut free = layout.fixed_effect_indices();
    let mut group = vec![None; free.len()];
    let mut group_sizes = Vec::new();
    let mut var_index = Vec::new();
    for (g, c) in re_spec.components.iter().enumerate() {
        let comp = layout.component(*c);
        let idx = &comp
            .region
            .as_ref()
            .expect("validated random component")
            .indices;
        free.extend(idx);
        group.extend(std::iter::repeat_n(Some(g), idx.len()));
        group_sizes.push(idx.len());
        var_index.push(comp.log_variance.expect("random component has a variance"));
    }
    let n_inner = free.len();
    let inner_opts = NewtonOptions {
        grad_tol: F::lit(options.score_tol.min(1e-8)),
        rel_tol: F::lit(options.rel_tol.min(1e-12)),
        ..options.newton()
    };
    let problem = Problem {
        lik,
        free,
        group,
        group_sizes,
        options: inner_opts,
    };

    let (lo, hi) = LOG_VARIANCE_BOUNDS;
    let mut base = start.values.clone();
    let (log_var, outer) = match &re_spec.variances {
        VarianceSpec::Fixed(v) => (v.iter().map(|s| F::lit(s.ln())).collect::<Vec<F>>(), None),
        VarianceSpec::Estimate => {
            let m = re_spec.components.len();
            let mut warm = base.clone();
            let mut marginal = |lv: &Array1<F>| -> Result<F> {
                let inner = problem.solve(&warm, lv.as_slice().expect("contiguous"))?;
                if inner.outcome.converged {
                    warm = inner.values;
                }
                Ok(inner.marginal)
            };
            let h = F::lit(1e-3);
            let outer_opts = NewtonOptions {
                grad_tol: F::lit(1e-4),
                rel_tol: F::lit(1e-10),
                lower: Some(Array1::from_elem(m, F::lit(lo))),
                // keep room for the finite-difference stencil
                upper: Some(Array1::from_elem(m, F::lit(hi))),
                ..options.newton()
            };
            let outcome = maximize(
                |x, full| {
                    let value = marginal(x)?;
                    if !full {
                        return Ok(Point {
                            value,
                            grad: Array1::zeros(0),
                            info: Array2::zeros((0, 0)),
                            fallback_info: None,
                            finite: value.is_finite(),
                        });
                    }
                    let (grad, info) = fd_point(&mut marginal, x, value, h)?;
                    Ok(Point {
                        value,
                        grad,
                        info,
                        fallback_info: None,
                        finite: value.is_finite(),
                    })
                },
                Array1::zeros(m),
                &outer_opts,
            )?;
            base = warm;
            (outcome.x.to_vec(), Some(outcome))
        }
    };

    let inner = problem.solve(&base, &log_var)?;
    let mut values = inner.values.clone();
    for (g, &k) in var_index.iter().enumerate() {
        values[k] = log_var[g];
    }
    let theta_hat = ParameterVector::from_values(layout.clone(), values)?;

    let (inner_cov, mut source) = covariance_of(
        &inner.outcome.point.info,
        inner.outcome.point.fallback_info.as_ref(),
    );
    let mut free = problem.free.clone();
    let mut covariance = inner_cov;
    let mut converged = inner.outcome.converged;
    let mut iterations = inner.outcome.iterations;
    let mut score_norm = inner.outcome.grad_norm;
    let mut boundary = false;
    if let Some(outer) = outer {
        // outer block is appended; cross-covariances with the inner block are not estimated
        let m = var_index.len();
        let (outer_cov, outer_source) = covariance_of(&outer.point.info, None);
        if source == crate::inference::fit::CovarianceSource::ObservedInformation {
            source = outer_source;
        }
        let mut full = Array2::from_elem((n_inner + m, n_inner + m), F::zero());
        full.slice_mut(ndarray::s![..n_inner, ..n_inner])
            .assign(&covariance);
        full.slice_mut(ndarray::s![n_inner.., n_inner..])
            .assign(&outer_cov);
        covariance = full;
        free.extend(&var_index);
        converged &= outer.converged;
        iterations += outer.iterations;
        score_norm = score_norm.max(outer.grad_norm);
        boundary = outer.x.iter().any(|v| *v <= F::lit(lo));
        if boundary {
            // a boundary maximum is a legitimate outcome
            converged = inner.outcome.converged;
        }
    }
    debug_assert!(
        theta_hat
            .layout
            .params
            .iter()
            .filter(|p| matches!(p.role, ParamRole::LogVariance(_)))
            .count()
            >= var_index.len()
    );

    Ok(FitResult {
        spec: spec.clone(),
        theta_hat,
        free,
        covariance,
        covariance_source: source,
        loglik: inner.loglik,
        aic: None,
        penalized_loglik: Some(inner.penalized),
        marginal_loglik: Some(inner.marginal),
        n_obs: problem.lik.n_obs(),
        converged,
        iterations,
        final_score_norm: score_norm,
        boundary,
    })
}
