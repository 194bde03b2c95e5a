//! Maximum likelihood fitting and the fit result document.

use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::inference::likelihood::{EvalLevel, Evaluation, Likelihood};
use crate::inference::newton::{maximize, NewtonOptions, Point};
use crate::linalg::Cholesky;
use crate::model::data::SurveillanceCounts;
use crate::model::layout::{Layout, ParamRole, ParameterVector, Transform};
use crate::model::spec::{Component, InterceptKind, ModelSpec};
use crate::scalar::Scalar;
use crate::special::normal_quantile;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

/// Optimizer settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub score_tol: f64,
    pub rel_tol: f64,
    pub max_halvings: usize,
    /// Largest change of any parameter in one iteration (estimation scale);
    /// longer Newton steps are shortened along their direction.
    pub max_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            score_tol: 1e-5,
            rel_tol: 1e-8,
            max_halvings: 40,
            max_step: 1.0,
        }
    }
}

impl FitOptions {
    pub(crate) fn newton<F: Scalar>(&self) -> NewtonOptions<F> {
        NewtonOptions {
            max_iter: self.max_iter,
            grad_tol: F::lit(self.score_tol),
            rel_tol: F::lit(self.rel_tol),
            max_halvings: self.max_halvings,
            max_step: Some(F::lit(self.max_step)),
            lower: None,
            upper: None,
        }
    }
}

/// Which matrix the covariance was obtained from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    ObservedInformation,
    ExpectedInformation,
    /// Neither information matrix was invertible; entries are NaN.
    Unavailable,
}

/// Outcome of a (penalized) maximum likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<F> {
    pub spec: ModelSpec<F>,
    pub theta_hat: ParameterVector<F>,
    /// Positions (in the packed vector) of the parameters the covariance covers.
    pub free: Vec<usize>,
    /// Covariance on the estimation scale.
    pub covariance: Array2<F>,
    pub covariance_source: CovarianceSource,
    pub loglik: F,
    /// Only for fixed-effects fits.
    pub aic: Option<F>,
    pub penalized_loglik: Option<F>,
    pub marginal_loglik: Option<F>,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_score_norm: F,
    /// A variance estimate sits on its lower bound.
    pub boundary: bool,
}

/// One row of the parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate<F> {
    pub name: String,
    /// On the estimation scale (log for transformed parameters).
    pub estimate: F,
    pub se: Option<F>,
    pub transformed: bool,
}

impl<F: Scalar> FitResult<F> {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Standard error on the estimation scale; `None` for parameters that
    /// were held fixed or when the covariance is unavailable.
    pub fn std_error(&self, name: &str) -> Result<Option<F>> {
        let k = self.theta_hat.layout.index_of(name)?;
        Ok(self.free.iter().position(|&f| f == k).and_then(|pos| {
            let v = self.covariance[[pos, pos]];
            (v >= F::zero() && v.is_finite()).then(|| v.sqrt())
        }))
    }

    pub fn parameter_table(&self) -> Vec<ParameterEstimate<F>> {
        let layout = &self.theta_hat.layout;
        layout
            .params
            .iter()
            .enumerate()
            .map(|(k, info)| ParameterEstimate {
                name: info.name.clone(),
                estimate: self.theta_hat.values[k],
                se: self.std_error(&info.name).ok().flatten(),
                transformed: info.transform == Transform::Log,
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FitDocument::from_fit(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<FitDocument<F>>(s)?.into_fit()
    }
}

/// Wald interval at `level`. Log-scale parameters get `exp(log θ ± z se)`.
pub fn wald_ci<F: Scalar>(fit: &FitResult<F>, name: &str, level: f64) -> Result<(F, F)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    let k = fit.theta_hat.layout.index_of(name)?;
    let se = fit
        .std_error(name)?
        .ok_or_else(|| Error::Numerical(format!("no standard error for {name}")))?;
    let z = F::lit(normal_quantile(0.5 + level / 2.0));
    let est = fit.theta_hat.values[k];
    let (lo, hi) = (est - z * se, est + z * se);
    Ok(match fit.theta_hat.layout.params[k].transform {
        Transform::Identity => (lo, hi),
        Transform::Log => (lo.exp(), hi.exp()),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConvergenceBlock<F> {
    converged: bool,
    iterations: usize,
    final_score_norm: F,
    boundary: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct FitDocument<F> {
    parameters: Vec<ParameterEstimate<F>>,
    loglik: F,
    aic: Option<F>,
    penalized_loglik: Option<F>,
    marginal_loglik: Option<F>,
    n_obs: usize,
    convergence: ConvergenceBlock<F>,
    free: Vec<String>,
    covariance_source: CovarianceSource,
    /// Row-major; `null` marks unavailable entries.
    covariance: Vec<Vec<Option<F>>>,
    layout: Layout,
    spec: ModelSpec<F>,
}

impl<F: Scalar> FitDocument<F> {
    fn from_fit(fit: &FitResult<F>) -> Self {
        let names = fit.theta_hat.layout.names();
        Self {
            parameters: fit.parameter_table(),
            loglik: fit.loglik,
            aic: fit.aic,
            penalized_loglik: fit.penalized_loglik,
            marginal_loglik: fit.marginal_loglik,
            n_obs: fit.n_obs,
            convergence: ConvergenceBlock {
                converged: fit.converged,
                iterations: fit.iterations,
                final_score_norm: fit.final_score_norm,
                boundary: fit.boundary,
            },
            free: fit.free.iter().map(|&k| names[k].clone()).collect(),
            covariance_source: fit.covariance_source,
            covariance: fit
                .covariance
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|v| v.is_finite().then_some(*v)).collect())
                .collect(),
            layout: fit.theta_hat.layout.clone(),
            spec: fit.spec.clone(),
        }
    }

    fn into_fit(self) -> Result<FitResult<F>> {
        let named: Vec<(String, F)> = self
            .parameters
            .iter()
            .map(|p| (p.name.clone(), p.estimate))
            .collect();
        let theta_hat = ParameterVector::from_named(self.layout, &named)?;
        let free = self
            .free
            .iter()
            .map(|n| theta_hat.layout.index_of(n))
            .collect::<Result<Vec<_>>>()?;
        let m = free.len();
        if self.covariance.len() != m || self.covariance.iter().any(|r| r.len() != m) {
            return Err(Error::invalid(
                "covariance dimension does not match the free parameters",
            ));
        }
        let covariance = Array2::from_shape_fn((m, m), |(a, b)| {
            self.covariance[a][b].unwrap_or_else(F::nan)
        });
        Ok(FitResult {
            spec: self.spec,
            theta_hat,
            free,
            covariance,
            covariance_source: self.covariance_source,
            loglik: self.loglik,
            aic: self.aic,
            penalized_loglik: self.penalized_loglik,
            marginal_loglik: self.marginal_loglik,
            n_obs: self.n_obs,
            converged: self.convergence.converged,
            iterations: self.convergence.iterations,
            final_score_norm: self.convergence.final_score_norm,
            boundary: self.convergence.boundary,
        })
    }
}

/// Starting values: endemic intercept(s) from the endemic-only Poisson fit,
/// `ψ = 0.1`, unit weight parameters, everything else 0.
pub fn default_init<F: Scalar>(
    spec: &ModelSpec<F>,
    data: &SurveillanceCounts<F>,
) -> Result<ParameterVector<F>> {
    let layout = Layout::new(spec, data.region_ids(), data.trend_centre());
    let mut theta = ParameterVector::zeros(layout);
    let n = data.n_regions();
    let rate = |regions: &mut dyn Iterator<Item = usize>| -> Result<F> {
        let (mut y, mut e) = (F::zero(), F::zero());
        for i in regions {
            for t in 2..=data.n_times() {
                y += F::from_count(data.count(i, t));
                e += data.offset(i, t)?;
            }
        }
        // an all-zero panel still needs a finite start
        Ok((y.max(F::lit(0.5)) / e).ln())
    };
    let lay = theta.layout.component(Component::Endemic).clone();
    match spec.endemic.intercept {
        InterceptKind::PerRegionFixed => {
            let idx = lay
                .region
                .as_ref()
                .expect("per-region layout")
                .indices
                .clone();
            for (i, k) in idx.into_iter().enumerate() {
                theta.values[k] = rate(&mut std::iter::once(i))?;
            }
        }
        _ => {
            let k = lay.columns[0];
            theta.values[k] = rate(&mut (0..n))?;
        }
    }
    if let Some(k) = theta.layout.log_psi {
        theta.values[k] = F::lit(0.1).ln();
    }
    Ok(theta)
}

pub(crate) fn point_from<F: Scalar>(ev: Evaluation<F>, free: &[usize], full: bool) -> Point<F> {
    if !full {
        return Point {
            value: ev.loglik,
            grad: Array1::zeros(0),
            info: Array2::zeros((0, 0)),
            fallback_info: None,
            finite: ev.finite,
        };
    }
    let m = free.len();
    Point {
        value: ev.loglik,
        grad: Array1::from_shape_fn(m, |a| ev.score[free[a]]),
        info: Array2::from_shape_fn((m, m), |(a, b)| ev.observed_info[[free[a], free[b]]]),
        fallback_info: Some(Array2::from_shape_fn((m, m), |(a, b)| {
            ev.expected_info[[free[a], free[b]]]
        })),
        finite: ev.finite,
    }
}

/// Covariance from the observed information, falling back to the expected one.
pub(crate) fn covariance_of<F: Scalar>(
    observed: &Array2<F>,
    expected: Option<&Array2<F>>,
) -> (Array2<F>, CovarianceSource) {
    if let Some(ch) = Cholesky::new(observed) {
        return (ch.inverse(), CovarianceSource::ObservedInformation);
    }
    if let Some(ch) = expected.and_then(Cholesky::new) {
        return (ch.inverse(), CovarianceSource::ExpectedInformation);
    }
    let m = observed.nrows();
    (
        Array2::from_elem((m, m), F::nan()),
        CovarianceSource::Unavailable,
    )
}

/// Maximum likelihood fit over all fixed effects, `log ψ` and the weight
/// parameters. Region effects of random-intercept components stay at their
/// initial values (0 by default).
pub fn fit<F: Scalar>(
    spec: &ModelSpec<F>,
    data: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
    init: Option<&ParameterVector<F>>,
    options: &FitOptions,
) -> Result<FitResult<F>> {
    spec.validate(data, graph)?;
    if data.n_times() < 3 {
        return Err(Error::invalid(
            "fitting requires at least three time points",
        ));
    }
    let start = match init {
        Some(theta) => {
            let expected = Layout::new(spec, data.region_ids(), data.trend_centre());
            if theta.layout != expected {
                return Err(Error::invalid(
                    "initial parameter layout does not match the model",
                ));
            }
            theta.clone()
        }
        None => default_init(spec, data)?,
    };
    let layout = start.layout.clone();
    let lik = Likelihood::new(spec, &layout, data, graph)?;
    let free = layout.fixed_effect_indices();
    let base = start.values.clone();
    let expand = |x: &Array1<F>| {
        let mut v = base.clone();
        for (a, &k) in free.iter().enumerate() {
            v[k] = x[a];
        }
        v
    };
    let x0 = Array1::from_shape_fn(free.len(), |a| base[free[a]]);
    let outcome = maximize(
        |x, full| {
            let level = if full {
                EvalLevel::Information
            } else {
                EvalLevel::LoglikOnly
            };
            Ok(point_from(lik.evaluate(&expand(x), level)?, &free, full))
        },
        x0,
        &options.newton(),
    )?;
    let (covariance, covariance_source) =
        covariance_of(&outcome.point.info, outcome.point.fallback_info.as_ref());
    let theta_hat = ParameterVector::from_values(layout.clone(), expand(&outcome.x))?;
    let loglik = outcome.point.value;
    let k = F::from_index(free.len());
    let has_random = theta_hat
        .layout
        .params
        .iter()
        .any(|p| matches!(p.role, ParamRole::RandomEffect(_)));
    Ok(FitResult {
        spec: spec.clone(),
        theta_hat,
        free,
        covariance,
        covariance_source,
        loglik,
        aic: (!has_random).then(|| F::lit(-2.0) * loglik + F::lit(2.0) * k),
        penalized_loglik: None,
        marginal_loglik: None,
        n_obs: lik.n_obs(),
        converged: outcome.converged,
        iterations: outcome.iterations,
        final_score_norm: outcome.grad_norm,
        boundary: false,
    })
}
