//! Design rows and the additively decomposed conditional mean
//! `μ_it = ν_it e_it + λ_it Y_{i,t-1} + φ_it Σ_{j≠i} w_ji Y_{j,t-1}`.

use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::model::data::SurveillanceCounts;
use crate::model::layout::{ComponentLayout, ParameterVector};
use crate::model::spec::{Component, ComponentSpec, ModelSpec};
use crate::scalar::Scalar;
use crate::weights::weight_matrix;
use ndarray::{Array1, Array2};

/// Covariate vector `z_it` of one component: intercept, centred trend,
/// interleaved `sin(sωt), cos(sωt)` pairs, then named covariates.
pub fn design_row<F: Scalar>(
    component: &ComponentSpec,
    data: &SurveillanceCounts<F>,
    i: usize,
    t: usize,
) -> Result<Vec<F>> {
    design_row_centred(component, data, i, t, data.trend_centre())
}

pub(crate) fn design_row_centred<F: Scalar>(
    component: &ComponentSpec,
    data: &SurveillanceCounts<F>,
    i: usize,
    t: usize,
    centre: F,
) -> Result<Vec<F>> {
    if t == 0 {
        return Err(Error::invalid("time index is 1-based"));
    }
    let mut row = Vec::with_capacity(component.n_columns());
    if component.has_common_intercept() {
        row.push(F::one());
    }
    let tf = F::from_index(t);
    if component.trend {
        row.push(tf - centre);
    }
    if component.harmonics > 0 {
        let omega = F::lit(2.0) * F::PI() / F::lit(component.period);
        for s in 1..=component.harmonics {
            let arg = F::from_index(s) * omega * tf;
            row.push(arg.sin());
            row.push(arg.cos());
        }
    }
    for name in &component.covariates {
        row.push(data.covariate(name, i, t)?);
    }
    Ok(row)
}

/// Evaluates component rates for fixed parameters.
#[derive(Debug, Clone)]
pub(crate) struct MeanModel<'a, F> {
    pub spec: &'a ModelSpec<F>,
    pub theta: &'a ParameterVector<F>,
    /// `W[[j, i]] = w_ji`, present when the spatio-temporal part is included.
    pub weights: Option<Array2<F>>,
    centre: F,
}

impl<'a, F: Scalar> MeanModel<'a, F> {
    pub fn new(
        spec: &'a ModelSpec<F>,
        theta: &'a ParameterVector<F>,
        graph: Option<&RegionGraph>,
    ) -> Result<Self> {
        let weights = if spec.spatiotemporal.include {
            let graph = graph.ok_or_else(|| {
                Error::invalid("the spatio-temporal component requires a region graph")
            })?;
            Some(weight_matrix(&spec.weights, &theta.weight_params(), graph)?)
        } else {
            None
        };
        Ok(Self {
            spec,
            theta,
            weights,
            centre: F::lit(theta.layout.trend_centre),
        })
    }

    pub fn linear_predictor(
        &self,
        c: Component,
        data: &SurveillanceCounts<F>,
        i: usize,
        t: usize,
    ) -> Result<F> {
        let comp = self.spec.component(c);
        let lay: &ComponentLayout = self.theta.layout.component(c);
        let row = design_row_centred(comp, data, i, t, self.centre)?;
        let v = &self.theta.values;
        let mut eta: F = row.iter().zip(&lay.columns).map(|(&x, &k)| x * v[k]).sum();
        if let Some(region) = &lay.region {
            eta += v[region.indices[i]];
        }
        Ok(eta)
    }

    /// `(ν_it, λ_it, φ_it)`, zero for excluded components.
    pub fn rates(&self, data: &SurveillanceCounts<F>, i: usize, t: usize) -> Result<[F; 3]> {
        let mut out = [F::zero(); 3];
        for c in Component::ALL {
            if self.spec.component(c).include {
                out[c.index()] = self.linear_predictor(c, data, i, t)?.exp();
            }
        }
        Ok(out)
    }

    /// `μ_·t` given the counts at `t - 1`.
    pub fn mean_given_lags(
        &self,
        data: &SurveillanceCounts<F>,
        t: usize,
        lags: &[F],
    ) -> Result<Array1<F>> {
        let n = data.n_regions();
        let mut mu = Array1::<F>::zeros(n);
        for i in 0..n {
            let [nu, lambda, phi] = self.rates(data, i, t)?;
            let mut m = nu * data.offset(i, t)?;
            if self.spec.autoregressive.include {
                m += lambda * lags[i];
            }
            if let Some(w) = &self.weights {
                let s: F = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| w[[j, i]] * lags[j])
                    .sum();
                m += phi * s;
            }
            mu[i] = m;
        }
        Ok(mu)
    }
}

/// Conditional mean `μ_·t` for `2 <= t <= T + 1`.
pub fn conditional_mean<F: Scalar>(
    spec: &ModelSpec<F>,
    theta: &ParameterVector<F>,
    data: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
    t: usize,
) -> Result<Array1<F>> {
    if t < 2 || t > data.n_times() + 1 {
        return Err(Error::LaggedCountsUnavailable(t));
    }
    let model = MeanModel::new(spec, theta, graph)?;
    let lags: Vec<F> = (0..data.n_regions())
        .map(|i| F::from_count(data.count(i, t - 1)))
        .collect();
    model.mean_given_lags(data, t, &lags)
}
