//! Rolling one-step-ahead predictive distributions.

use crate::error::{Error, Result};
use crate::forecast::scores::PredictiveDistribution;
use crate::graph::RegionGraph;
use crate::inference::fit::{fit, FitOptions, FitResult};
use crate::model::data::SurveillanceCounts;
use crate::model::mean::conditional_mean;
use crate::model::spec::ModelSpec;
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Predictive distribution with the status of the fit it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneStepForecast<F> {
    pub dist: PredictiveDistribution<F>,
    /// False when the fit on `1..t-1` did not converge.
    pub fit_converged: bool,
}

fn predict_from<F: Scalar>(
    fitted: &FitResult<F>,
    data: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
    t: usize,
) -> Result<Vec<OneStepForecast<F>>> {
    let mu = conditional_mean(&fitted.spec, &fitted.theta_hat, data, graph, t)?;
    let psi = fitted.theta_hat.psi();
    mu.iter()
        .enumerate()
        .map(|(i, &m)| {
            Ok(OneStepForecast {
                dist: PredictiveDistribution::new(fitted.spec.family, m, psi, i, t)?,
                fit_converged: fitted.converged,
            })
        })
        .collect()
}

/// Predictions for `t = t_start..=t_end` and every region, ordered by
/// (time, region).
///
/// Without `refit` all predictions use the fit on `1..t_start-1`. With
/// `refit` the model is refitted on `1..t-1` for each `t`; the refits run
/// in parallel, each starting from the fit on `1..t_start-1`.
pub fn one_step_ahead<F: Scalar>(
    spec: &ModelSpec<F>,
    data: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
    t_start: usize,
    t_end: usize,
    refit: bool,
    options: &FitOptions,
) -> Result<Vec<OneStepForecast<F>>> {
    if t_start > t_end || t_end > data.n_times() {
        return Err(Error::invalid(format!(
            "forecast range {t_start}..={t_end} must lie within 1..={}",
            data.n_times()
        )));
    }
    if t_start < 4 {
        return Err(Error::invalid(
            "the first forecast needs a fit on at least three earlier time points (t_start >= 4)",
        ));
    }
    let initial = fit(spec, &data.head(t_start - 1)?, graph, None, options)?;
    let per_time: Vec<Vec<OneStepForecast<F>>> = if refit {
        (t_start..=t_end)
            .into_par_iter()
            .map(|t| {
                if t == t_start {
                    return predict_from(&initial, data, graph, t);
                }
                let refitted = fit(
                    spec,
                    &data.head(t - 1)?,
                    graph,
                    Some(&initial.theta_hat),
                    options,
                )?;
                predict_from(&refitted, data, graph, t)
            })
            .collect::<Result<_>>()?
    } else {
        (t_start..=t_end)
            .map(|t| predict_from(&initial, data, graph, t))
            .collect::<Result<_>>()?
    };
    Ok(per_time.into_iter().flatten().collect())
}
