//! Forward simulation of the fitted model as a branching process with
//! immigration, with summaries of the simulated paths.

use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::inference::fit::FitResult;
use crate::model::data::SurveillanceCounts;
use crate::model::family::Family;
use crate::model::layout::ParameterVector;
use crate::model::mean::MeanModel;
use crate::model::spec::{Component, ModelSpec};
use crate::scalar::Scalar;
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Simulated counts `paths[[n, i, h]]` for times `t0 + 1 ..= t0 + H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationBundle {
    pub region_ids: Vec<String>,
    pub paths: Array3<u64>,
    /// Counts at `t0` that start every path.
    pub initial: Vec<u64>,
    pub t0: usize,
    pub horizon: usize,
    pub seed: u64,
    /// `final_sizes[n] = Σ_{i,h} paths[[n, i, h]]`.
    pub final_sizes: Vec<u64>,
}

impl SimulationBundle {
    pub fn n_paths(&self) -> usize {
        self.paths.shape()[0]
    }

    pub fn n_regions(&self) -> usize {
        self.paths.shape()[1]
    }
}

/// Means above this are treated as a blown-up (supercritical) process:
/// counts beyond 2^53 are no longer exact in the mean recursion.
pub const MAX_SIMULATED_MEAN: f64 = 1e15;

/// One draw from the count distribution with mean `mu`.
pub fn draw_count<R: Rng + ?Sized>(family: Family, mu: f64, psi: f64, rng: &mut R) -> Result<u64> {
    if mu > MAX_SIMULATED_MEAN {
        return Err(Error::Numerical(format!(
            "simulated mean {mu:e} exceeds {MAX_SIMULATED_MEAN:e}; the process is exploding"
        )));
    }
    if !(mu > 0.0) {
        if mu == 0.0 {
            return Ok(0);
        }
        return Err(Error::Numerical(format!("invalid mean {mu} in simulation")));
    }
    let rate = if family.is_poisson(psi) {
        mu
    } else {
        // gamma-Poisson mixture
        let g = Gamma::new(psi.recip(), psi * mu)
            .map_err(|e| Error::Numerical(format!("gamma draw with mean {mu}: {e}")))?;
        g.sample(rng)
    };
    if rate == 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(rate)
        .map_err(|e| Error::Numerical(format!("Poisson draw with rate {rate}: {e}")))?;
    Ok(p.sample(rng) as u64)
}

/// Per-path generator: one ChaCha stream per path index.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Simulates `n_paths` trajectories of length `horizon` starting from the
/// observed counts at `t0`, using the fitted parameters.
pub fn simulate_paths<F: Scalar>(
    fit: &FitResult<F>,
    data: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
    t0: usize,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<SimulationBundle> {
    simulate_with(
        &fit.spec,
        &fit.theta_hat,
        data,
        graph,
        t0,
        horizon,
        n_paths,
        seed,
    )
}

/// As [`simulate_paths`] for explicit parameter values.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with<F: Scalar>(
    spec: &ModelSpec<F>,
    theta: &ParameterVector<F>,
    data: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
    t0: usize,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<SimulationBundle> {
    if t0 == 0 || t0 > data.n_times() {
        return Err(Error::invalid(format!(
            "simulation start {t0} outside the observed period 1..={}",
            data.n_times()
        )));
    }
    if horizon == 0 || n_paths == 0 {
        return Err(Error::invalid(
            "horizon and number of paths must be at least 1",
        ));
    }
    let n = data.n_regions();
    let model = MeanModel::new(spec, theta, graph)?;

    // rates do not depend on the path: (ν e, λ, φ) per step and region
    let mut rates = Vec::with_capacity(horizon);
    let mut missing: Vec<usize> = Vec::new();
    let mut missing_what = String::new();
    for h in 1..=horizon {
        let t = t0 + h;
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            let r = model
                .rates(data, i, t)
                .and_then(|r| Ok((r, data.offset(i, t)?)));
            match r {
                Ok(([nu, lambda, phi], e)) => {
                    row.push([(nu * e).as_f64(), lambda.as_f64(), phi.as_f64()])
                }
                Err(Error::MissingFutureValues { what, .. }) => {
                    if missing.last() != Some(&t) {
                        missing.push(t);
                    }
                    missing_what = what;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        rates.push(row);
    }
    if !missing.is_empty() {
        return Err(Error::MissingFutureValues {
            what: missing_what,
            times: missing,
        });
    }
    let weights: Option<Array2<f64>> = model.weights.as_ref().map(|w| w.mapv(|v| v.as_f64()));
    let ar = spec.component(Component::Autoregressive).include;
    let family = spec.family;
    let psi = theta.psi().as_f64();
    let initial: Vec<u64> = (0..n).map(|i| data.count(i, t0)).collect();

    let runs: Vec<Vec<u64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| -> Result<Vec<u64>> {
            let mut rng = path_rng(seed, p);
            let mut out = vec![0u64; n * horizon];
            let mut lag: Vec<f64> = initial.iter().map(|&y| y as f64).collect();
            let mut next = vec![0.0; n];
            for h in 0..horizon {
                for i in 0..n {
                    let [end, lambda, phi] = rates[h][i];
                    let mut mu = end;
                    if ar {
                        mu += lambda * lag[i];
                    }
                    if let Some(w) = &weights {
                        let s: f64 = (0..n).filter(|&j| j != i).map(|j| w[[j, i]] * lag[j]).sum();
                        mu += phi * s;
                    }
                    let y = draw_count(family, mu, psi, &mut rng)?;
                    out[i * horizon + h] = y;
                    next[i] = y as f64;
                }
                std::mem::swap(&mut lag, &mut next);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut paths = Array3::<u64>::zeros((n_paths, n, horizon));
    for (p, run) in runs.iter().enumerate() {
        for i in 0..n {
            for h in 0..horizon {
                paths[[p, i, h]] = run[i * horizon + h];
            }
        }
    }
    let final_sizes = runs
        .iter()
        .map(|r| r.iter().fold(0u64, |a, &b| a.saturating_add(b)))
        .collect();
    Ok(SimulationBundle {
        region_ids: data.region_ids().to_vec(),
        paths,
        initial,
        t0,
        horizon,
        seed,
        final_sizes,
    })
}

/// A panel like `template` whose counts at `t = 2..=T` are simulated from
/// the model, starting from the template's counts at `t = 1`.
pub fn simulate_panel<F: Scalar>(
    spec: &ModelSpec<F>,
    theta: &ParameterVector<F>,
    template: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
    seed: u64,
) -> Result<SurveillanceCounts<F>> {
    let n_t = template.n_times();
    if n_t < 2 {
        return Err(Error::invalid(
            "the template panel needs at least two time points",
        ));
    }
    let bundle = simulate_with(spec, theta, template, graph, 1, n_t - 1, 1, seed)?;
    let mut counts = template.counts().clone();
    for i in 0..template.n_regions() {
        for h in 0..n_t - 1 {
            counts[[i, h + 1]] = bundle.paths[[0, i, h]];
        }
    }
    template.with_counts(counts)
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalSizeSummary {
    pub mean: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
}

pub fn final_size_summary(bundle: &SimulationBundle) -> FinalSizeSummary {
    let mut sizes: Vec<f64> = bundle.final_sizes.iter().map(|&s| s as f64).collect();
    sizes.sort_by(f64::total_cmp);
    FinalSizeSummary {
        mean: sizes.iter().sum::<f64>() / sizes.len() as f64,
        q025: quantile_sorted(&sizes, 0.025),
        median: quantile_sorted(&sizes, 0.5),
        q975: quantile_sorted(&sizes, 0.975),
    }
}

/// Ranked probability score of the empirical distribution of `sample`.
pub fn empirical_rps(sample: &[u64], y: u64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_unstable();
    let n = xs.len() as f64;
    // F̂ and the indicator are constant between consecutive breakpoints
    let mut points = xs.clone();
    points.push(y);
    points.sort_unstable();
    points.dedup();
    let mut total = 0.0;
    let mut below = 0usize;
    for w in points.windows(2) {
        let k = w[0];
        while below < xs.len() && xs[below] <= k {
            below += 1;
        }
        let f = below as f64 / n;
        let ind = if y <= k { 1.0 } else { 0.0 };
        total += (w[1] - w[0]) as f64 * (f - ind) * (f - ind);
    }
    total
}

/// Sample mean and variance (denominator `N - 1`; 0 for one draw).
pub fn sample_moments(sample: &[u64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().map(|&x| x as f64).sum::<f64>() / n;
    if sample.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = sample.iter().map(|&x| (x as f64 - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

/// Dawid-Sebastiani score from sample moments; `None` for zero variance.
pub fn empirical_dss(sample: &[u64], y: u64) -> Option<f64> {
    let (m, v) = sample_moments(sample);
    (v > 0.0).then(|| (y as f64 - m).powi(2) / v + v.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateAxis {
    /// Per step, summed over regions.
    Time,
    /// Per region, summed over the horizon.
    Space,
    /// Every region and step separately.
    Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    /// Region index (space, cell) or None.
    pub region: Option<usize>,
    /// Step `1..=H` (time, cell) or None.
    pub step: Option<usize>,
    pub mean: f64,
    pub variance: f64,
    pub observed: Option<u64>,
    pub rps: Option<f64>,
    pub dss: Option<f64>,
}

/// Mean simulated counts along `axis`, scored against `observed`
/// (`I × H`, aligned with the horizon) when given.
pub fn aggregate_paths(
    bundle: &SimulationBundle,
    axis: AggregateAxis,
    observed: Option<&Array2<u64>>,
) -> Result<Vec<AggregateRow>> {
    let (np, n, hz) = bundle.paths.dim();
    if let Some(obs) = observed {
        if obs.dim() != (n, hz) {
            return Err(Error::invalid(format!(
                "observed panel is {:?}, expected {:?}",
                obs.dim(),
                (n, hz)
            )));
        }
    }
    let cells: Vec<(Option<usize>, Option<usize>)> = match axis {
        AggregateAxis::Time => (0..hz).map(|h| (None, Some(h))).collect(),
        AggregateAxis::Space => (0..n).map(|i| (Some(i), None)).collect(),
        AggregateAxis::Cell => (0..n)
            .flat_map(|i| (0..hz).map(move |h| (Some(i), Some(h))))
            .collect(),
    };
    let select = |i: Option<usize>, h: Option<usize>, arr: &dyn Fn(usize, usize) -> u64| -> u64 {
        let regions: Vec<usize> = i.map_or_else(|| (0..n).collect(), |i| vec![i]);
        let steps: Vec<usize> = h.map_or_else(|| (0..hz).collect(), |h| vec![h]);
        regions
            .iter()
            .flat_map(|&a| steps.iter().map(move |&b| (a, b)))
            .map(|(a, b)| arr(a, b))
            .sum()
    };
    Ok(cells
        .into_iter()
        .map(|(i, h)| {
            let sample: Vec<u64> = (0..np)
                .map(|p| select(i, h, &|a, b| bundle.paths[[p, a, b]]))
                .collect();
            let (mean, variance) = sample_moments(&sample);
            let obs = observed.map(|o| select(i, h, &|a, b| o[[a, b]]));
            AggregateRow {
                region: i,
                step: h.map(|h| h + 1),
                mean,
                variance,
                observed: obs,
                rps: obs.map(|y| empirical_rps(&sample, y)),
                dss: obs.and_then(|y| empirical_dss(&sample, y)),
            }
        })
        .collect())
}
