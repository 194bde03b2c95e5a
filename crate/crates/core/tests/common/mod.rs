//! Independent reference implementations and data generators shared by the
//! integration tests. Nothing here calls the library's numerical kernels.

#![allow(dead_code)]

use epicount::inference::{EvalLevel, Likelihood};
use epicount::model::layout::Layout;
use epicount::model::{
    ComponentSpec, InterceptKind, ModelSpec, ParameterVector, SurveillanceCounts,
};
use epicount::weights::{WeightKind, WeightSpec};
use epicount::{Family, RegionGraph};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Discrete, NegativeBinomial, Poisson};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All-pairs shortest paths by Floyd-Warshall; `None` when unreachable.
pub fn floyd_warshall(adj: &Array2<bool>) -> Vec<Vec<Option<u32>>> {
    let n = adj.nrows();
    const INF: u32 = u32::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if adj[[i, j]] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d.into_iter()
        .map(|row| row.into_iter().map(|v| (v < INF).then_some(v)).collect())
        .collect()
}

/// Weight matrix `w[j][i]` computed directly from the definitions.
pub fn oracle_weights(spec: &WeightSpec<f64>, params: &[f64], adj: &Array2<bool>) -> Array2<f64> {
    let n = adj.nrows();
    let orders = floyd_warshall(adj);
    let mut w = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let o = orders[j][i];
            w[[j, i]] = match (&spec.kind, o) {
                (WeightKind::Fixed { matrix }, _) => matrix[[j, i]],
                (_, None) => 0.0,
                (WeightKind::FirstOrder, Some(o)) => f64::from(u8::from(o == 1)),
                (WeightKind::Uniform, Some(_)) => 1.0,
                (WeightKind::PowerLaw, Some(o)) => (o as f64).powf(-params[0].exp()),
                (WeightKind::OrderFactor { max_order }, Some(o)) => {
                    let o = o.min(*max_order);
                    if o == 1 {
                        1.0
                    } else {
                        params[(o - 2) as usize].exp()
                    }
                }
            };
        }
        if spec.normalized {
            let s: f64 = w.row(j).sum();
            w.row_mut(j).mapv_inplace(|v| v / s);
        }
    }
    w
}

fn predictor(
    comp: &ComponentSpec,
    prefix: &str,
    theta: &ParameterVector<f64>,
    data: &SurveillanceCounts<f64>,
    i: usize,
    t: usize,
) -> f64 {
    let get = |name: &str| theta.get(&format!("{prefix}.{name}")).unwrap();
    let id = &data.region_ids()[i];
    let tf = t as f64;
    let mut eta = 0.0;
    match comp.intercept {
        InterceptKind::Common => eta += get("(Intercept)"),
        InterceptKind::PerRegionFixed => eta += get(&format!("alpha[{id}]")),
        InterceptKind::PerRegionRandom => eta += get("(Intercept)") + get(&format!("b[{id}]")),
    }
    if comp.trend {
        eta += get("t") * (tf - data.trend_centre());
    }
    let omega = 2.0 * std::f64::consts::PI / comp.period;
    for s in 1..=comp.harmonics {
        eta += get(&format!("sin({s}*w*t)")) * (s as f64 * omega * tf).sin();
        eta += get(&format!("cos({s}*w*t)")) * (s as f64 * omega * tf).cos();
    }
    for name in &comp.covariates {
        eta += get(name) * data.covariates()[name][[i, t - 1]];
    }
    eta
}

/// Conditional mean by the defining formula.
pub fn oracle_mean(
    spec: &ModelSpec<f64>,
    theta: &ParameterVector<f64>,
    data: &SurveillanceCounts<f64>,
    adj: Option<&Array2<bool>>,
    i: usize,
    t: usize,
) -> f64 {
    let e = data.offsets().map_or(1.0, |o| o[[i, t - 1]]);
    let mut mu = predictor(&spec.endemic, "end", theta, data, i, t).exp() * e;
    if spec.autoregressive.include {
        mu += predictor(&spec.autoregressive, "ar", theta, data, i, t).exp()
            * data.count(i, t - 1) as f64;
    }
    if spec.spatiotemporal.include {
        let params: Vec<f64> = spec
            .weights
            .param_names()
            .iter()
            .map(|n| theta.get(n).unwrap())
            .collect();
        let w = oracle_weights(&spec.weights, &params, adj.unwrap());
        let s: f64 = (0..data.n_regions())
            .filter(|&j| j != i)
            .map(|j| w[[j, i]] * data.count(j, t - 1) as f64)
            .sum();
        mu += predictor(&spec.spatiotemporal, "ne", theta, data, i, t).exp() * s;
    }
    mu
}

/// Double loop over regions and times of statrs log-pmfs.
pub fn oracle_loglik(
    spec: &ModelSpec<f64>,
    theta: &ParameterVector<f64>,
    data: &SurveillanceCounts<f64>,
    adj: Option<&Array2<bool>>,
) -> f64 {
    let psi = if spec.family == Family::NegBin {
        theta.get("psi").unwrap().exp()
    } else {
        0.0
    };
    let mut total = 0.0;
    for i in 0..data.n_regions() {
        for t in 2..=data.n_times() {
            let mu = oracle_mean(spec, theta, data, adj, i, t);
            let y = data.count(i, t);
            total += if spec.family == Family::Poisson {
                Poisson::new(mu).unwrap().ln_pmf(y)
            } else {
                let r = 1.0 / psi;
                NegativeBinomial::new(r, r / (r + mu)).unwrap().ln_pmf(y)
            };
        }
    }
    total
}

/// Connected graph on `n` nodes: random spanning tree plus extra edges.
pub fn random_graph(rng: &mut impl Rng, n: usize, extra: usize) -> RegionGraph {
    let ids: Vec<String> = (0..n).map(|i| format!("R{i}")).collect();
    let mut edges = Vec::new();
    for k in 1..n {
        edges.push((rng.random_range(0..k), k));
    }
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    RegionGraph::from_edges(ids, &edges).unwrap()
}

pub fn weight_kinds(graph: &RegionGraph, rng: &mut impl Rng) -> Vec<WeightKind<f64>> {
    let n = graph.len();
    let fixed = Array2::from_shape_fn((n, n), |(a, b)| {
        if a == b {
            0.0
        } else {
            rng.random_range(0.1..1.0)
        }
    });
    let mut kinds = vec![
        WeightKind::FirstOrder,
        WeightKind::PowerLaw,
        WeightKind::Uniform,
        WeightKind::Fixed { matrix: fixed },
    ];
    if graph.max_finite_order() >= 2 {
        kinds.push(WeightKind::OrderFactor {
            max_order: graph.max_finite_order().min(3),
        });
    }
    kinds
}

/// A rich random model with every component included.
pub struct Instance {
    pub spec: ModelSpec<f64>,
    pub theta: ParameterVector<f64>,
    pub data: SurveillanceCounts<f64>,
    pub graph: RegionGraph,
}

pub fn random_instance(
    rng: &mut impl Rng,
    n: usize,
    n_t: usize,
    kind: WeightKind<f64>,
    family: Family,
    graph: RegionGraph,
) -> Instance {
    let ids = graph.region_ids().to_vec();
    let intercepts = [
        InterceptKind::Common,
        InterceptKind::PerRegionFixed,
        InterceptKind::PerRegionRandom,
    ];
    let pick = |rng: &mut dyn rand::RngCore| intercepts[rng.random_range(0..3)];
    let spec = ModelSpec {
        endemic: ComponentSpec::intercept_only()
            .with_intercept(pick(rng))
            .with_trend()
            .with_harmonics(1)
            .with_period(12.0)
            .with_covariate("x"),
        autoregressive: ComponentSpec::intercept_only().with_intercept(pick(rng)),
        spatiotemporal: ComponentSpec::intercept_only()
            .with_intercept(pick(rng))
            .with_covariate("x"),
        weights: WeightSpec::new(kind, rng.random_bool(0.5)),
        family,
    };
    let counts = Array2::from_shape_fn((n, n_t), |_| rng.random_range(0..25u64));
    let offsets = Array2::from_shape_fn((n, n_t), |_| rng.random_range(0.5..2.0));
    let x = Array2::from_shape_fn((n, n_t), |_| rng.random_range(-1.0..1.0));
    let data = SurveillanceCounts::new(ids.clone(), counts)
        .unwrap()
        .with_offsets(offsets)
        .unwrap()
        .with_covariate("x", x)
        .unwrap();
    let layout = Layout::new(&spec, &ids, data.trend_centre());
    let values = (0..layout.len())
        .map(|k| {
            let name = &layout.params[k].name;
            if name.ends_with("(Intercept)") || name.contains("alpha[") {
                if name.starts_with("end") {
                    rng.random_range(0.5..2.0)
                } else {
                    rng.random_range(-2.5..-0.5)
                }
            } else if name == "psi" {
                rng.random_range(-3.0..0.0)
            } else if name.starts_with("sigma2") {
                0.0
            } else {
                rng.random_range(-0.4..0.4)
            }
        })
        .collect();
    let theta = ParameterVector::from_values(layout, values).unwrap();
    Instance {
        spec,
        theta,
        data,
        graph,
    }
}

/// Largest discrepancy between the analytic score/information and central
/// differences (`h = 1e-6 max(1, |θ|)`), relative to `max(|analytic|, 1)`.
pub fn finite_difference_errors(inst: &Instance) -> (f64, f64) {
    let lik = Likelihood::new(
        &inst.spec,
        &inst.theta.layout,
        &inst.data,
        Some(&inst.graph),
    )
    .unwrap();
    let theta = &inst.theta.values;
    let level = EvalLevel::Information;
    let at = lik.evaluate(theta, level).unwrap();
    let (mut score_err, mut info_err) = (0.0f64, 0.0f64);
    for k in 0..theta.len() {
        let h = 1e-6 * theta[k].abs().max(1.0);
        let mut up = theta.clone();
        up[k] += h;
        let mut dn = theta.clone();
        dn[k] -= h;
        let eu = lik.evaluate(&up, level).unwrap();
        let ed = lik.evaluate(&dn, level).unwrap();
        let fd = (eu.loglik - ed.loglik) / (2.0 * h);
        score_err = score_err.max(rel_err(fd, at.score[k]));
        for l in 0..theta.len() {
            let fd_info = -(eu.score[l] - ed.score[l]) / (2.0 * h);
            info_err = info_err.max(rel_err(fd_info, at.observed_info[[k, l]]));
        }
    }
    (score_err, info_err)
}

pub fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(1.0)
}
