//! Transmission weights `w[j][i]` from region `j` (source) to region `i`.
//!
//! Estimable weight laws are parameterised on the log scale: `log d` for the
//! power law and `log ω_2, …, log ω_M` for the order factor (`ω_1 = 1`).
//! Derivatives are taken with respect to those log-scale parameters.

use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::scalar::Scalar;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind<F> {
    /// Adjacency indicator.
    FirstOrder,
    /// `o^{-d}` on the neighbourhood order.
    PowerLaw,
    /// One free weight per order below `max_order`, higher orders share `ω_M`.
    OrderFactor { max_order: u32 },
    /// Equal weight for every reachable pair.
    Uniform,
    /// User-supplied matrix, rows are sources.
    Fixed { matrix: Array2<F> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec<F> {
    #[serde(flatten)]
    pub kind: WeightKind<F>,
    pub normalized: bool,
}

impl<F: Scalar> WeightSpec<F> {
    pub fn new(kind: WeightKind<F>, normalized: bool) -> Self {
        Self { kind, normalized }
    }

    pub fn power_law(normalized: bool) -> Self {
        Self::new(WeightKind::PowerLaw, normalized)
    }

    pub fn first_order(normalized: bool) -> Self {
        Self::new(WeightKind::FirstOrder, normalized)
    }

    pub fn n_params(&self) -> usize {
        match self.kind {
            WeightKind::PowerLaw => 1,
            WeightKind::OrderFactor { max_order } => max_order.saturating_sub(1) as usize,
            _ => 0,
        }
    }

    /// Names of the weight parameters on their natural (positive) scale.
    pub fn param_names(&self) -> Vec<String> {
        match self.kind {
            WeightKind::PowerLaw => vec!["d".to_string()],
            WeightKind::OrderFactor { max_order } => {
                (2..=max_order).map(|o| format!("omega{o}")).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn is_estimable(&self) -> bool {
        self.n_params() > 0
    }

    /// Checks the spec against a graph.
    pub fn validate(&self, graph: &RegionGraph) -> Result<()> {
        match &self.kind {
            WeightKind::OrderFactor { max_order } => {
                let limit = graph.max_finite_order() + 1;
                if *max_order < 2 || *max_order > limit {
                    return Err(Error::invalid(format!(
                        "order-factor weights need 2 <= M <= {limit}, got M = {max_order}"
                    )));
                }
            }
            WeightKind::Fixed { matrix } => {
                let n = graph.len();
                if matrix.dim() != (n, n) {
                    return Err(Error::invalid(format!(
                        "fixed weight matrix is {:?}, expected {n}x{n}",
                        matrix.dim()
                    )));
                }
                for ((r, c), &w) in matrix.indexed_iter() {
                    if !(w >= F::zero()) || !w.is_finite() {
                        return Err(Error::invalid(format!(
                            "fixed weight matrix entry ({r}, {c}) = {w} is not a nonnegative number"
                        )));
                    }
                    if r == c && w != F::zero() {
                        return Err(Error::invalid(format!(
                            "fixed weight matrix has nonzero diagonal at {r}"
                        )));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Default (log-scale) starting values: d = 1 and all ω = 1.
    pub fn default_params(&self) -> Vec<F> {
        vec![F::zero(); self.n_params()]
    }
}

/// Raw (unnormalised) weight of one pair with its first and second
/// log-parameter derivatives.
struct RawEntry<F> {
    value: F,
    grad: Vec<F>,
    hess: Vec<F>, // row-major p x p
}

fn raw_entry<F: Scalar>(
    spec: &WeightSpec<F>,
    params: &[F],
    graph: &RegionGraph,
    j: usize,
    i: usize,
    order_derivs: usize,
) -> RawEntry<F> {
    let p = spec.n_params();
    let mut e = RawEntry {
        value: F::zero(),
        grad: vec![F::zero(); if order_derivs >= 1 { p } else { 0 }],
        hess: vec![F::zero(); if order_derivs >= 2 { p * p } else { 0 }],
    };
    if i == j {
        return e;
    }
    let order = graph.order(j, i);
    match &spec.kind {
        WeightKind::Fixed { matrix } => e.value = matrix[[j, i]],
        _ if order.is_none() => {}
        WeightKind::FirstOrder => {
            if order == Some(1) {
                e.value = F::one();
            }
        }
        WeightKind::Uniform => e.value = F::one(),
        WeightKind::PowerLaw if order == Some(1) => e.value = F::one(),
        WeightKind::PowerLaw => {
            let o = F::from_count(u64::from(order.unwrap()));
            let d = params[0].exp();
            let ln_o = o.ln();
            let v = (-d * ln_o).exp();
            e.value = v;
            if order_derivs >= 1 {
                e.grad[0] = -d * ln_o * v;
            }
            if order_derivs >= 2 {
                e.hess[0] = (d * d * ln_o * ln_o - d * ln_o) * v;
            }
        }
        WeightKind::OrderFactor { max_order } => {
            let bucket = order.unwrap().min(*max_order);
            if bucket == 1 {
                e.value = F::one();
            } else {
                let a = (bucket - 2) as usize;
                let v = params[a].exp();
                e.value = v;
                if order_derivs >= 1 {
                    e.grad[a] = v;
                }
                if order_derivs >= 2 {
                    e.hess[a * p + a] = v;
                }
            }
        }
    }
    e
}

/// Weight matrix with its derivatives up to the requested order.
#[derive(Debug, Clone)]
pub struct WeightDerivatives<F> {
    pub matrix: Array2<F>,
    /// `grad[a]` = ∂W/∂θ_a.
    pub grad: Vec<Array2<F>>,
    /// `hess[a][b]` = ∂²W/∂θ_a∂θ_b.
    pub hess: Vec<Vec<Array2<F>>>,
}

/// Weight matrix and derivatives with respect to the log-scale weight
/// parameters. `order_derivs` is 0, 1 or 2.
#[allow(clippy::needless_range_loop)]
pub fn weight_derivatives<F: Scalar>(
    spec: &WeightSpec<F>,
    params: &[F],
    graph: &RegionGraph,
    order_derivs: usize,
) -> Result<WeightDerivatives<F>> {
    let p = spec.n_params();
    if params.len() != p {
        return Err(Error::invalid(format!(
            "weight spec expects {p} parameters, got {}",
            params.len()
        )));
    }
    spec.validate(graph)?;
    let n = graph.len();
    let mut matrix = Array2::<F>::zeros((n, n));
    let mut grad = vec![Array2::<F>::zeros((n, n)); if order_derivs >= 1 { p } else { 0 }];
    let mut hess = vec![vec![Array2::<F>::zeros((n, n)); p]; if order_derivs >= 2 { p } else { 0 }];

    for j in 0..n {
        let row: Vec<RawEntry<F>> = (0..n)
            .map(|i| raw_entry(spec, params, graph, j, i, order_derivs))
            .collect();
        if !spec.normalized {
            for (i, e) in row.into_iter().enumerate() {
                matrix[[j, i]] = e.value;
                for a in 0..e.grad.len() {
                    grad[a][[j, i]] = e.grad[a];
                }
                if order_derivs >= 2 {
                    for a in 0..p {
                        for b in 0..p {
                            hess[a][b][[j, i]] = e.hess[a * p + b];
                        }
                    }
                }
            }
            continue;
        }
        // quotient rule for u / S with S = row sum
        let total: F = row.iter().map(|e| e.value).sum();
        if !(total > F::zero()) {
            return Err(Error::IsolatedRegion {
                region: graph.region_ids()[j].clone(),
            });
        }
        let s1: Vec<F> = (0..grad.len())
            .map(|a| row.iter().map(|e| e.grad[a]).sum())
            .collect();
        let s2: Vec<F> = if order_derivs >= 2 {
            (0..p * p)
                .map(|ab| row.iter().map(|e| e.hess[ab]).sum())
                .collect()
        } else {
            Vec::new()
        };
        let inv = total.recip();
        for (i, e) in row.iter().enumerate() {
            let u = e.value;
            matrix[[j, i]] = u * inv;
            for a in 0..s1.len() {
                grad[a][[j, i]] = e.grad[a] * inv - u * s1[a] * inv * inv;
            }
            if order_derivs >= 2 {
                for a in 0..p {
                    for b in 0..p {
                        let ab = a * p + b;
                        hess[a][b][[j, i]] = e.hess[ab] * inv
                            - (e.grad[a] * s1[b] + e.grad[b] * s1[a]) * inv * inv
                            - u * s2[ab] * inv * inv
                            + F::lit(2.0) * u * s1[a] * s1[b] * inv * inv * inv;
                    }
                }
            }
        }
    }
    Ok(WeightDerivatives { matrix, grad, hess })
}

/// The weight matrix `W` with `W[[j, i]] = w_ji`.
pub fn weight_matrix<F: Scalar>(
    spec: &WeightSpec<F>,
    params: &[F],
    graph: &RegionGraph,
) -> Result<Array2<F>> {
    Ok(weight_derivatives(spec, params, graph, 0)?.matrix)
}

/// ∂W/∂θ_a for each log-scale weight parameter; empty for parameter-free laws.
pub fn weight_matrix_gradient<F: Scalar>(
    spec: &WeightSpec<F>,
    params: &[F],
    graph: &RegionGraph,
) -> Result<Vec<Array2<F>>> {
    Ok(weight_derivatives(spec, params, graph, 1)?.grad)
}
