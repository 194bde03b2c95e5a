//! Dominant eigenvalue of the epidemic transition matrix over time.

use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::model::data::SurveillanceCounts;
use crate::model::layout::ParameterVector;
use crate::model::mean::MeanModel;
use crate::model::spec::ModelSpec;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 10_000;

/// Spectral radius of a nonnegative square matrix by power iteration on
/// `M + cI`.
///
/// Converges when the Collatz-Wielandt bounds
/// `min_i (Mx)_i / x_i ≤ ρ ≤ max_i (Mx)_i / x_i` are within `tol`. For
/// reducible matrices, where some `x_i` may vanish and the lower bound
/// stalls, the upper bound is accepted once it stops changing.
pub fn spectral_radius<F: Scalar>(m: &Array2<F>, tol: F, max_iter: usize) -> Result<F> {
    let n = m.nrows();
    if n == 0 {
        return Ok(F::zero());
    }
    if m.iter().any(|v| *v < F::zero() || !v.is_finite()) {
        return Err(Error::invalid(
            "transition matrix must be finite and nonnegative",
        ));
    }
    let max_row = m
        .rows()
        .into_iter()
        .map(|r| r.sum())
        .fold(F::zero(), F::max);
    if max_row == F::zero() {
        return Ok(F::zero());
    }
    // the shift removes periodicity (eigenvalues of equal modulus)
    let shift = F::lit(0.1) * max_row;
    let mut x = Array1::<F>::from_elem(n, F::one());
    let mut prev_upper = F::infinity();
    let mut stalled = 0;
    for _ in 0..max_iter {
        let mut y = m.dot(&x);
        y.zip_mut_with(&x, |yi, &xi| *yi += shift * xi);
        let mut lower = F::infinity();
        let mut upper = F::zero();
        let xmax = x.iter().fold(F::zero(), |a, &b| a.max(b));
        for i in 0..n {
            if x[i] > xmax * F::lit(1e-250) {
                let r = y[i] / x[i];
                lower = lower.min(r);
                upper = upper.max(r);
            } else {
                lower = F::zero();
            }
        }
        let scale = upper.max(F::one());
        if upper - lower <= tol * scale {
            return Ok(((upper + lower) * F::lit(0.5) - shift).max(F::zero()));
        }
        if (upper - prev_upper).abs() <= F::lit(1e-3) * tol * scale {
            stalled += 1;
            if stalled >= 3 {
                return Ok((upper - shift).max(F::zero()));
            }
        } else {
            stalled = 0;
        }
        prev_upper = upper;
        let ymax = y.iter().fold(F::zero(), |a, &b| a.max(b));
        x = y / ymax;
    }
    Err(Error::PowerIteration(max_iter))
}

/// `M_t` with `λ_it` on the diagonal and `φ_it w_ji` at `(i, j)`.
pub fn transition_matrix<F: Scalar>(
    spec: &ModelSpec<F>,
    theta: &ParameterVector<F>,
    data: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
    t: usize,
) -> Result<Array2<F>> {
    let model = MeanModel::new(spec, theta, graph)?;
    transition_with(&model, spec, data, t)
}

fn transition_with<F: Scalar>(
    model: &MeanModel<'_, F>,
    spec: &ModelSpec<F>,
    data: &SurveillanceCounts<F>,
    t: usize,
) -> Result<Array2<F>> {
    let n = data.n_regions();
    let mut m = Array2::<F>::zeros((n, n));
    for i in 0..n {
        let [_, lambda, phi] = model.rates(data, i, t)?;
        if spec.autoregressive.include {
            m[[i, i]] = lambda;
        }
        if let Some(w) = &model.weights {
            for j in 0..n {
                if j != i {
                    m[[i, j]] = phi * w[[j, i]];
                }
            }
        }
    }
    Ok(m)
}

/// Dominant eigenvalue of `M_t` for `t = 1..=T`.
pub fn dominant_eigenvalue_path<F: Scalar>(
    spec: &ModelSpec<F>,
    theta: &ParameterVector<F>,
    data: &SurveillanceCounts<F>,
    graph: Option<&RegionGraph>,
) -> Result<Vec<F>> {
    if !spec.has_epidemic() {
        return Err(Error::invalid(
            "the dominant eigenvalue needs an autoregressive or spatio-temporal component",
        ));
    }
    let model = MeanModel::new(spec, theta, graph)?;
    (1..=data.n_times())
        .map(|t| {
            let m = transition_with(&model, spec, data, t)?;
            spectral_radius(&m, F::lit(POWER_TOL), POWER_MAX_ITER)
        })
        .collect()
}
