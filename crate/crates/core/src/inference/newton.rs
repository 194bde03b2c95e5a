//! Newton-Raphson maximisation with step halving.
//!
//! The search direction uses the observed information when it is positive
//! definite, falls back to the expected information, and finally to a
//! ridge-regularised matrix. Steps are halved until the objective does not
//! decrease, so accepted iterates are monotone up to rounding noise.

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};

/// Objective value with derivatives at one point.
#[derive(Debug, Clone)]
pub struct Point<F> {
    pub value: F,
    pub grad: Array1<F>,
    /// Negative Hessian.
    pub info: Array2<F>,
    pub fallback_info: Option<Array2<F>>,
    pub finite: bool,
}

#[derive(Debug, Clone)]
pub struct NewtonOptions<F> {
    pub max_iter: usize,
    /// Convergence needs the sup-norm of the (projected) gradient below this.
    pub grad_tol: F,
    /// ... and the relative change of the objective below this.
    pub rel_tol: F,
    pub max_halvings: usize,
    /// Cap on the sup-norm of a step; keeps a poorly conditioned start from
    /// flinging a parameter onto a flat plateau.
    pub max_step: Option<F>,
    pub lower: Option<Array1<F>>,
    pub upper: Option<Array1<F>>,
}

impl<F: Scalar> Default for NewtonOptions<F> {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: F::lit(1e-5),
            rel_tol: F::lit(1e-8),
            max_halvings: 40,
            max_step: None,
            lower: None,
            upper: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Observed,
    Expected,
    Ridge,
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome<F> {
    pub x: Array1<F>,
    pub point: Point<F>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: F,
    pub at_bound: Vec<bool>,
    pub fallbacks: usize,
}

fn direction<F: Scalar>(pt: &Point<F>) -> (Array1<F>, Direction) {
    let g = &pt.grad;
    let ascent = |d: &Array1<F>| d.iter().all(|v| v.is_finite()) && d.dot(g) >= F::zero();
    if let Some(ch) = Cholesky::new(&pt.info) {
        let d = ch.solve(g);
        if ascent(&d) {
            return (d, Direction::Observed);
        }
    }
    let base = pt.fallback_info.as_ref().unwrap_or(&pt.info);
    if pt.fallback_info.is_some() {
        if let Some(ch) = Cholesky::new(base) {
            let d = ch.solve(g);
            if ascent(&d) {
                return (d, Direction::Expected);
            }
        }
    }
    let n = g.len();
    let scale = (0..n)
        .map(|k| base[[k, k]].abs())
        .fold(F::zero(), F::max)
        .max(F::one());
    let mut tau = F::lit(1e-8) * scale;
    loop {
        let mut m = base.clone();
        for k in 0..n {
            m[[k, k]] += tau;
        }
        if let Some(ch) = Cholesky::new(&m) {
            let d = ch.solve(g);
            if ascent(&d) {
                return (d, Direction::Ridge);
            }
        }
        tau *= F::lit(10.0);
        if !tau.is_finite() {
            // steepest ascent as the last resort
            return (g / scale, Direction::Ridge);
        }
    }
}

fn project<F: Scalar>(x: &mut Array1<F>, opts: &NewtonOptions<F>) {
    if let Some(lo) = &opts.lower {
        x.zip_mut_with(lo, |v, &l| *v = v.max(l));
    }
    if let Some(hi) = &opts.upper {
        x.zip_mut_with(hi, |v, &h| *v = v.min(h));
    }
}

/// Gradient with components that push against an active bound removed.
fn projected_grad<F: Scalar>(
    x: &Array1<F>,
    g: &Array1<F>,
    opts: &NewtonOptions<F>,
) -> (Array1<F>, Vec<bool>) {
    let mut out = g.clone();
    let mut at = vec![false; x.len()];
    for k in 0..x.len() {
        let low = opts
            .lower
            .as_ref()
            .is_some_and(|lo| x[k] <= lo[k] && g[k] < F::zero());
        let high = opts
            .upper
            .as_ref()
            .is_some_and(|hi| x[k] >= hi[k] && g[k] > F::zero());
        if low || high {
            out[k] = F::zero();
            at[k] = true;
        }
    }
    (out, at)
}

/// Relative rounding noise assumed for objective values.
const VALUE_NOISE: f64 = 1e-12;

fn sup_norm<F: Scalar>(v: &Array1<F>) -> F {
    v.iter().fold(F::zero(), |m, x| m.max(x.abs()))
}

/// Maximises `objective`. The closure's second argument asks for
/// derivatives; when false only `value` and `finite` are read.
pub fn maximize<F, O>(
    mut objective: O,
    x0: Array1<F>,
    opts: &NewtonOptions<F>,
) -> Result<NewtonOutcome<F>>
where
    F: Scalar,
    O: FnMut(&Array1<F>, bool) -> Result<Point<F>>,
{
    let mut x = x0;
    project(&mut x, opts);
    let mut pt = objective(&x, true)?;
    if !pt.finite || !pt.value.is_finite() {
        return Err(Error::Numerical(
            "objective is not finite at the starting values".into(),
        ));
    }
    let mut iterations = 0;
    let mut converged = false;
    let mut fallbacks = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let (pg, _) = projected_grad(&x, &pt.grad, opts);
        let (mut dir, kind) = direction(&Point {
            grad: pg.clone(),
            ..pt.clone()
        });
        if kind != Direction::Observed {
            fallbacks += 1;
        }
        // freeze coordinates held at a bound
        let (_, at) = projected_grad(&x, &pt.grad, opts);
        for (k, held) in at.iter().enumerate() {
            if *held {
                dir[k] = F::zero();
            }
        }
        if let Some(cap) = opts.max_step {
            let len = sup_norm(&dir);
            if len > cap {
                dir *= cap / len;
            }
        }
        // Near the optimum the predicted gain drops below the rounding noise
        // of the objective, which then cannot rank the full step; accept it
        // if it shrinks the gradient instead.
        let noise = F::lit(VALUE_NOISE) * pt.value.abs().max(F::one());
        let mut full_step = None;
        if dir.dot(&pg) < noise {
            let mut cand = &x + &dir;
            project(&mut cand, opts);
            let v = objective(&cand, true)?;
            let (pg_new, _) = projected_grad(&cand, &v.grad, opts);
            if v.finite && v.value >= pt.value - noise && sup_norm(&pg_new) < sup_norm(&pg) {
                full_step = Some((cand, v));
            }
        }
        let (cand, new) = match full_step {
            Some(found) => found,
            None => {
                let mut step = F::one();
                let mut accepted = None;
                for _ in 0..=opts.max_halvings {
                    let mut cand = &x + &(&dir * step);
                    project(&mut cand, opts);
                    let v = objective(&cand, false)?;
                    if v.finite && v.value.is_finite() && v.value >= pt.value {
                        accepted = Some(cand);
                        break;
                    }
                    step *= F::lit(0.5);
                }
                let Some(cand) = accepted else {
                    // no ascent possible along the direction: numerically stationary
                    converged = sup_norm(&pg) < opts.grad_tol;
                    break;
                };
                let new = objective(&cand, true)?;
                (cand, new)
            }
        };
        let change = (new.value - pt.value).abs() / pt.value.abs().max(F::one());
        x = cand;
        pt = new;
        let (pg, _) = projected_grad(&x, &pt.grad, opts);
        if sup_norm(&pg) < opts.grad_tol && change < opts.rel_tol {
            converged = true;
            break;
        }
    }
    let (pg, at_bound) = projected_grad(&x, &pt.grad, opts);
    let at_bound = at_bound
        .into_iter()
        .enumerate()
        .map(|(k, a)| {
            a || opts.lower.as_ref().is_some_and(|lo| x[k] <= lo[k])
                || opts.upper.as_ref().is_some_and(|hi| x[k] >= hi[k])
        })
        .collect();
    Ok(NewtonOutcome {
        grad_norm: sup_norm(&pg),
        x,
        point: pt,
        iterations,
        converged,
        at_bound,
        fallbacks,
    })
}
