//! High-accuracy reference optima for computing optimality gaps.

use crate::bregman::Generator;
use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::problem::{ConstraintSet, FiniteSumProblem};
use crate::prox::{self, ProxRequest};

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOptions {
    /// Stop once the objective changed by less than this over `window` iterations.
    pub tolerance: f64,
    pub window: usize,
    pub max_iterations: usize,
    /// Accuracy of inexact prox steps.
    pub prox_epsilon: f64,
}

impl ReferenceOptions {
    pub fn new(tolerance: f64) -> Self {
        ReferenceOptions { tolerance, window: 50, max_iterations: 200_000, prox_epsilon: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub value: f64,
    pub point: Vec<f64>,
    pub iterations: usize,
}

fn check_tolerance(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")))
    }
}

/// Accelerated proximal gradient (FISTA momentum, step `1/L_A`) with
/// function-value restarts, run until the best objective stalls.
pub fn reference_optimum(problem: &FiniteSumProblem, x0: &[f64], opts: &ReferenceOptions) -> Result<Reference> {
    check_tolerance(opts.tolerance)?;
    check_dim(problem.dim(), x0.len())?;
    let l = problem.lipschitz_constants().iter().sum::<f64>() / problem.n() as f64;
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothness constant {l} must be positive")));
    }
    let eps = if problem.regularizer().has_exact_prox() { 0.0 } else { opts.prox_epsilon };
    let step = |y: &[f64]| -> Result<Vec<f64>> {
        let g = problem.full_gradient(y)?;
        let req = ProxRequest {
            v: &g,
            theta: l,
            anchor: y,
            generator: Generator::Euclidean,
            regularizer: problem.regularizer(),
            constraint: &ConstraintSet::Full,
            epsilon: eps,
        };
        Ok(prox::solve(&req)?.point)
    };

    let mut x = step(x0)?;
    let mut fx = problem.objective_value(&x)?;
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = (fx, x.clone());
    let mut history = vec![fx];
    for k in 1..=opts.max_iterations {
        let next = step(&y)?;
        let f_next = problem.objective_value(&next)?;
        if !f_next.is_finite() {
            return Err(Error::NonFinite(format!("reference objective at iteration {k}")));
        }
        if f_next > fx {
            // restart the momentum from the last accepted point
            t = 1.0;
            y.clone_from(&x);
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            y = next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
            x = next;
            fx = f_next;
            t = t_next;
            if fx < best.0 {
                best = (fx, x.clone());
            }
        }
        history.push(best.0);
        if history.len() > opts.window && history[history.len() - 1 - opts.window] - best.0 < opts.tolerance {
            return Ok(Reference { value: best.0, point: best.1, iterations: k });
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations, best: best.0 })
}

/// `(1/N) Σ ½(⟨a_i, x⟩ − b_i)² + λ‖x‖₁`, evaluated in the same order as the
/// finite-sum problem built from the dataset.
pub fn lasso_objective(data: &Dataset, lambda: f64, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (row, b) in data.rows().zip(data.labels()) {
        let r = linalg::dot(row, x) - b;
        acc += 0.5 * r * r;
    }
    let smooth = acc / data.len() as f64;
    if lambda == 0.0 {
        smooth
    } else {
        smooth + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// Cyclic coordinate descent for the Lasso, stopped when the largest
/// violation of the optimality conditions is at most `tolerance`.
pub fn lasso_coordinate_descent(
    data: &Dataset,
    lambda: f64,
    x0: &[f64],
    tolerance: f64,
    max_sweeps: usize,
) -> Result<Reference> {
    check_tolerance(tolerance)?;
    check_dim(data.dim(), x0.len())?;
    let (n, d) = (data.len(), data.dim());
    let nf = n as f64;
    let feats = data.features();
    let col_sq: Vec<f64> = (0..d).map(|j| (0..n).map(|i| feats[i * d + j].powi(2)).sum::<f64>() / nf).collect();
    let mut x = x0.to_vec();
    let mut r: Vec<f64> = data.rows().zip(data.labels()).map(|(a, b)| linalg::dot(a, &x) - b).collect();
    let grad_j = |r: &[f64], j: usize| (0..n).map(|i| feats[i * d + j] * r[i]).sum::<f64>() / nf;

    for sweep in 1..=max_sweeps {
        for j in 0..d {
            if col_sq[j] == 0.0 {
                x[j] = 0.0;
                continue;
            }
            let g = grad_j(&r, j);
            let w = x[j] - g / col_sq[j];
            let level = lambda / col_sq[j];
            let new = if w > level {
                w - level
            } else if w < -level {
                w + level
            } else {
                0.0
            };
            let delta = new - x[j];
            if delta != 0.0 {
                for i in 0..n {
                    r[i] += delta * feats[i * d + j];
                }
                x[j] = new;
            }
        }
        // refresh the residual to stop drift from the incremental updates
        for (ri, (a, b)) in r.iter_mut().zip(data.rows().zip(data.labels())) {
            *ri = linalg::dot(a, &x) - b;
        }
        let violation = (0..d)
            .map(|j| {
                let g = grad_j(&r, j);
                if x[j] > 0.0 {
                    (g + lambda).abs()
                } else if x[j] < 0.0 {
                    (g - lambda).abs()
                } else {
                    (g.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max);
        if violation <= tolerance {
            return Ok(Reference { value: lasso_objective(data, lambda, &x), point: x, iterations: sweep });
        }
    }
    Err(Error::NoConvergence { iterations: max_sweeps, best: lasso_objective(data, lambda, &x) })
}

/// Reference for a Lasso instance: the accelerated run polished by coordinate
/// descent, keeping the lower of the two values.
pub fn lasso_reference(data: &Dataset, problem: &FiniteSumProblem, lambda: f64, tolerance: f64) -> Result<Reference> {
    let apg = reference_optimum(problem, &vec![0.0; data.dim()], &ReferenceOptions::new(tolerance))?;
    let cd = lasso_coordinate_descent(data, lambda, &apg.point, tolerance * 1e-2, 100_000)?;
    let cd_value = problem.objective_value(&cd.point)?;
    if cd_value <= apg.value {
        Ok(Reference { value: cd_value, point: cd.point, iterations: apg.iterations + cd.iterations })
    } else {
        Ok(apg)
    }
}
