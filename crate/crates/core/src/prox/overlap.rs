//! Overlapping group penalty
//! `Ω(x) = inf { Σ_r ‖v_r‖ : supp(v_r) ⊆ G_r, Σ_r v_r = x }`
//! and its inexact proximal operator.
//!
//! Both problems are solved through the same multiplier formulation. With one
//! multiplier `λ_r ≥ 0` per group and `s_j = Σ_{r ∋ j} λ_r`:
//!
//! * the prox `min ½‖x − w‖² + τΩ(x)` has dual solution `u = P_K(w)`,
//!   `K = {u : ‖u_{G_r}‖ ≤ τ ∀r}`, and `u_j = w_j / (1 + s_j)` maximises
//!   `Σ_j ½ w_j² s_j/(1 + s_j) − (τ²/2) Σ_r λ_r`;
//! * the penalty itself is `Ω(x) = min_λ Σ_j x_j²/(2 s_j) + ½ Σ_r λ_r`.
//!
//! Both are smooth convex programs over the nonnegative orthant, minimised by
//! projected Newton. Any `λ` yields a feasible decomposition `v_r = λ_r u_{G_r}`
//! (an upper bound) and, after rescaling `u` into `K`, a dual point (a lower
//! bound), so each iterate carries a certified gap.

use crate::error::{check_dim, Error, Result};
use crate::linalg;

use super::ProxResult;

/// Absolute accuracy (scaled by `max(1, Ω)`) used when `Ω` is evaluated for objective values.
pub const OVERLAP_VALUE_TOLERANCE: f64 = 1e-12;
/// Iteration budget for the penalty evaluation.
pub const OVERLAP_VALUE_MAX_ITERATIONS: usize = 10_000;
/// Iteration budget for the inexact prox.
pub const OVERLAP_PROX_MAX_ITERATIONS: usize = 100_000;
/// After certifying ε, up to this many extra Newton steps aim for `ε · PROX_REFINE_FACTOR`.
const PROX_REFINE_STEPS: usize = 3;
const PROX_REFINE_FACTOR: f64 = 1e-4;

/// A collection of (possibly overlapping) index groups over `0..dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapGroups {
    dim: usize,
    groups: Vec<Vec<usize>>,
    /// For every coordinate, the groups that contain it.
    coverage: Vec<Vec<usize>>,
}

impl OverlapGroups {
    pub fn new(dim: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidArgument("no groups given".into()));
        }
        let mut coverage = vec![Vec::new(); dim];
        for (r, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidArgument(format!("group {r} is empty")));
            }
            for &j in g {
                if j >= dim {
                    return Err(Error::InvalidArgument(format!("group {r} has index {j} outside 0..{dim}")));
                }
                if coverage[j].contains(&r) {
                    return Err(Error::InvalidArgument(format!("group {r} repeats index {j}")));
                }
                coverage[j].push(r);
            }
        }
        Ok(OverlapGroups { dim, groups, coverage })
    }

    /// Groups of three consecutive coordinates sharing their end points,
    /// `{0,1,2}, {2,3,4}, {4,5,6}, …`, with a shorter last group if needed so
    /// that every coordinate is covered.
    pub fn chain(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("zero dimension".into()));
        }
        let mut groups = Vec::new();
        let mut start = 0;
        loop {
            let end = (start + 3).min(dim);
            groups.push((start..end).collect());
            if end == dim {
                break;
            }
            start += 2;
        }
        Self::new(dim, groups)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// True when `x` vanishes outside the union of the groups.
    pub fn represents(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().zip(&self.coverage).all(|(v, c)| *v == 0.0 || !c.is_empty())
    }

    fn multiplier_sums(&self, lam: &[f64], s: &mut [f64]) {
        for (sj, cov) in s.iter_mut().zip(&self.coverage) {
            let mut acc = 0.0;
            for &r in cov {
                acc += lam[r];
            }
            *sj = acc;
        }
    }

    fn group_norm(&self, r: usize, u: &[f64]) -> f64 {
        self.groups[r].iter().map(|&j| u[j] * u[j]).sum::<f64>().sqrt()
    }

    /// Adds `Σ_j c_j` over `G_r ∩ G_t` into the Hessian, for every coordinate weight `c`.
    fn accumulate_hessian(&self, weights: &[f64], h: &mut [f64]) {
        let b = self.len();
        h.iter_mut().for_each(|v| *v = 0.0);
        for (cov, c) in self.coverage.iter().zip(weights) {
            for &r in cov {
                for &t in cov {
                    h[r * b + t] += c;
                }
            }
        }
    }
}

/// Result of a certified evaluation of `Ω(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapValue {
    /// `Σ_r ‖v_r‖` of the best decomposition found, an upper bound on `Ω(x)`.
    pub value: f64,
    /// A certified lower bound on `Ω(x)`.
    pub lower_bound: f64,
    pub iterations: usize,
}

/// Smooth convex objective over `λ ≥ 0` with a primal/dual certificate.
trait MultiplierProgram {
    fn len(&self) -> usize;
    /// `+∞` outside the domain.
    fn value(&self, lam: &[f64]) -> f64;
    fn grad_hess(&self, lam: &[f64], g: &mut [f64], h: &mut [f64]);
    /// (upper, lower) bounds on the optimal value of the underlying problem.
    fn bounds(&self, lam: &[f64]) -> (f64, f64);
}

struct NewtonOutcome {
    lam: Vec<f64>,
    upper: f64,
    lower: f64,
    iterations: usize,
    converged: bool,
}

/// Projected Newton with an ε-active set and an Armijo rule along the
/// projection arc. Stops once the best upper bound minus the best lower bound
/// is at most `tol(upper)`; the reported gap is non-increasing across iterations.
fn projected_newton<P: MultiplierProgram>(
    prog: &P,
    mut lam: Vec<f64>,
    tol: impl Fn(f64) -> f64,
    max_iterations: usize,
) -> NewtonOutcome {
    let b = prog.len();
    let mut g = vec![0.0; b];
    let mut h = vec![0.0; b * b];
    let mut best_lam = lam.clone();
    let (mut best_upper, mut best_lower) = prog.bounds(&lam);
    let mut value = prog.value(&lam);

    for it in 0..max_iterations {
        if best_upper - best_lower <= tol(best_upper) {
            return NewtonOutcome {
                lam: best_lam,
                upper: best_upper,
                lower: best_lower,
                iterations: it,
                converged: true,
            };
        }
        prog.grad_hess(&lam, &mut g, &mut h);

        let proj_step: f64 = lam
            .iter()
            .zip(&g)
            .map(|(l, gi)| {
                let d = l - (l - gi).max(0.0);
                d * d
            })
            .sum::<f64>()
            .sqrt();
        let eps_active = proj_step.min(1e-3);
        let active: Vec<bool> = lam.iter().zip(&g).map(|(l, gi)| *l <= eps_active && *gi > 0.0).collect();
        let free: Vec<usize> = (0..b).filter(|&r| !active[r]).collect();

        let mut dir = vec![0.0; b];
        for r in 0..b {
            if active[r] {
                dir[r] = -g[r] / h[r * b + r].max(1e-12);
            }
        }
        if !free.is_empty() {
            let nf = free.len();
            let max_diag = free.iter().map(|&r| h[r * b + r]).fold(0.0, f64::max);
            // relative: with large multipliers the Hessian entries are tiny
            let mut shift = if max_diag > 0.0 { 1e-14 * max_diag } else { 1e-300 };
            let rhs: Vec<f64> = free.iter().map(|&r| -g[r]).collect();
            let sol = loop {
                let mut hf = vec![0.0; nf * nf];
                for (a, &r) in free.iter().enumerate() {
                    for (c, &t) in free.iter().enumerate() {
                        hf[a * nf + c] = h[r * b + t];
                    }
                    hf[a * nf + a] += shift;
                }
                if let Some(x) = linalg::cholesky_solve(&hf, &rhs, nf) {
                    break x;
                }
                shift *= 100.0;
                if shift > 1e30 {
                    break rhs.clone();
                }
            };
            for (a, &r) in free.iter().enumerate() {
                dir[r] = sol[a];
            }
        }

        // Armijo along the projection arc.
        let sigma = 1e-4;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = lam.iter().zip(&dir).map(|(l, d)| (l + alpha * d).max(0.0)).collect();
            let tv = prog.value(&trial);
            let mut decrease = 0.0;
            for r in 0..b {
                if active[r] {
                    decrease += g[r] * (lam[r] - trial[r]);
                } else {
                    decrease -= alpha * g[r] * dir[r];
                }
            }
            // Near the optimum the predicted decrease drops below the rounding
            // noise of the objective while the certificate still improves, so
            // changes within that noise count as acceptable.
            let noise = 4.0 * f64::EPSILON * value.abs().max(tv.abs());
            if tv.is_finite() && tv <= value - sigma * decrease + noise {
                accepted = Some((trial, tv));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, next_value)) = accepted else {
            return NewtonOutcome {
                lam: best_lam,
                upper: best_upper,
                lower: best_lower,
                iterations: it + 1,
                converged: false,
            };
        };
        if next == lam {
            return NewtonOutcome {
                lam: best_lam,
                upper: best_upper,
                lower: best_lower,
                iterations: it + 1,
                converged: false,
            };
        }
        lam = next;
        value = next_value;
        let (upper, lower) = prog.bounds(&lam);
        if upper < best_upper {
            best_upper = upper;
            best_lam.clone_from(&lam);
        }
        best_lower = best_lower.max(lower);
    }
    let converged = best_upper - best_lower <= tol(best_upper);
    NewtonOutcome { lam: best_lam, upper: best_upper, lower: best_lower, iterations: max_iterations, converged }
}

/// The prox of `τΩ` at `w`, in the scaled form `min ½‖x − w‖² + τΩ(x)`.
struct ProxProgram<'a> {
    groups: &'a OverlapGroups,
    w: &'a [f64],
    tau: f64,
}

impl ProxProgram<'_> {
    fn dual_point(&self, lam: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.w.len()];
        self.groups.multiplier_sums(lam, &mut s);
        self.w.iter().zip(&s).map(|(w, s)| w / (1.0 + s)).collect()
    }

    fn primal_point(&self, lam: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.w.len()];
        self.groups.multiplier_sums(lam, &mut s);
        self.w.iter().zip(&s).map(|(w, s)| w * s / (1.0 + s)).collect()
    }
}

impl MultiplierProgram for ProxProgram<'_> {
    fn len(&self) -> usize {
        self.groups.len()
    }

    fn value(&self, lam: &[f64]) -> f64 {
        let mut s = vec![0.0; self.w.len()];
        self.groups.multiplier_sums(lam, &mut s);
        // ½w²s/(1+s) = ½w² − ½w²/(1+s); dropping the constant ½‖w‖² avoids
        // cancellation when the multipliers are large
        let residual: f64 = self.w.iter().zip(&s).map(|(w, s)| 0.5 * w * w / (1.0 + s)).sum();
        0.5 * self.tau * self.tau * lam.iter().sum::<f64>() + residual
    }

    fn grad_hess(&self, lam: &[f64], g: &mut [f64], h: &mut [f64]) {
        let mut s = vec![0.0; self.w.len()];
        self.groups.multiplier_sums(lam, &mut s);
        for (r, gr) in g.iter_mut().enumerate() {
            let fit: f64 = self.groups.groups[r]
                .iter()
                .map(|&j| {
                    let d = 1.0 + s[j];
                    0.5 * self.w[j] * self.w[j] / (d * d)
                })
                .sum();
            *gr = 0.5 * self.tau * self.tau - fit;
        }
        let weights: Vec<f64> = self.w.iter().zip(&s).map(|(w, s)| w * w / (1.0 + s).powi(3)).collect();
        self.groups.accumulate_hessian(&weights, h);
    }

    fn bounds(&self, lam: &[f64]) -> (f64, f64) {
        let u = self.dual_point(lam);
        let mut penalty = 0.0;
        let mut max_norm: f64 = 0.0;
        for (r, l) in lam.iter().enumerate() {
            let nr = self.groups.group_norm(r, &u);
            penalty += l * nr;
            max_norm = max_norm.max(nr);
        }
        let upper = 0.5 * linalg::norm_sq(&u) + self.tau * penalty;
        let scale = if max_norm > self.tau { self.tau / max_norm } else { 1.0 };
        let lower: f64 = u
            .iter()
            .zip(self.w)
            .map(|(ui, wi)| {
                let uh = scale * ui;
                uh * wi - 0.5 * uh * uh
            })
            .sum();
        (upper, lower)
    }
}

/// `Ω(x) = min_{λ ≥ 0} Σ_j x_j²/(2 s_j) + ½ Σ_r λ_r`.
struct PenaltyProgram<'a> {
    groups: &'a OverlapGroups,
    x: &'a [f64],
}

impl PenaltyProgram<'_> {
    fn sums(&self, lam: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.x.len()];
        self.groups.multiplier_sums(lam, &mut s);
        s
    }
}

impl MultiplierProgram for PenaltyProgram<'_> {
    fn len(&self) -> usize {
        self.groups.len()
    }

    fn value(&self, lam: &[f64]) -> f64 {
        let s = self.sums(lam);
        let mut acc = 0.0;
        for (x, s) in self.x.iter().zip(&s) {
            if *x != 0.0 {
                if *s <= 0.0 {
                    return f64::INFINITY;
                }
                acc += x * x / (2.0 * s);
            }
        }
        acc + 0.5 * lam.iter().sum::<f64>()
    }

    fn grad_hess(&self, lam: &[f64], g: &mut [f64], h: &mut [f64]) {
        let s = self.sums(lam);
        for (r, gr) in g.iter_mut().enumerate() {
            let fit: f64 = self.groups.groups[r]
                .iter()
                .filter(|&&j| self.x[j] != 0.0)
                .map(|&j| self.x[j] * self.x[j] / (2.0 * s[j] * s[j]))
                .sum();
            *gr = 0.5 - fit;
        }
        let weights: Vec<f64> =
            self.x.iter().zip(&s).map(|(x, s)| if *x != 0.0 { x * x / s.powi(3) } else { 0.0 }).collect();
        self.groups.accumulate_hessian(&weights, h);
    }

    fn bounds(&self, lam: &[f64]) -> (f64, f64) {
        let s = self.sums(lam);
        let u: Vec<f64> = self.x.iter().zip(&s).map(|(x, s)| if *x != 0.0 { x / s } else { 0.0 }).collect();
        let mut upper = 0.0;
        let mut max_norm: f64 = 0.0;
        for (r, l) in lam.iter().enumerate() {
            let nr = self.groups.group_norm(r, &u);
            upper += l * nr;
            max_norm = max_norm.max(nr);
        }
        let lower = linalg::dot(&u, self.x) / max_norm.max(1.0);
        (upper, lower)
    }
}

/// Certified evaluation of `Ω(x)` to absolute accuracy `tolerance · max(1, Ω)`.
/// Returns `+∞` when `x` is nonzero outside every group.
pub fn overlap_penalty_value(x: &[f64], groups: &OverlapGroups, tolerance: f64) -> Result<OverlapValue> {
    check_dim(groups.dim(), x.len())?;
    if !groups.represents(x) {
        return Ok(OverlapValue { value: f64::INFINITY, lower_bound: f64::INFINITY, iterations: 0 });
    }
    if x.iter().all(|v| *v == 0.0) {
        return Ok(OverlapValue { value: 0.0, lower_bound: 0.0, iterations: 0 });
    }
    let prog = PenaltyProgram { groups, x };
    let lam0: Vec<f64> = (0..groups.len()).map(|r| groups.group_norm(r, x)).collect();
    let out = projected_newton(&prog, lam0, |v| tolerance * v.max(1.0), OVERLAP_VALUE_MAX_ITERATIONS);
    if !out.converged {
        return Err(Error::NoConvergence { iterations: out.iterations, best: out.upper });
    }
    Ok(OverlapValue { value: out.upper, lower_bound: out.lower, iterations: out.iterations })
}

/// ε-certified minimiser of `⟨v, x⟩ + λΩ(x) + (θ/2)‖x − z₀‖²`.
pub fn prox_overlap_group(
    v: &[f64],
    theta: f64,
    z0: &[f64],
    lambda: f64,
    groups: &OverlapGroups,
    epsilon: f64,
) -> Result<ProxResult> {
    prox_overlap_group_with_budget(v, theta, z0, lambda, groups, epsilon, OVERLAP_PROX_MAX_ITERATIONS)
}

pub fn prox_overlap_group_with_budget(
    v: &[f64],
    theta: f64,
    z0: &[f64],
    lambda: f64,
    groups: &OverlapGroups,
    epsilon: f64,
    max_iterations: usize,
) -> Result<ProxResult> {
    check_dim(groups.dim(), v.len())?;
    check_dim(groups.dim(), z0.len())?;
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument(format!("prox weight theta = {theta} must be positive")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "the overlapping group prox is inexact and needs epsilon > 0, got {epsilon}"
        )));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("negative penalty weight {lambda}")));
    }
    let w: Vec<f64> = z0.iter().zip(v).map(|(z, vi)| z - vi / theta).collect();
    if lambda == 0.0 {
        let point = w.iter().zip(&groups.coverage).map(|(wi, c)| if c.is_empty() { 0.0 } else { *wi }).collect();
        return Ok(ProxResult { point, certified_gap: 0.0, inner_iterations: 0 });
    }
    let tau = lambda / theta;
    let prog = ProxProgram { groups, w: &w, tau };
    let lam0: Vec<f64> = (0..groups.len()).map(|r| (groups.group_norm(r, &w) / tau - 1.0).max(0.0)).collect();
    let scaled_tol = epsilon / theta;
    let out = projected_newton(&prog, lam0, |_| scaled_tol, max_iterations);
    let certified_gap = theta * (out.upper - out.lower).max(0.0);
    if !out.converged {
        return Err(Error::ProxNotCertified { best_gap: certified_gap, epsilon, iterations: out.iterations });
    }
    // A gap of ε only pins the point down to about √(2ε/θ); a few more Newton
    // steps (quadratic convergence) tighten it at negligible cost.
    let refined = projected_newton(&prog, out.lam.clone(), |_| scaled_tol * PROX_REFINE_FACTOR, PROX_REFINE_STEPS);
    let iterations = out.iterations + refined.iterations;
    let best = if refined.upper - refined.lower <= out.upper - out.lower { refined } else { out };
    Ok(ProxResult {
        point: prog.primal_point(&best.lam),
        certified_gap: theta * (best.upper - best.lower).max(0.0),
        inner_iterations: iterations,
    })
}

/// Value of the prox objective `⟨v, x⟩ + λΩ(x) + (θ/2)‖x − z₀‖²`, with `Ω` evaluated to `tolerance`.
pub fn overlap_prox_objective(
    v: &[f64],
    theta: f64,
    z0: &[f64],
    lambda: f64,
    groups: &OverlapGroups,
    x: &[f64],
    tolerance: f64,
) -> Result<f64> {
    let omega = overlap_penalty_value(x, groups, tolerance)?.value;
    Ok(linalg::dot(v, x) + lambda * omega + 0.5 * theta * linalg::dist_sq(x, z0))
}
