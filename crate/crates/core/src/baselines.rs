//! Baseline solvers: proximal gradient (PGD), stochastic proximal gradient
//! (SPGD), FISTA and Tseng's accelerated proximal gradient (APG).
//!
//! Gradient evaluations are counted as in the accelerated solver: `n` per full
//! gradient, one per component gradient. The deterministic methods use
//! `L_F = L_A`, the mean of the component constants.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bregman::Generator;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::problem::{ConstraintSet, FiniteSumProblem, SamplingDistribution};
use crate::prox::{self, ProxRequest};
use crate::trace::{floored_gap, SolverTrace, StageRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub steps: usize,
    /// Used by SPGD only.
    pub seed: u64,
    pub reference_value: Option<f64>,
    /// Accuracy for regularizers without an exact prox.
    pub prox_epsilon: f64,
    /// SPGD records the averaged iterate every this many steps (and at the end);
    /// `0` means once per `n` steps.
    pub record_every: usize,
    /// SPGD initial step `γ₀`; `None` means `1/max L_i`.
    pub initial_step: Option<f64>,
}

impl BaselineConfig {
    pub fn new(steps: usize) -> Self {
        BaselineConfig {
            steps,
            seed: 0,
            reference_value: None,
            prox_epsilon: 1e-10,
            record_every: 0,
            initial_step: None,
        }
    }
}

struct Recorder<'a> {
    problem: &'a FiniteSumProblem,
    reference: Option<f64>,
    clock: Instant,
    trace: SolverTrace,
}

impl<'a> Recorder<'a> {
    fn new(problem: &'a FiniteSumProblem, name: &str, reference: Option<f64>) -> Self {
        Recorder { problem, reference, clock: Instant::now(), trace: SolverTrace::new(name, problem.n()) }
    }

    fn push(&mut self, stage: usize, grads: u64, x: &[f64]) -> Result<()> {
        if !linalg::all_finite(x) {
            return Err(Error::NonFinite(format!("{} iterate at step {stage}", self.trace.solver)));
        }
        let objective = self.problem.objective_value(x)?;
        self.trace.records.push(StageRecord {
            stage,
            gradient_evaluations: grads,
            objective,
            gap: self.reference.map(|r| floored_gap(objective, r)),
            original_objective: None,
            wall_ms: self.clock.elapsed().as_secs_f64() * 1e3,
            max_z_norm: linalg::norm(x),
        });
        Ok(())
    }

    fn finish(mut self, x: Vec<f64>) -> SolverTrace {
        self.trace.final_point = x;
        self.trace
    }
}

/// `argmin ⟨g, x⟩ + P(x) + (θ/2)‖x − anchor‖²`.
fn prox_step(problem: &FiniteSumProblem, g: &[f64], theta: f64, anchor: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let eps = if problem.regularizer().has_exact_prox() { 0.0 } else { epsilon };
    let req = ProxRequest {
        v: g,
        theta,
        anchor,
        generator: Generator::Euclidean,
        regularizer: problem.regularizer(),
        constraint: &ConstraintSet::Full,
        epsilon: eps,
    };
    Ok(prox::solve(&req)?.point)
}

fn deterministic_constant(problem: &FiniteSumProblem) -> Result<f64> {
    let l = problem.lipschitz_constants();
    let mean = l.iter().sum::<f64>() / l.len() as f64;
    if mean > 0.0 && mean.is_finite() {
        Ok(mean)
    } else {
        Err(Error::InvalidArgument(format!("smoothness constant L_A = {mean} must be positive")))
    }
}

fn check_start(problem: &FiniteSumProblem, x0: &[f64]) -> Result<()> {
    check_dim(problem.dim(), x0.len())?;
    if problem.regularizer().contains(x0) {
        Ok(())
    } else {
        Err(Error::OutsideDomain("initial point outside dom P".into()))
    }
}

/// `x_k = prox_{P/L}(x_{k−1} − ∇F(x_{k−1})/L)` with `L = L_A`.
pub fn run_pgd(problem: &FiniteSumProblem, config: &BaselineConfig, x0: &[f64]) -> Result<SolverTrace> {
    check_start(problem, x0)?;
    let l = deterministic_constant(problem)?;
    let n = problem.n() as u64;
    let mut rec = Recorder::new(problem, "pgd", config.reference_value);
    let mut x = x0.to_vec();
    rec.push(0, 0, &x)?;
    for k in 1..=config.steps {
        let g = problem.full_gradient(&x)?;
        x = prox_step(problem, &g, l, &x, config.prox_epsilon)?;
        rec.push(k, k as u64 * n, &x)?;
    }
    Ok(rec.finish(x))
}

/// `x_k = prox_{γ_k P}(x_{k−1} − γ_k ∇f_{i_k}(x_{k−1}))` with `i_k` uniform and
/// `γ_k = γ₀/√k`; the recorded point is the running average of `x_1..x_k`.
pub fn run_spgd(problem: &FiniteSumProblem, config: &BaselineConfig, x0: &[f64]) -> Result<SolverTrace> {
    check_start(problem, x0)?;
    let n = problem.n();
    let gamma0 = match config.initial_step {
        Some(g) => g,
        None => 1.0 / problem.lipschitz_constants().into_iter().fold(0.0, f64::max),
    };
    if !(gamma0 > 0.0 && gamma0.is_finite()) {
        return Err(Error::InvalidArgument(format!("initial step {gamma0} must be positive")));
    }
    let every = if config.record_every == 0 { n } else { config.record_every };
    let q = SamplingDistribution::uniform(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rec = Recorder::new(problem, "spgd", config.reference_value);
    let mut x = x0.to_vec();
    let mut avg = x0.to_vec();
    let mut g = vec![0.0; problem.dim()];
    rec.push(0, 0, &avg)?;
    for k in 1..=config.steps {
        let i = q.sample(&mut rng);
        problem.component_gradient_into(i, &x, &mut g)?;
        let gamma = gamma0 / (k as f64).sqrt();
        x = prox_step(problem, &g, 1.0 / gamma, &x, config.prox_epsilon)?;
        let w = 1.0 / k as f64;
        for (a, xi) in avg.iter_mut().zip(&x) {
            *a += w * (xi - *a);
        }
        if k % every == 0 || k == config.steps {
            rec.push(k, k as u64, &avg)?;
        }
    }
    Ok(rec.finish(avg))
}

/// `t_1 = 1`, `t_{k+1} = (1 + √(1 + 4t_k²))/2`; returns `t_1..t_k`.
pub fn fista_t_sequence(k: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(k);
    let mut cur = 1.0f64;
    for _ in 0..k {
        t.push(cur);
        cur = 0.5 * (1.0 + (1.0 + 4.0 * cur * cur).sqrt());
    }
    t
}

/// FISTA with constant step `1/L_A`, no restarts.
pub fn run_fista(problem: &FiniteSumProblem, config: &BaselineConfig, x0: &[f64]) -> Result<SolverTrace> {
    check_start(problem, x0)?;
    let l = deterministic_constant(problem)?;
    let n = problem.n() as u64;
    let mut rec = Recorder::new(problem, "fista", config.reference_value);
    let mut x = x0.to_vec();
    let mut y = x0.to_vec();
    let mut t = 1.0f64;
    rec.push(0, 0, &x)?;
    for k in 1..=config.steps {
        let g = problem.full_gradient(&y)?;
        let next = prox_step(problem, &g, l, &y, config.prox_epsilon)?;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        y = next.iter().zip(&x).map(|(xn, xo)| xn + beta * (xn - xo)).collect();
        x = next;
        t = t_next;
        rec.push(k, k as u64 * n, &x)?;
    }
    Ok(rec.finish(x))
}

/// Tseng's three-sequence method with `θ_k = 2/(k + 2)`:
/// `y = (1−θ)x + θz`, `z ← prox_{P/(θL)}(z − ∇F(y)/(θL))`, `x ← (1−θ)x + θz`.
pub fn run_apg(problem: &FiniteSumProblem, config: &BaselineConfig, x0: &[f64]) -> Result<SolverTrace> {
    check_start(problem, x0)?;
    let l = deterministic_constant(problem)?;
    let n = problem.n() as u64;
    let mut rec = Recorder::new(problem, "apg", config.reference_value);
    let mut x = x0.to_vec();
    let mut z = x0.to_vec();
    rec.push(0, 0, &x)?;
    for k in 0..config.steps {
        let theta = 2.0 / (k as f64 + 2.0);
        let y: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| (1.0 - theta) * xi + theta * zi).collect();
        let g = problem.full_gradient(&y)?;
        z = prox_step(problem, &g, theta * l, &z, config.prox_epsilon)?;
        x = x.iter().zip(&z).map(|(xi, zi)| (1.0 - theta) * xi + theta * zi).collect();
        rec.push(k + 1, (k as u64 + 1) * n, &x)?;
    }
    Ok(rec.finish(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Component, Regularizer, SquaredLoss};

    fn quadratic_1d() -> FiniteSumProblem {
        // f(x) = ½(2x − 3)², minimiser 1.5, L = 4
        FiniteSumProblem::new(vec![Box::new(SquaredLoss::new(vec![2.0], 3.0))], Regularizer::Zero).unwrap()
    }

    #[test]
    fn pgd_on_quadratic() {
        let p = quadratic_1d();
        let t = run_pgd(&p, &BaselineConfig::new(5), &[0.0]).unwrap();
        // step 1/L hits the minimiser of a 1-D quadratic in one step
        assert!((t.final_point[0] - 1.5).abs() < 1e-15);
        let t = run_pgd(&p, &BaselineConfig::new(3), &[1.5]).unwrap();
        assert_eq!(t.final_point, vec![1.5]);
        for w in t.records.windows(2) {
            assert!(w[1].objective <= w[0].objective);
        }
    }

    #[test]
    fn pgd_geometric_on_two_dim_quadratic() {
        let comps: Vec<Box<dyn Component>> =
            vec![Box::new(SquaredLoss::new(vec![1.0, 0.0], 1.0)), Box::new(SquaredLoss::new(vec![0.0, 0.5], 1.0))];
        let p = FiniteSumProblem::new(comps, Regularizer::Zero).unwrap();
        let t = run_pgd(&p, &BaselineConfig::new(60), &[0.0, 0.0]).unwrap();
        for w in t.records.windows(2) {
            assert!(w[1].objective <= w[0].objective);
        }
        assert!((t.final_point[0] - 1.0).abs() < 1e-12 && (t.final_point[1] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn fista_t_values() {
        let t = fista_t_sequence(3);
        assert_eq!(t[0], 1.0);
        assert!((t[1] - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn fista_reaches_tight_gap_on_quadratic() {
        let comps: Vec<Box<dyn Component>> =
            vec![Box::new(SquaredLoss::new(vec![1.0], 2.0)), Box::new(SquaredLoss::new(vec![3.0], 0.0))];
        // F = ¼(x − 2)² + ¼(3x)², minimiser 0.2, F* = 0.9
        let p = FiniteSumProblem::new(comps, Regularizer::Zero).unwrap();
        let mut c = BaselineConfig::new(100);
        c.reference_value = Some(0.9);
        let t = run_fista(&p, &c, &[5.0]).unwrap();
        assert!(t.first_reaching(1e-10).is_some_and(|r| r.stage <= 100));
    }

    #[test]
    fn apg_first_step_is_prox_gradient() {
        let comps: Vec<Box<dyn Component>> =
            vec![Box::new(SquaredLoss::new(vec![1.0, 2.0], 1.0)), Box::new(SquaredLoss::new(vec![-1.0, 0.5], 0.0))];
        let p = FiniteSumProblem::new(comps, Regularizer::L1 { lambda: 0.2 }).unwrap();
        let x0 = [0.3, -0.4];
        let apg = run_apg(&p, &BaselineConfig::new(1), &x0).unwrap();
        let pgd = run_pgd(&p, &BaselineConfig::new(1), &x0).unwrap();
        assert_eq!(apg.final_point, pgd.final_point);
    }

    #[test]
    fn apg_respects_accelerated_bound() {
        let comps: Vec<Box<dyn Component>> =
            vec![Box::new(SquaredLoss::new(vec![1.0, 0.0], 1.0)), Box::new(SquaredLoss::new(vec![0.0, 0.1], 1.0))];
        // minimiser (1, 10) with F* = 0
        let p = FiniteSumProblem::new(comps, Regularizer::Zero).unwrap();
        let l = 0.505;
        let r2 = 1.0 + 100.0;
        let mut c = BaselineConfig::new(200);
        c.reference_value = Some(0.0);
        let t = run_apg(&p, &c, &[0.0, 0.0]).unwrap();
        for r in &t.records[1..] {
            let k = r.stage as f64;
            assert!(r.gap.unwrap() <= 2.0 * l * r2 / (k + 1.0).powi(2) + 1e-15);
        }
    }

    #[test]
    fn spgd_single_component_is_pgd_with_decreasing_steps() {
        let p = quadratic_1d();
        let mut c = BaselineConfig::new(4);
        c.record_every = 1;
        let t = run_spgd(&p, &c, &[0.0]).unwrap();
        let mut x = 0.0f64;
        let mut avg = 0.0;
        for k in 1..=4 {
            let gamma = 0.25 / (k as f64).sqrt();
            x -= gamma * 2.0 * (2.0 * x - 3.0);
            avg += (x - avg) / k as f64;
        }
        assert!((t.final_point[0] - avg).abs() < 1e-15);
        assert_eq!(t.records.len(), 5);
        assert_eq!(t.records[4].gradient_evaluations, 4);
    }

    #[test]
    fn spgd_is_seeded() {
        let comps: Vec<Box<dyn Component>> =
            (0..5).map(|i| Box::new(SquaredLoss::new(vec![1.0, i as f64], 1.0)) as Box<dyn Component>).collect();
        let p = FiniteSumProblem::new(comps, Regularizer::L1 { lambda: 0.1 }).unwrap();
        let mut c = BaselineConfig::new(50);
        c.seed = 7;
        let a = run_spgd(&p, &c, &[0.0, 0.0]).unwrap();
        let b = run_spgd(&p, &c, &[0.0, 0.0]).unwrap();
        assert!(a.same_path(&b));
    }
}
