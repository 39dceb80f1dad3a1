//! Accelerated stochastic mirror descent with variance reduction, exact or
//! with ε-inexact prox steps.
//!
//! Each stage `s` computes one full gradient `ṽ = ∇F(x̃_{s−1})` and then runs
//! `m` inner steps
//!
//! ```text
//! y   = α₁ x_{k−1} + α₂ z_{k−1} + α₃ x̃_{s−1}
//! v   = ṽ + (∇f_i(y) − ∇f_i(x̃_{s−1})) / (q_i n),   i ~ q
//! z_k ≈_ε argmin_{x ∈ X} ⟨v, x⟩ + P(x) + α₂ L̄ D(x, z_{k−1})
//! x̂   = α₁ x_{k−1} + α₂ z_k + α₃ x̃_{s−1}
//! ```
//!
//! followed by a choice of `x_k` that does at least as well as `x̂` on
//! `⟨v, x⟩ + (L̄/2)‖x − y‖² + P(x)`. The stage point `x̃_s` is either the
//! average of the inner iterates or the best of them.

mod schedule;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bregman::Generator;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::problem::{ConstraintSet, FiniteSumProblem, LipschitzSummary, Regularizer, SamplingDistribution};
use crate::prox::{self, overlap, ProxRequest};
use crate::trace::{floored_gap, SolverTrace, StageRecord};

pub use schedule::{AlphaSchedule, AlphaTriple, EpsilonSchedule};

/// How `x_k` is chosen after the mirror step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XUpdate {
    /// Variant I: `x_k = x̂_k`.
    Interpolated,
    /// Variant II: `x_k = argmin ⟨v, x⟩ + (L̄/2)‖x − y‖² + P(x)` over `X`.
    ProxStep,
    /// `λ x̂_k + (1 − λ) x_k^{II}` for `λ ∈ [0, 1]`.
    Blend(f64),
}

/// How `x̃_s` is formed from the stage's inner iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageRule {
    Average,
    Best,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingRule {
    Uniform,
    LipschitzProportional,
    Custom(Vec<f64>),
}

impl SamplingRule {
    pub fn build(&self, lipschitz: &[f64]) -> Result<SamplingDistribution> {
        let q = match self {
            SamplingRule::Uniform => SamplingDistribution::uniform(lipschitz.len())?,
            SamplingRule::LipschitzProportional => SamplingDistribution::lipschitz_proportional(lipschitz)?,
            SamplingRule::Custom(q) => SamplingDistribution::custom(q.clone())?,
        };
        check_dim(lipschitz.len(), q.len())?;
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsmdConfig {
    /// Inner steps per stage (`m`).
    pub inner_steps: usize,
    pub stages: usize,
    pub seed: u64,
    pub sampling: SamplingRule,
    pub schedule: AlphaSchedule,
    pub epsilon: EpsilonSchedule,
    pub x_update: XUpdate,
    pub stage_rule: StageRule,
    pub generator: Generator,
    /// The set `X_s`, kept fixed across stages.
    pub constraint: ConstraintSet,
    /// Known optimal value, used to fill in gaps.
    pub reference_value: Option<f64>,
    /// Check the `x_k` descent condition at every inner step.
    pub verify_steps: bool,
}

impl AsmdConfig {
    /// Uniform sampling, `ν = 2`, `α₃ = 1/3`, exact prox, variant I, averaged stage point,
    /// Euclidean distance over the full space.
    pub fn new(inner_steps: usize, stages: usize, seed: u64) -> Self {
        AsmdConfig {
            inner_steps,
            stages,
            seed,
            sampling: SamplingRule::Uniform,
            schedule: AlphaSchedule::new(2.0, 1.0 / 3.0).expect("default schedule is valid"),
            epsilon: EpsilonSchedule::Exact,
            x_update: XUpdate::Interpolated,
            stage_rule: StageRule::Average,
            generator: Generator::Euclidean,
            constraint: ConstraintSet::Full,
            reference_value: None,
            verify_steps: cfg!(debug_assertions),
        }
    }

    /// Whether the inexact rate guarantee applies: a smooth distance generator
    /// and summable prox errors (trivially true for exact runs).
    pub fn inexact_rate_hypotheses_met(&self) -> bool {
        self.epsilon.is_exact() || (self.epsilon.is_summable() && prox_generator_smoothness(self.generator).is_some())
    }

    pub fn validate(&self, problem: &FiniteSumProblem) -> Result<()> {
        if self.inner_steps == 0 {
            return Err(Error::InvalidArgument("inner_steps must be at least 1".into()));
        }
        if let XUpdate::Blend(l) = self.x_update {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidArgument(format!("blend weight {l} not in [0, 1]")));
            }
        }
        if let ConstraintSet::Box { lower, .. } = &self.constraint {
            check_dim(problem.dim(), lower.len())?;
        }
        self.epsilon.validate()?;
        let inexact = !self.epsilon.is_exact();
        prox::check_supported(self.generator, problem.regularizer(), &self.constraint, inexact)?;
        if self.x_update != XUpdate::Interpolated {
            prox::check_supported(Generator::Euclidean, problem.regularizer(), &self.constraint, inexact)?;
        }
        Ok(())
    }
}

fn prox_generator_smoothness(g: Generator) -> Option<f64> {
    use crate::bregman::DistanceGenerator;
    g.smoothness()
}

/// Initial points `x̃₀`, `x_{m,0}` and `z₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct StartPoint {
    pub x_tilde: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl StartPoint {
    pub fn at(x0: &[f64]) -> Self {
        StartPoint { x_tilde: x0.to_vec(), x: x0.to_vec(), z: x0.to_vec() }
    }
}

/// The variance-reduced estimator `ṽ + (∇f_i(y) − ∇f_i(x̃)) / (q_i n)` from
/// precomputed component gradients.
pub fn combine_reduced(v_tilde: &[f64], grad_y: &[f64], grad_anchor: &[f64], q_i: f64, n: usize) -> Vec<f64> {
    let scale = q_i * n as f64;
    v_tilde.iter().zip(grad_y.iter().zip(grad_anchor)).map(|(vt, (gy, ga))| vt + (gy - ga) / scale).collect()
}

/// The variance-reduced gradient estimate at `y` for component `i`.
pub fn reduced_gradient(
    problem: &FiniteSumProblem,
    y: &[f64],
    x_tilde: &[f64],
    v_tilde: &[f64],
    i: usize,
    q: &SamplingDistribution,
) -> Result<Vec<f64>> {
    check_dim(problem.dim(), v_tilde.len())?;
    check_dim(problem.n(), q.len())?;
    let gy = problem.component_gradient(i, y)?;
    let ga = problem.component_gradient(i, x_tilde)?;
    Ok(combine_reduced(v_tilde, &gy, &ga, q.prob(i), problem.n()))
}

/// Iterates carried between inner steps.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerState {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub x_tilde: Vec<f64>,
    pub v_tilde: Vec<f64>,
}

/// Everything computed in one inner step.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerStep {
    pub stage: usize,
    pub step: usize,
    pub index: usize,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub x: Vec<f64>,
}

/// Algorithm state that does not change during a run.
pub struct Asmd<'a> {
    problem: &'a FiniteSumProblem,
    config: AsmdConfig,
    sampling: SamplingDistribution,
    constants: LipschitzSummary,
}

/// Bounds on `P(x)`; exact except for the overlapping group penalty.
fn penalty_bounds(reg: &Regularizer, x: &[f64]) -> Result<(f64, f64)> {
    match reg {
        Regularizer::OverlapGroup { lambda, groups } if *lambda > 0.0 => {
            let v = overlap::overlap_penalty_value(x, groups, overlap::OVERLAP_VALUE_TOLERANCE)?;
            Ok((lambda * v.lower_bound, lambda * v.value))
        }
        _ => {
            let v = reg.value(x);
            Ok((v, v))
        }
    }
}

impl<'a> Asmd<'a> {
    pub fn new(problem: &'a FiniteSumProblem, config: AsmdConfig) -> Result<Self> {
        config.validate(problem)?;
        let lipschitz = problem.lipschitz_constants();
        let sampling = config.sampling.build(&lipschitz)?;
        let constants = crate::problem::lipschitz_summary(&lipschitz, &sampling, config.schedule.alpha3())?;
        if !(constants.combined > 0.0) || !constants.combined.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "combined Lipschitz constant {} must be positive and finite",
                constants.combined
            )));
        }
        Ok(Asmd { problem, config, sampling, constants })
    }

    pub fn constants(&self) -> LipschitzSummary {
        self.constants
    }

    pub fn sampling(&self) -> &SamplingDistribution {
        &self.sampling
    }

    pub fn config(&self) -> &AsmdConfig {
        &self.config
    }

    fn prox(&self, v: &[f64], theta: f64, anchor: &[f64], generator: Generator, epsilon: f64) -> Result<Vec<f64>> {
        let req = ProxRequest {
            v,
            theta,
            anchor,
            generator,
            regularizer: self.problem.regularizer(),
            constraint: &self.config.constraint,
            epsilon,
        };
        Ok(prox::solve(&req)?.point)
    }

    /// One inner step `k` of stage `s`, updating `state.x` and `state.z`.
    pub fn inner_step(
        &self,
        state: &mut InnerState,
        stage: usize,
        step: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<InnerStep> {
        let a = self.config.schedule.at(stage);
        let lbar = self.constants.combined;
        let eps = self.config.epsilon.at(stage);

        let index = self.sampling.sample(rng);
        let y = linalg::combine3(a.alpha1, &state.x, a.alpha2, &state.z, a.alpha3, &state.x_tilde);
        let mut gy = vec![0.0; y.len()];
        let mut ga = vec![0.0; y.len()];
        self.problem.component_gradient_into(index, &y, &mut gy)?;
        self.problem.component_gradient_into(index, &state.x_tilde, &mut ga)?;
        let v = combine_reduced(&state.v_tilde, &gy, &ga, self.sampling.prob(index), self.problem.n());

        let theta = a.alpha2 * lbar;
        let z = self.prox(&v, theta, &state.z, self.config.generator, eps)?;
        let x_hat = linalg::combine3(a.alpha1, &state.x, a.alpha2, &z, a.alpha3, &state.x_tilde);
        let x = match self.config.x_update {
            XUpdate::Interpolated => x_hat.clone(),
            XUpdate::ProxStep => self.prox(&v, lbar, &y, Generator::Euclidean, eps)?,
            XUpdate::Blend(l) => {
                let second = self.prox(&v, lbar, &y, Generator::Euclidean, eps)?;
                x_hat.iter().zip(&second).map(|(h, p)| l * h + (1.0 - l) * p).collect()
            }
        };
        if !linalg::all_finite(&x) || !linalg::all_finite(&z) {
            return Err(Error::NonFinite(format!("iterate at stage {stage}, step {step}")));
        }
        if self.config.verify_steps {
            self.verify_descent(&v, &y, &x, &x_hat, eps, stage, step)?;
        }
        state.x.clone_from(&x);
        state.z.clone_from(&z);
        Ok(InnerStep { stage, step, index, y, v, z, x_hat, x })
    }

    /// `⟨v, x⟩ + (L̄/2)‖x − y‖² + P(x) ≤` the same at `x̂`, allowing the prox
    /// tolerance and the penalty-evaluation slack.
    #[allow(clippy::too_many_arguments)]
    fn verify_descent(
        &self,
        v: &[f64],
        y: &[f64],
        x: &[f64],
        x_hat: &[f64],
        eps: f64,
        stage: usize,
        step: usize,
    ) -> Result<()> {
        if self.config.x_update == XUpdate::Interpolated {
            return Ok(());
        }
        let lbar = self.constants.combined;
        let model = |p: &[f64]| linalg::dot(v, p) + 0.5 * lbar * linalg::dist_sq(p, y);
        let (lhs_lo, _) = penalty_bounds(self.problem.regularizer(), x)?;
        let (_, rhs_hi) = penalty_bounds(self.problem.regularizer(), x_hat)?;
        let lhs = model(x) + lhs_lo;
        let rhs = model(x_hat) + rhs_hi;
        let tol = 1e-9 * (1.0 + rhs.abs()) + eps;
        if lhs > rhs + tol {
            return Err(Error::StepConditionViolated { stage, step, lhs, rhs });
        }
        Ok(())
    }

    pub fn run(&self, start: &StartPoint) -> Result<SolverTrace> {
        self.run_observed(start, |_| {})
    }

    /// Runs all stages, calling `observer` after every inner step.
    pub fn run_observed(&self, start: &StartPoint, mut observer: impl FnMut(&InnerStep)) -> Result<SolverTrace> {
        let problem = self.problem;
        let d = problem.dim();
        check_dim(d, start.x_tilde.len())?;
        check_dim(d, start.x.len())?;
        check_dim(d, start.z.len())?;
        for (name, p) in [("x_tilde", &start.x_tilde), ("x", &start.x), ("z", &start.z)] {
            if !problem.regularizer().contains(p)
                || !self.config.constraint.contains(p, crate::problem::DOMAIN_TOLERANCE)
            {
                return Err(Error::OutsideDomain(format!("initial {name} is infeasible")));
            }
        }

        let clock = Instant::now();
        let n = problem.n();
        let m = self.config.inner_steps;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut trace = SolverTrace::new(self.solver_name(), n);
        if !self.config.inexact_rate_hypotheses_met() {
            trace
                .notes
                .push("inexact rate hypotheses unmet: needs an L_h-smooth generator and summable prox errors".into());
        }

        let mut grads: u64 = 0;
        let mut max_z = linalg::norm(&start.z);
        let mut x_tilde = start.x_tilde.clone();
        let mut objective = problem.objective_value(&x_tilde)?;
        trace.records.push(self.record(0, grads, objective, max_z, &clock));

        let mut state =
            InnerState { x: start.x.clone(), z: start.z.clone(), x_tilde: x_tilde.clone(), v_tilde: Vec::new() };
        for s in 1..=self.config.stages {
            state.v_tilde = problem.full_gradient(&x_tilde)?;
            state.x_tilde.clone_from(&x_tilde);
            grads += n as u64;

            let mut sum = vec![0.0; d];
            let mut best: Option<(f64, Vec<f64>)> = None;
            for k in 1..=m {
                let step = self.inner_step(&mut state, s, k, &mut rng)?;
                grads += 2;
                max_z = max_z.max(linalg::norm(&step.z));
                match self.config.stage_rule {
                    StageRule::Average => {
                        for (acc, xi) in sum.iter_mut().zip(&step.x) {
                            *acc += xi;
                        }
                    }
                    StageRule::Best => {
                        let f = problem.objective_value(&step.x)?;
                        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                            best = Some((f, step.x.clone()));
                        }
                    }
                }
                observer(&step);
            }
            match self.config.stage_rule {
                StageRule::Average => {
                    let mf = m as f64;
                    x_tilde = sum.iter().map(|v| v / mf).collect();
                    objective = problem.objective_value(&x_tilde)?;
                }
                StageRule::Best => {
                    let (f, x) = best.expect("at least one inner step");
                    x_tilde = x;
                    objective = f;
                }
            }
            if !linalg::all_finite(&x_tilde) {
                return Err(Error::NonFinite(format!("stage point at stage {s}")));
            }
            trace.records.push(self.record(s, grads, objective, max_z, &clock));
        }
        trace.final_point = x_tilde;
        Ok(trace)
    }

    fn solver_name(&self) -> String {
        let variant = match self.config.x_update {
            XUpdate::Interpolated => "I".to_string(),
            XUpdate::ProxStep => "II".to_string(),
            XUpdate::Blend(l) => format!("blend({l})"),
        };
        format!("asmd-{variant}")
    }

    fn record(&self, stage: usize, grads: u64, objective: f64, max_z: f64, clock: &Instant) -> StageRecord {
        StageRecord {
            stage,
            gradient_evaluations: grads,
            objective,
            gap: self.config.reference_value.map(|r| floored_gap(objective, r)),
            original_objective: None,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            max_z_norm: max_z,
        }
    }
}

/// Convenience wrapper: build the solver and run it from `start`.
pub fn run(problem: &FiniteSumProblem, config: AsmdConfig, start: &StartPoint) -> Result<SolverTrace> {
    Asmd::new(problem, config)?.run(start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Component, SquaredLoss};

    fn toy(lambda: f64) -> FiniteSumProblem {
        let rows = [([1.0, 2.0], 1.0), ([0.5, -1.0], 0.0), ([2.0, 0.1], 3.0)];
        let comps: Vec<Box<dyn Component>> =
            rows.iter().map(|(a, b)| Box::new(SquaredLoss::new(a.to_vec(), *b)) as Box<dyn Component>).collect();
        FiniteSumProblem::new(comps, Regularizer::L1 { lambda }).unwrap()
    }

    #[test]
    fn zero_stages_only_records_start() {
        let p = toy(0.1);
        let t = run(&p, AsmdConfig::new(3, 0, 1), &StartPoint::at(&[0.5, 0.5])).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.final_point, vec![0.5, 0.5]);
        assert_eq!(t.records[0].gradient_evaluations, 0);
    }

    #[test]
    fn gradient_count_per_stage() {
        let p = toy(0.1);
        let t = run(&p, AsmdConfig::new(4, 5, 1), &StartPoint::at(&[0.0, 0.0])).unwrap();
        for r in &t.records {
            assert_eq!(r.gradient_evaluations, r.stage as u64 * (3 + 2 * 4));
        }
        assert_eq!(p.gradient_evaluations(), 5 * (3 + 8));
    }

    #[test]
    fn reduced_gradient_at_anchor_is_full_gradient() {
        let p = toy(0.0);
        let q = SamplingDistribution::uniform(3).unwrap();
        let x = [0.3, -0.2];
        let vt = p.full_gradient(&x).unwrap();
        for i in 0..3 {
            assert_eq!(reduced_gradient(&p, &x, &x, &vt, i, &q).unwrap(), vt);
        }
    }

    #[test]
    fn invalid_blend_rejected() {
        let p = toy(0.1);
        let mut c = AsmdConfig::new(2, 1, 0);
        c.x_update = XUpdate::Blend(1.5);
        assert!(Asmd::new(&p, c).is_err());
        let mut c = AsmdConfig::new(0, 1, 0);
        c.x_update = XUpdate::ProxStep;
        assert!(Asmd::new(&p, c).is_err());
    }

    #[test]
    fn infeasible_start_rejected() {
        let p = toy(0.1);
        let mut c = AsmdConfig::new(2, 1, 0);
        c.constraint = ConstraintSet::cube(0.0, 1.0, 2);
        assert!(matches!(run(&p, c, &StartPoint::at(&[2.0, 0.0])), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn fixed_epsilon_flags_unmet_hypotheses() {
        let mut c = AsmdConfig::new(2, 1, 0);
        assert!(c.inexact_rate_hypotheses_met());
        c.epsilon = EpsilonSchedule::Fixed(1e-3);
        assert!(!c.inexact_rate_hypotheses_met());
        c.epsilon = EpsilonSchedule::Power { initial: 1e-3, exponent: 4.0 };
        assert!(c.inexact_rate_hypotheses_met());
        c.generator = Generator::Entropy;
        assert!(!c.inexact_rate_hypotheses_met());
    }
}
