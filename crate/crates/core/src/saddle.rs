//! Specialised solver for `min_{x∈X} (1/n) Σ max_{z_i∈Z_i} g_i(x, z_i)`.
//!
//! Each max-type term is replaced by its smoothed version `ĝ_{μ,i}` and the
//! sum is minimised with the Euclidean, `ν = 2`, `α₃ = 1/3` instance of the
//! accelerated scheme:
//!
//! ```text
//! y = α₁ x + α₂ u + α₃ x̃,   v̄ = ṽ + (∇ĝ_i(y) − ∇ĝ_i(x̃)) / (q_i n)
//! u ← Π_X(u − v̄ / (α₂ L̄)),   x ← α₁ x + α₂ u + α₃ x̃
//! ```
//!
//! The projection is skipped when `X` is the whole space.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::asmd::{combine_reduced, AlphaSchedule, SamplingRule};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::problem::{lipschitz_summary, Component, ConstraintSet, FiniteSumProblem, Regularizer, DOMAIN_TOLERANCE};
use crate::prox;
use crate::smoothing::{SmoothedMax, SmoothedMaxComponent};
use crate::trace::{floored_gap, SolverTrace, StageRecord};

pub struct SaddleProblem {
    terms: Vec<Arc<dyn SmoothedMax>>,
    constraint: ConstraintSet,
    smoothed: FiniteSumProblem,
}

impl std::fmt::Debug for SaddleProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SaddleProblem")
            .field("n", &self.terms.len())
            .field("dim", &self.smoothed.dim())
            .field("constraint", &self.constraint)
            .finish()
    }
}

impl SaddleProblem {
    pub fn new(terms: Vec<Arc<dyn SmoothedMax>>, constraint: ConstraintSet) -> Result<Self> {
        let components: Vec<Box<dyn Component>> =
            terms.iter().map(|t| Box::new(SmoothedMaxComponent(Arc::clone(t))) as Box<dyn Component>).collect();
        let smoothed = FiniteSumProblem::new(components, Regularizer::Zero)?;
        if let ConstraintSet::Box { lower, upper } = &constraint {
            check_dim(smoothed.dim(), lower.len())?;
            check_dim(smoothed.dim(), upper.len())?;
        }
        Ok(SaddleProblem { terms, constraint, smoothed })
    }

    pub fn n(&self) -> usize {
        self.terms.len()
    }

    pub fn dim(&self) -> usize {
        self.smoothed.dim()
    }

    pub fn constraint(&self) -> &ConstraintSet {
        &self.constraint
    }

    /// The smoothed objective as an unconstrained finite sum with `P ≡ 0`.
    pub fn smoothed(&self) -> &FiniteSumProblem {
        &self.smoothed
    }

    /// `(1/n) Σ ĝ_{μ,i}(x)`.
    pub fn smoothed_value(&self, x: &[f64]) -> Result<f64> {
        self.smoothed.smooth_value(x)
    }

    /// `(1/n) Σ max_{z_i} g_i(x, z_i)`.
    pub fn original_value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.original_value(x);
        }
        Ok(acc / self.n() as f64)
    }

    /// Largest `μ max_Z R_i` over the terms, bounding the smoothing bias.
    pub fn smoothing_bias(&self) -> f64 {
        self.terms.iter().map(|t| t.mu() * t.constants().r_max).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleConfig {
    pub inner_steps: usize,
    pub stages: usize,
    pub seed: u64,
    pub sampling: SamplingRule,
    /// Optimal value of the smoothed problem, for gaps.
    pub reference_value: Option<f64>,
}

impl SaddleConfig {
    pub fn new(inner_steps: usize, stages: usize, seed: u64) -> Self {
        SaddleConfig { inner_steps, stages, seed, sampling: SamplingRule::Uniform, reference_value: None }
    }
}

/// One inner step's iterates, for observers.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleStep {
    pub stage: usize,
    pub step: usize,
    pub index: usize,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub x: Vec<f64>,
}

pub fn run_saddle(problem: &SaddleProblem, config: &SaddleConfig, x0: &[f64]) -> Result<SolverTrace> {
    run_saddle_observed(problem, config, x0, |_| {})
}

pub fn run_saddle_observed(
    problem: &SaddleProblem,
    config: &SaddleConfig,
    x0: &[f64],
    mut observer: impl FnMut(&SaddleStep),
) -> Result<SolverTrace> {
    if config.inner_steps == 0 {
        return Err(Error::InvalidArgument("inner_steps must be at least 1".into()));
    }
    let f = problem.smoothed();
    let (n, d, m) = (f.n(), f.dim(), config.inner_steps);
    check_dim(d, x0.len())?;
    if !problem.constraint.contains(x0, DOMAIN_TOLERANCE) {
        return Err(Error::OutsideDomain("initial point outside X".into()));
    }
    let schedule = AlphaSchedule::new(2.0, 1.0 / 3.0)?;
    let lipschitz = f.lipschitz_constants();
    let q = config.sampling.build(&lipschitz)?;
    let lbar = lipschitz_summary(&lipschitz, &q, schedule.alpha3())?.combined;
    if !(lbar > 0.0 && lbar.is_finite()) {
        return Err(Error::InvalidArgument(format!("combined Lipschitz constant {lbar} must be positive")));
    }

    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = SolverTrace::new("ccsaddle", n);
    let mut grads = 0u64;
    let mut x_tilde = x0.to_vec();
    let mut x = x0.to_vec();
    let mut u = x0.to_vec();
    let mut max_u = linalg::norm(&u);
    let record = |stage, grads, x_tilde: &[f64], max_u| -> Result<StageRecord> {
        let objective = problem.smoothed_value(x_tilde)?;
        Ok(StageRecord {
            stage,
            gradient_evaluations: grads,
            objective,
            gap: config.reference_value.map(|r| floored_gap(objective, r)),
            original_objective: Some(problem.original_value(x_tilde)?),
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            max_z_norm: max_u,
        })
    };
    trace.records.push(record(0, grads, &x_tilde, max_u)?);

    let mut gy = vec![0.0; d];
    let mut ga = vec![0.0; d];
    for s in 1..=config.stages {
        let a = schedule.at(s);
        let v_tilde = f.full_gradient(&x_tilde)?;
        grads += n as u64;
        let theta = a.alpha2 * lbar;
        let mut sum = vec![0.0; d];
        for k in 1..=m {
            let index = q.sample(&mut rng);
            let y = linalg::combine3(a.alpha1, &x, a.alpha2, &u, a.alpha3, &x_tilde);
            f.component_gradient_into(index, &y, &mut gy)?;
            f.component_gradient_into(index, &x_tilde, &mut ga)?;
            grads += 2;
            let v = combine_reduced(&v_tilde, &gy, &ga, q.prob(index), n);
            let step: Vec<f64> = u.iter().zip(&v).map(|(ui, vi)| ui - vi / theta).collect();
            u = prox::project(&step, &problem.constraint)?;
            x = linalg::combine3(a.alpha1, &x, a.alpha2, &u, a.alpha3, &x_tilde);
            if !linalg::all_finite(&x) {
                return Err(Error::NonFinite(format!("iterate at stage {s}, step {k}")));
            }
            max_u = max_u.max(linalg::norm(&u));
            for (acc, xi) in sum.iter_mut().zip(&x) {
                *acc += xi;
            }
            observer(&SaddleStep { stage: s, step: k, index, y, v, u: u.clone(), x: x.clone() });
        }
        let mf = m as f64;
        x_tilde = sum.iter().map(|v| v / mf).collect();
        trace.records.push(record(s, grads, &x_tilde, max_u)?);
    }
    trace.final_point = x_tilde;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asmd::{Asmd, AsmdConfig, StartPoint};
    use crate::smoothing::BoxQuadraticMax;

    fn hinge_problem(constraint: ConstraintSet) -> SaddleProblem {
        let rows = [([1.0, 0.5], 1.0), ([-0.3, 1.2], -1.0), ([0.8, -0.7], 1.0), ([0.2, 0.1], -1.0)];
        let terms: Vec<Arc<dyn SmoothedMax>> = rows
            .iter()
            .map(|(a, b)| Arc::new(BoxQuadraticMax::hinge(a, *b, 0.1).unwrap()) as Arc<dyn SmoothedMax>)
            .collect();
        SaddleProblem::new(terms, constraint).unwrap()
    }

    #[test]
    fn single_step_matches_straight_line_evaluation() {
        // n = 1, m = 1, S = 1: α = (0, 2/3, 1/3), so y = x₀ and v̄ = ∇ĝ(x₀).
        let term = BoxQuadraticMax::hinge(&[2.0, -1.0], 1.0, 0.5).unwrap();
        let p = SaddleProblem::new(vec![Arc::new(term.clone())], ConstraintSet::Full).unwrap();
        let x0 = [0.1, 0.2];
        let t = run_saddle(&p, &SaddleConfig::new(1, 1, 9), &x0).unwrap();

        // t(x₀) = 1 − 0 = 1 > μ, so z* = 1 and ∇ĝ = −(2, −1)
        let g = [-2.0, 1.0];
        let lbar = 4.0 * (2.0 * 5.0 / 0.5); // L + L/α₃ with L = 2‖d‖²/μ
        let theta = (2.0 / 3.0) * lbar;
        let u = [x0[0] - g[0] / theta, x0[1] - g[1] / theta];
        let x: Vec<f64> = (0..2).map(|j| (2.0 / 3.0) * u[j] + (1.0 / 3.0) * x0[j]).collect();
        for (got, want) in t.final_point.iter().zip(&x) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(t.records[1].gradient_evaluations, 3);
    }

    #[test]
    fn constant_terms_leave_iterates_fixed() {
        let terms: Vec<Arc<dyn SmoothedMax>> = (0..3)
            .map(|i| Arc::new(BoxQuadraticMax::new(vec![0.0, 0.0], i as f64, 1.0).unwrap()) as Arc<dyn SmoothedMax>)
            .collect();
        let p = SaddleProblem::new(terms, ConstraintSet::Full);
        // all-zero couplings have L̄ = 0, which the solver refuses
        assert!(run_saddle(&p.unwrap(), &SaddleConfig::new(2, 2, 0), &[0.3, 0.4]).is_err());

        let terms: Vec<Arc<dyn SmoothedMax>> = vec![
            Arc::new(BoxQuadraticMax::new(vec![1.0, 0.0], -100.0, 1.0).unwrap()),
            Arc::new(BoxQuadraticMax::new(vec![0.0, 1.0], -100.0, 1.0).unwrap()),
        ];
        // t ≪ 0 near the start, so z* = 0 and every gradient vanishes
        let p = SaddleProblem::new(terms, ConstraintSet::Full).unwrap();
        let t = run_saddle(&p, &SaddleConfig::new(3, 4, 0), &[0.3, 0.4]).unwrap();
        // α₁ + α₂ + α₃ = 1 only up to rounding
        assert!((t.final_point[0] - 0.3).abs() < 1e-15 && (t.final_point[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn agrees_bitwise_with_general_engine() {
        let p = hinge_problem(ConstraintSet::Full);
        let x0 = [0.2, -0.1];
        let mut ours = Vec::new();
        let t = run_saddle_observed(&p, &SaddleConfig::new(5, 3, 42), &x0, |s| ours.push(s.x.clone())).unwrap();

        let mut theirs = Vec::new();
        let mut c = AsmdConfig::new(5, 3, 42);
        c.verify_steps = false;
        let a = Asmd::new(p.smoothed(), c).unwrap();
        let t2 = a.run_observed(&StartPoint::at(&x0), |s| theirs.push(s.x.clone())).unwrap();
        assert_eq!(ours, theirs);
        assert_eq!(t.final_point, t2.final_point);
    }

    #[test]
    fn projected_iterates_stay_in_box() {
        let unit = ConstraintSet::cube(-0.05, 0.05, 2);
        let p = hinge_problem(unit.clone());
        let mut inside = true;
        run_saddle_observed(&p, &SaddleConfig::new(4, 10, 1), &[0.0, 0.0], |s| {
            inside &= unit.contains(&s.u, 0.0) && unit.contains(&s.x, 1e-15);
        })
        .unwrap();
        assert!(inside);
    }

    #[test]
    fn original_objective_bounded_by_smoothing_bias() {
        let p = hinge_problem(ConstraintSet::Full);
        let t = run_saddle(&p, &SaddleConfig::new(4, 20, 5), &[0.0, 0.0]).unwrap();
        for r in &t.records {
            let orig = r.original_objective.unwrap();
            assert!(r.objective <= orig + 1e-15 && orig <= r.objective + p.smoothing_bias() + 1e-15);
        }
    }
}
