//! Composite finite-sum problems `F(x) + P(x)` with `F = (1/n) Σ f_i`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::prox::overlap::{overlap_penalty_value, OverlapGroups, OVERLAP_VALUE_TOLERANCE};

/// One smooth convex term `f_i` of the finite sum.
pub trait Component: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Writes `∇f_i(x)` into `out` (overwriting it).
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);
    /// Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        g
    }
}

/// `f(x) = ½(⟨a, x⟩ − b)²`, smooth with constant `‖a‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredLoss {
    pub a: Vec<f64>,
    pub b: f64,
}

impl SquaredLoss {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        SquaredLoss { a, b }
    }

    fn residual(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.a, x) - self.b
    }
}

impl Component for SquaredLoss {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r = self.residual(x);
        0.5 * r * r
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let r = self.residual(x);
        for (o, a) in out.iter_mut().zip(&self.a) {
            *o = a * r;
        }
    }

    fn lipschitz(&self) -> f64 {
        linalg::norm_sq(&self.a)
    }
}

/// Closed convex feasible sets with cheap Euclidean projections.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Full,
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// The probability simplex `{x ≥ 0, Σx = 1}`.
    Simplex,
}

impl ConstraintSet {
    pub fn cube(lower: f64, upper: f64, dim: usize) -> Self {
        ConstraintSet::Box { lower: vec![lower; dim], upper: vec![upper; dim] }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, ConstraintSet::Full)
    }

    /// Membership with an absolute slack `tol` per constraint.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            ConstraintSet::Full => true,
            ConstraintSet::Box { lower, upper } => {
                x.len() == lower.len()
                    && x.iter().zip(lower.iter().zip(upper)).all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
            }
            ConstraintSet::Simplex => {
                x.iter().all(|v| *v >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol * x.len().max(1) as f64
            }
        }
    }
}

/// Convex lower semi-continuous regularizers `P` shipped with the library.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    L1 { lambda: f64 },
    Indicator(ConstraintSet),
    OverlapGroup { lambda: f64, groups: OverlapGroups },
}

/// Slack used when testing membership of indicator domains.
pub const DOMAIN_TOLERANCE: f64 = 1e-9;

impl Regularizer {
    /// `P(x)`, `+∞` outside the domain.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { lambda } => lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::Indicator(set) => {
                if set.contains(x, DOMAIN_TOLERANCE) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Regularizer::OverlapGroup { lambda, groups } => {
                if *lambda == 0.0 {
                    return 0.0;
                }
                match overlap_penalty_value(x, groups, OVERLAP_VALUE_TOLERANCE) {
                    Ok(v) => lambda * v.value,
                    Err(_) => f64::INFINITY,
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Regularizer::Indicator(set) => set.contains(x, DOMAIN_TOLERANCE),
            Regularizer::OverlapGroup { lambda, groups } => *lambda == 0.0 || groups.represents(x),
            _ => true,
        }
    }

    /// Whether the Euclidean prox of this regularizer is available in closed form.
    pub fn has_exact_prox(&self) -> bool {
        !matches!(self, Regularizer::OverlapGroup { .. })
    }
}

/// A probability vector `q` over component indices with inverse-CDF sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SamplingDistribution {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("sampling over zero components".into()));
        }
        Self::custom(vec![1.0 / n as f64; n])
    }

    /// `q_i = L_i / Σ_j L_j`, the choice that makes `L_Q = L_A`.
    pub fn lipschitz_proportional(lipschitz: &[f64]) -> Result<Self> {
        let total: f64 = lipschitz.iter().sum();
        if lipschitz.iter().any(|l| !(*l > 0.0)) || !total.is_finite() {
            return Err(Error::InvalidArgument("Lipschitz-proportional sampling needs every L_i > 0".into()));
        }
        Self::custom(lipschitz.iter().map(|l| l / total).collect())
    }

    pub fn custom(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty probability vector".into()));
        }
        if let Some(bad) = probs.iter().find(|q| !(**q > 0.0) || !q.is_finite()) {
            return Err(Error::InvalidArgument(format!("sampling probabilities must be positive, found {bad}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("sampling probabilities sum to {total}, not 1")));
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for q in &probs {
            acc += q;
            cumulative.push(acc);
        }
        Ok(SamplingDistribution { probs, cumulative })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Draws an index by inverting the cumulative distribution at one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.probs.len() - 1)
    }
}

/// The constants `L_A`, `L_Q` and `L̄ = L_A + L_Q/α₃` that set the step sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzSummary {
    pub average: f64,
    pub sampled_max: f64,
    pub combined: f64,
}

pub fn lipschitz_summary(lipschitz: &[f64], q: &SamplingDistribution, alpha3: f64) -> Result<LipschitzSummary> {
    check_dim(lipschitz.len(), q.len())?;
    if !(alpha3 > 0.0 && alpha3 < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha3 = {alpha3} not in (0, 1)")));
    }
    let n = lipschitz.len() as f64;
    let mut sum = 0.0;
    let mut sampled_max: f64 = 0.0;
    for (l, qi) in lipschitz.iter().zip(q.probs()) {
        if *qi <= 0.0 {
            return Err(Error::InvalidArgument("sampling probability must be positive".into()));
        }
        sum += l;
        sampled_max = sampled_max.max(l / (qi * n));
    }
    let average = sum / n;
    Ok(LipschitzSummary { average, sampled_max, combined: average + sampled_max / alpha3 })
}

/// `min F(x) + P(x)` with `F = (1/n) Σ f_i`, plus an exact gradient-evaluation counter.
pub struct FiniteSumProblem {
    components: Vec<Box<dyn Component>>,
    regularizer: Regularizer,
    dim: usize,
    grad_evals: AtomicU64,
}

impl std::fmt::Debug for FiniteSumProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FiniteSumProblem")
            .field("n", &self.components.len())
            .field("dim", &self.dim)
            .field("regularizer", &self.regularizer)
            .finish()
    }
}

impl FiniteSumProblem {
    pub fn new(components: Vec<Box<dyn Component>>, regularizer: Regularizer) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("a finite sum needs at least one component".into()))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::InvalidArgument("zero-dimensional component".into()));
        }
        for c in &components {
            check_dim(dim, c.dim())?;
        }
        match &regularizer {
            Regularizer::Indicator(ConstraintSet::Box { lower, upper }) => {
                check_dim(dim, lower.len())?;
                check_dim(dim, upper.len())?;
            }
            Regularizer::OverlapGroup { groups, .. } => check_dim(dim, groups.dim())?,
            _ => {}
        }
        Ok(FiniteSumProblem { components, regularizer, dim, grad_evals: AtomicU64::new(0) })
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn component(&self, i: usize) -> &dyn Component {
        self.components[i].as_ref()
    }

    pub fn lipschitz_constants(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.lipschitz()).collect()
    }

    /// Total component-gradient evaluations since construction or the last reset.
    pub fn gradient_evaluations(&self) -> u64 {
        self.grad_evals.load(Ordering::Relaxed)
    }

    pub fn reset_gradient_evaluations(&self) {
        self.grad_evals.store(0, Ordering::Relaxed);
    }

    /// `F(x) = (1/n) Σ f_i(x)`.
    pub fn smooth_value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.value(x);
        }
        Ok(acc / self.n() as f64)
    }

    /// `f^P(x) = F(x) + P(x)`; `+∞` outside `dom P`.
    pub fn objective_value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let p = self.regularizer.value(x);
        if p.is_infinite() {
            return Ok(f64::INFINITY);
        }
        Ok(self.smooth_value(x)? + p)
    }

    /// `∇F(x) = (1/n) Σ ∇f_i(x)`, summed in ascending index order. Costs `n` evaluations.
    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut sum = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        for c in &self.components {
            c.gradient_into(x, &mut g);
            for (s, gi) in sum.iter_mut().zip(&g) {
                *s += gi;
            }
        }
        self.grad_evals.fetch_add(self.n() as u64, Ordering::Relaxed);
        let n = self.n() as f64;
        for s in &mut sum {
            *s /= n;
        }
        Ok(sum)
    }

    /// `∇f_i(x)` into `out`. Costs one evaluation.
    pub fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, out.len())?;
        if i >= self.n() {
            return Err(Error::InvalidArgument(format!("component index {i} out of range (n = {})", self.n())));
        }
        self.components[i].gradient_into(x, out);
        self.grad_evals.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    pub fn component_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.dim];
        self.component_gradient_into(i, x, &mut g)?;
        Ok(g)
    }

    pub fn lipschitz_summary(&self, q: &SamplingDistribution, alpha3: f64) -> Result<LipschitzSummary> {
        lipschitz_summary(&self.lipschitz_constants(), q, alpha3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lasso(rows: &[(&[f64], f64)], lambda: f64) -> FiniteSumProblem {
        let comps: Vec<Box<dyn Component>> =
            rows.iter().map(|(a, b)| Box::new(SquaredLoss::new(a.to_vec(), *b)) as Box<dyn Component>).collect();
        FiniteSumProblem::new(comps, Regularizer::L1 { lambda }).unwrap()
    }

    #[test]
    fn full_gradient_single_sample() {
        let p = lasso(&[(&[1.0, 0.0], 0.0)], 0.1);
        assert_eq!(p.full_gradient(&[2.0, 5.0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(p.gradient_evaluations(), 1);
    }

    #[test]
    fn full_gradient_vanishes_at_interpolation_point() {
        // b_i = <a_i, x> for x = (1, -2)
        let p = lasso(&[(&[1.0, 1.0], -1.0), (&[2.0, 0.5], 1.0), (&[0.0, 3.0], -6.0)], 0.0);
        let g = p.full_gradient(&[1.0, -2.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn full_gradient_rejects_wrong_dimension() {
        let p = lasso(&[(&[1.0, 0.0], 0.0)], 0.1);
        assert_eq!(p.full_gradient(&[1.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn objective_value_examples() {
        let p = lasso(&[(&[1.0, 0.0], 1.0)], 0.1);
        assert!((p.objective_value(&[1.0, 0.0]).unwrap() - 0.1).abs() < 1e-15);

        let comps: Vec<Box<dyn Component>> = vec![Box::new(SquaredLoss::new(vec![1.0, 1.0], 0.0))];
        let boxed = FiniteSumProblem::new(comps, Regularizer::Indicator(ConstraintSet::cube(0.0, 1.0, 2))).unwrap();
        assert_eq!(boxed.objective_value(&[2.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(boxed.objective_value(&[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn lipschitz_summary_examples() {
        let l = [1.0, 3.0];
        let uniform = SamplingDistribution::uniform(2).unwrap();
        let s = lipschitz_summary(&l, &uniform, 0.5).unwrap();
        assert_eq!(s.average, 2.0);
        assert_eq!(s.sampled_max, 3.0);

        let prop = SamplingDistribution::custom(vec![0.25, 0.75]).unwrap();
        let s = lipschitz_summary(&l, &prop, 0.5).unwrap();
        assert_eq!(s.sampled_max, 2.0);
        assert_eq!(s.sampled_max, s.average);

        let prop = SamplingDistribution::lipschitz_proportional(&l).unwrap();
        assert_eq!(prop.probs(), &[0.25, 0.75]);

        // L_A = 2, L_Q = 3, α₃ = 1/3 gives L̄ = 2 + 9
        let s = lipschitz_summary(&l, &uniform, 1.0 / 3.0).unwrap();
        assert!((s.combined - 11.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_rejects_nonpositive_probabilities() {
        assert!(SamplingDistribution::custom(vec![0.0, 1.0]).is_err());
        assert!(SamplingDistribution::custom(vec![-0.5, 1.5]).is_err());
        assert!(SamplingDistribution::custom(vec![0.5, 0.6]).is_err());
        assert!(SamplingDistribution::lipschitz_proportional(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn sampling_frequencies_follow_q() {
        let q = SamplingDistribution::custom(vec![0.1, 0.6, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        let draws = 60_000;
        for _ in 0..draws {
            counts[q.sample(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(q.probs()) {
            assert!((*c as f64 / draws as f64 - p).abs() < 0.01);
        }
    }
}
