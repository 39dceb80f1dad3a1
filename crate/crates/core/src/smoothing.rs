//! Smooth surrogates for nonsmooth convex terms.
//!
//! A surrogate `f_μ` of `f` comes with constants `(K̲, K̄)` such that
//! `f_μ − K̲μ ≤ f ≤ f_μ + K̄μ`. The scalar smoothers of `[x]_+` lie above it
//! (`K̄ = 0`), the smoothed max-type functions lie below it (`K̲ = 0`).

use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::problem::Component;

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("smoothing parameter mu = {mu} must be positive")))
    }
}

/// Sandwich constants: `f_μ − lower·μ ≤ f ≤ f_μ + upper·μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sandwich {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherKind {
    /// `½(x + √(x² + 4μ²))`
    Sqrt,
    /// `μ log(1 + e^{x/μ})`
    Neural,
}

/// A smooth upper approximation of `[x]_+ = max{x, 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSmoother {
    kind: SmootherKind,
    mu: f64,
}

impl ScalarSmoother {
    pub fn new(kind: SmootherKind, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        Ok(ScalarSmoother { kind, mu })
    }

    pub fn kind(&self) -> SmootherKind {
        self.kind
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `f_μ(x)` and `f_μ'(x)`.
    pub fn value_grad(&self, x: f64) -> (f64, f64) {
        let mu = self.mu;
        match self.kind {
            SmootherKind::Sqrt => {
                let h = x.hypot(2.0 * mu);
                // x + h cancels for x ≪ 0; use (h² − x²)/(h − x) there
                let value = if x >= 0.0 { 0.5 * (x + h) } else { 2.0 * mu * mu / (h - x) };
                (value, value / h)
            }
            SmootherKind::Neural => {
                let t = x / mu;
                let e = (-t.abs()).exp();
                let value = mu * (t.max(0.0) + e.ln_1p());
                let grad = if t >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                (value, grad)
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.value_grad(x).0
    }

    /// Lipschitz constant of `f_μ'`.
    pub fn lipschitz(&self) -> f64 {
        0.25 / self.mu
    }

    /// `0 ≤ f_μ − [x]_+ ≤ K̲μ` with `K̲ = 1` (sqrt) or `log 2` (neural).
    pub fn sandwich(&self) -> Sandwich {
        let lower = match self.kind {
            SmootherKind::Sqrt => 1.0,
            SmootherKind::Neural => std::f64::consts::LN_2,
        };
        Sandwich { lower, upper: 0.0 }
    }
}

/// A smoothed term together with the nonsmooth function it approximates.
pub trait SmoothedComponent: Component {
    fn original_value(&self, x: &[f64]) -> f64;
    fn sandwich(&self) -> Sandwich;
    fn mu(&self) -> f64;
}

/// `f_μ(1 − b⟨a, x⟩)`, the smoothed hinge loss `max{1 − b⟨a, x⟩, 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedHinge {
    a: Vec<f64>,
    b: f64,
    smoother: ScalarSmoother,
    lipschitz: f64,
}

impl SmoothedHinge {
    pub fn new(a: Vec<f64>, b: f64, smoother: ScalarSmoother) -> Self {
        let lipschitz = b * b * linalg::norm_sq(&a) * smoother.lipschitz();
        SmoothedHinge { a, b, smoother, lipschitz }
    }

    fn margin(&self, x: &[f64]) -> f64 {
        1.0 - self.b * linalg::dot(&self.a, x)
    }
}

impl Component for SmoothedHinge {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.smoother.value(self.margin(x))
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let (_, d) = self.smoother.value_grad(self.margin(x));
        let c = -self.b * d;
        for (o, a) in out.iter_mut().zip(&self.a) {
            *o = c * a;
        }
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

impl SmoothedComponent for SmoothedHinge {
    fn original_value(&self, x: &[f64]) -> f64 {
        self.margin(x).max(0.0)
    }

    fn sandwich(&self) -> Sandwich {
        self.smoother.sandwich()
    }

    fn mu(&self) -> f64 {
        self.smoother.mu()
    }
}

/// Constants of a smoothed max-type function
/// `ĝ_μ(x) = max_{z∈Z} g(x, z) − μR(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConstants {
    /// Strong convexity of `R`.
    pub a: f64,
    /// Lipschitz constant of `∇₁g` in `x`.
    pub a1: f64,
    /// Lipschitz constant of `∇₁g` in `z`.
    pub a2: f64,
    /// `K̄ = max_Z R` (with `R ≥ 0`).
    pub r_max: f64,
}

impl SmoothingConstants {
    /// `2A₂²/(μa) + A₁`.
    pub fn smoothed_lipschitz(&self, mu: f64) -> f64 {
        2.0 * self.a2 * self.a2 / (mu * self.a) + self.a1
    }
}

/// Value, gradient and inner maximiser of a smoothed max-type function.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub z_star: Vec<f64>,
}

/// `ĝ_μ` for a function `g(x, z)` convex in `x` and concave in `z`, with a
/// closed-form inner maximiser.
pub trait SmoothedMax: Send + Sync {
    fn dim(&self) -> usize;
    fn mu(&self) -> f64;
    fn constants(&self) -> SmoothingConstants;
    /// The unique maximiser of `g(x, ·) − μR(·)`.
    fn z_star(&self, x: &[f64]) -> Vec<f64>;
    fn coupling(&self, x: &[f64], z: &[f64]) -> f64;
    /// `∇₁g(x, z)` into `out`.
    fn coupling_gradient_into(&self, x: &[f64], z: &[f64], out: &mut [f64]);
    fn prox_function(&self, z: &[f64]) -> f64;
    /// `max_Z g(x, ·)`, the nonsmooth function being approximated.
    fn original_value(&self, x: &[f64]) -> f64;

    /// `ĝ_μ(x) = g(x, z*) − μR(z*)` and `∇ĝ_μ(x) = ∇₁g(x, z*)`.
    fn evaluate(&self, x: &[f64]) -> SmoothedEval {
        let z_star = self.z_star(x);
        let value = self.coupling(x, &z_star) - self.mu() * self.prox_function(&z_star);
        let mut gradient = vec![0.0; self.dim()];
        self.coupling_gradient_into(x, &z_star, &mut gradient);
        SmoothedEval { value, gradient, z_star }
    }

    /// Smoothness constant of `ĝ_μ`. Instances may override this with a
    /// sharper, documented bound.
    fn smoothed_lipschitz(&self) -> f64 {
        self.constants().smoothed_lipschitz(self.mu())
    }
}

/// `g(x, z) = z·t(x)` on `z ∈ [0, 1]` with `t(x) = c − ⟨d, x⟩` and `R = ½z²`,
/// smoothing `[t(x)]_+`. With `c = 1`, `d = b a` this is the hinge loss.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxQuadraticMax {
    d: Vec<f64>,
    c: f64,
    mu: f64,
}

impl BoxQuadraticMax {
    pub fn new(d: Vec<f64>, c: f64, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        if d.is_empty() {
            return Err(Error::InvalidArgument("empty coupling vector".into()));
        }
        Ok(BoxQuadraticMax { d, c, mu })
    }

    pub fn hinge(a: &[f64], b: f64, mu: f64) -> Result<Self> {
        Self::new(a.iter().map(|ai| b * ai).collect(), 1.0, mu)
    }

    pub fn t(&self, x: &[f64]) -> f64 {
        self.c - linalg::dot(&self.d, x)
    }

    /// Closed form in the scalar `t`: `(ĝ, z*)`.
    pub fn value_at_t(t: f64, mu: f64) -> (f64, f64) {
        let z = (t / mu).clamp(0.0, 1.0);
        (z * t - 0.5 * mu * z * z, z)
    }
}

impl SmoothedMax for BoxQuadraticMax {
    fn dim(&self) -> usize {
        self.d.len()
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn constants(&self) -> SmoothingConstants {
        SmoothingConstants { a: 1.0, a1: 0.0, a2: linalg::norm(&self.d), r_max: 0.5 }
    }

    fn z_star(&self, x: &[f64]) -> Vec<f64> {
        vec![Self::value_at_t(self.t(x), self.mu).1]
    }

    fn coupling(&self, x: &[f64], z: &[f64]) -> f64 {
        z[0] * self.t(x)
    }

    fn coupling_gradient_into(&self, _x: &[f64], z: &[f64], out: &mut [f64]) {
        for (o, di) in out.iter_mut().zip(&self.d) {
            *o = -z[0] * di;
        }
    }

    fn prox_function(&self, z: &[f64]) -> f64 {
        0.5 * z[0] * z[0]
    }

    fn original_value(&self, x: &[f64]) -> f64 {
        self.t(x).max(0.0)
    }
}

/// `g(x, z) = ⟨Mx + c, z⟩` on the probability simplex in `R^p` with
/// `R(z) = Σ z log z + log p`, smoothing `max_j (Mx + c)_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexEntropyMax {
    /// Row-major `p × dim`.
    m: Vec<f64>,
    c: Vec<f64>,
    dim: usize,
    mu: f64,
    spectral_norm: f64,
}

impl SimplexEntropyMax {
    pub fn new(m: Vec<f64>, c: Vec<f64>, dim: usize, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        let p = c.len();
        if p == 0 || dim == 0 {
            return Err(Error::InvalidArgument("simplex-entropy instance needs p, dim ≥ 1".into()));
        }
        check_dim(p * dim, m.len())?;
        if !linalg::all_finite(&m) || !linalg::all_finite(&c) {
            return Err(Error::NonFinite("simplex-entropy data".into()));
        }
        let spectral_norm = spectral_norm(&m, p, dim);
        Ok(SimplexEntropyMax { m, c, dim, mu, spectral_norm })
    }

    pub fn p(&self) -> usize {
        self.c.len()
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.m.chunks(self.dim).zip(&self.c).map(|(row, ci)| linalg::dot(row, x) + ci).collect()
    }
}

/// `softmax(u/μ)` with the max shift.
pub fn softmax(u: &[f64], mu: f64) -> Vec<f64> {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = u.iter().map(|ui| ((ui - max) / mu).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|wi| wi / total).collect()
}

/// `μ log Σ exp(u_j/μ)` with the max shift.
pub fn log_sum_exp(u: &[f64], mu: f64) -> f64 {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = u.iter().map(|ui| ((ui - max) / mu).exp()).sum();
    max + mu * s.ln()
}

/// Largest singular value of a row-major `rows × cols` matrix by power
/// iteration on `MᵀM`, capped by the Frobenius norm.
pub fn spectral_norm(m: &[f64], rows: usize, cols: usize) -> f64 {
    let frobenius = linalg::norm(m);
    if frobenius == 0.0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..cols).map(|j| 1.0 + 0.1 * j as f64 / cols as f64).collect();
    let mut estimate = 0.0;
    for _ in 0..10_000 {
        let mv: Vec<f64> = m.chunks(cols).map(|row| linalg::dot(row, &v)).collect();
        let mut w = vec![0.0; cols];
        for (row, s) in m.chunks(cols).zip(&mv) {
            linalg::axpy(*s, row, &mut w);
        }
        let nw = linalg::norm(&w);
        if nw == 0.0 {
            break;
        }
        let next = (nw / linalg::norm(&v)).sqrt();
        v = w.iter().map(|wi| wi / nw).collect();
        let done = (next - estimate).abs() <= 1e-15 * next;
        estimate = next;
        if done {
            break;
        }
    }
    debug_assert!(rows * cols == m.len());
    // power iteration approaches from below; a relative pad keeps it an upper bound
    (estimate * (1.0 + 1e-10)).min(frobenius)
}

impl SmoothedMax for SimplexEntropyMax {
    fn dim(&self) -> usize {
        self.dim
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    /// Negative entropy is 1-strongly convex on the simplex in `‖·‖₁`, hence
    /// in `‖·‖₂`; `∇₁g = Mᵀz` is `‖M‖₂`-Lipschitz in `z`.
    fn constants(&self) -> SmoothingConstants {
        SmoothingConstants { a: 1.0, a1: 0.0, a2: self.spectral_norm, r_max: (self.p() as f64).ln() }
    }

    fn z_star(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.scores(x), self.mu)
    }

    fn coupling(&self, x: &[f64], z: &[f64]) -> f64 {
        linalg::dot(&self.scores(x), z)
    }

    fn coupling_gradient_into(&self, _x: &[f64], z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (row, zj) in self.m.chunks(self.dim).zip(z) {
            linalg::axpy(*zj, row, out);
        }
    }

    fn prox_function(&self, z: &[f64]) -> f64 {
        let ent: f64 = z.iter().filter(|zi| **zi > 0.0).map(|zi| zi * zi.ln()).sum();
        ent + (self.p() as f64).ln()
    }

    fn original_value(&self, x: &[f64]) -> f64 {
        self.scores(x).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// The closed form `μ LSE(u/μ) − μ log p`, which avoids `0·log 0` issues.
    fn evaluate(&self, x: &[f64]) -> SmoothedEval {
        let u = self.scores(x);
        let z_star = softmax(&u, self.mu);
        let value = log_sum_exp(&u, self.mu) - self.mu * (self.p() as f64).ln();
        let mut gradient = vec![0.0; self.dim];
        self.coupling_gradient_into(x, &z_star, &mut gradient);
        SmoothedEval { value, gradient, z_star }
    }
}

/// Exposes a shared [`SmoothedMax`] as a finite-sum component with
/// `L = smoothed_lipschitz`.
#[derive(Clone)]
pub struct SmoothedMaxComponent(pub Arc<dyn SmoothedMax>);

impl Component for SmoothedMaxComponent {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.0.evaluate(x).value
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let z = self.0.z_star(x);
        self.0.coupling_gradient_into(x, &z, out);
    }

    fn lipschitz(&self) -> f64 {
        self.0.smoothed_lipschitz()
    }
}

impl SmoothedComponent for SmoothedMaxComponent {
    fn original_value(&self, x: &[f64]) -> f64 {
        self.0.original_value(x)
    }

    fn sandwich(&self) -> Sandwich {
        Sandwich { lower: 0.0, upper: self.0.constants().r_max }
    }

    fn mu(&self) -> f64 {
        self.0.mu()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_examples() {
        let s = ScalarSmoother::new(SmootherKind::Sqrt, 0.5).unwrap();
        assert_eq!(s.value_grad(0.0), (0.5, 0.5));
        let n = ScalarSmoother::new(SmootherKind::Neural, 1.0).unwrap();
        let (v, d) = n.value_grad(0.0);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(d, 0.5);
        assert!(ScalarSmoother::new(SmootherKind::Sqrt, 0.0).is_err());
        assert!(ScalarSmoother::new(SmootherKind::Neural, -1.0).is_err());
    }

    #[test]
    fn sqrt_smoother_at_three() {
        // √9.04 = 3.00665927567458...; value = (3 + √9.04)/2
        let s = ScalarSmoother::new(SmootherKind::Sqrt, 0.1).unwrap();
        let v = s.value(3.0);
        assert!((v - 3.003_329_637_837_29).abs() < 1e-13);
        assert!((3.0..=3.1).contains(&v));
    }

    #[test]
    fn tails_are_stable() {
        for kind in [SmootherKind::Sqrt, SmootherKind::Neural] {
            let s = ScalarSmoother::new(kind, 1e-3).unwrap();
            let (v, d) = s.value_grad(-1e6);
            assert!((0.0..1e-9).contains(&v) && (0.0..1e-9).contains(&d), "{kind:?}: {v} {d}");
            let (v, d) = s.value_grad(1e6);
            assert!(v >= 1e6 && (d - 1.0).abs() < 1e-9, "{kind:?}");
        }
    }

    #[test]
    fn hinge_component_at_zero_margin() {
        let s = ScalarSmoother::new(SmootherKind::Neural, 0.2).unwrap();
        let h = SmoothedHinge::new(vec![1.0, 2.0], -1.0, s);
        let x = [-1.0, 0.0]; // 1 − b⟨a,x⟩ = 1 + (−1) = 0
        assert!((h.value(&x) - 0.2 * std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(h.gradient(&x), vec![0.5, 1.0]);
        assert!((h.lipschitz() - 5.0 / 0.8).abs() < 1e-15);
        let far = [-100.0, 0.0]; // margin −99
        assert!(h.value(&far) < 1e-100 && h.gradient(&far)[1].abs() < 1e-100);
    }

    #[test]
    fn hinge_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in [SmootherKind::Sqrt, SmootherKind::Neural] {
            for _ in 0..200 {
                let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let b = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mu = rng.random_range(0.05..1.0);
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let h = SmoothedHinge::new(a, b, ScalarSmoother::new(kind, mu).unwrap());
                let g = h.gradient(&x);
                let step = 1e-6 * (1.0 + linalg::norm(&x));
                let fd: Vec<f64> = (0..4)
                    .map(|j| {
                        let mut p = x.clone();
                        let mut m = x.clone();
                        p[j] += step;
                        m[j] -= step;
                        (h.value(&p) - h.value(&m)) / (2.0 * step)
                    })
                    .collect();
                let err = linalg::norm(&linalg::sub(&g, &fd));
                assert!(err <= 1e-6 * linalg::norm(&g).max(1e-3), "{err}");
            }
        }
    }

    #[test]
    fn box_quadratic_examples() {
        let b = BoxQuadraticMax::new(vec![1.0], 0.0, 1.0).unwrap();
        let e = b.evaluate(&[0.0]);
        assert_eq!((e.value, e.z_star[0]), (0.0, 0.0));
        let e = b.evaluate(&[-2.0]); // t = 2
        assert_eq!((e.value, e.z_star[0]), (1.5, 1.0));
        let e = b.evaluate(&[-0.5]); // interior branch: t²/(2μ)
        assert_eq!((e.value, e.z_star[0]), (0.125, 0.5));
    }

    #[test]
    fn entropy_smoothing_exact_at_ties() {
        let s = SimplexEntropyMax::new(vec![0.0; 6], vec![0.0; 3], 2, 0.3).unwrap();
        let e = s.evaluate(&[1.0, -1.0]);
        assert!(e.value.abs() < 1e-15);
        assert!(e.z_star.iter().all(|z| (z - 1.0 / 3.0).abs() < 1e-15));
        assert!(s.prox_function(&e.z_star).abs() < 1e-15);
    }

    #[test]
    fn smoothed_lipschitz_formula() {
        let c = SmoothingConstants { a: 1.0, a1: 0.0, a2: 3.0, r_max: 0.5 };
        assert_eq!(c.smoothed_lipschitz(0.5), 36.0);
        let c = SmoothingConstants { a: 2.0, a1: 0.7, a2: 3.0, r_max: 0.5 };
        assert!((c.smoothed_lipschitz(1e12) - 0.7).abs() < 1e-10);
    }

    #[test]
    fn spectral_norm_matches_known_values() {
        // diag(3, 1) plus a rotation-free padding row
        let m = [3.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        assert!((spectral_norm(&m, 3, 2) - 3.0).abs() < 1e-9);
        // rank one: ‖u vᵀ‖ = ‖u‖‖v‖
        let m = [1.0, 2.0, 2.0, 4.0];
        assert!((spectral_norm(&m, 2, 2) - 5.0).abs() < 1e-9);
        assert!(spectral_norm(&m, 2, 2) >= 5.0 - 1e-15);
    }
}
