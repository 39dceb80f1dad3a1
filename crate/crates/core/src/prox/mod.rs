//! Proximal steps `argmin_{x ∈ X} ⟨v, x⟩ + P(x) + θ D(x, z₀)`.
//!
//! Closed forms cover the Euclidean distance with `P ∈ {0, λ‖·‖₁, indicator}`
//! over the full space, a box or the simplex, and the entropy distance with
//! `P ≡ 0` on the simplex. The overlapping group penalty is handled inexactly
//! with a certified gap.

pub mod overlap;

use crate::bregman::Generator;
use crate::error::{check_dim, Error, Result};
use crate::problem::{ConstraintSet, Regularizer};

pub use overlap::{overlap_penalty_value, prox_overlap_group, OverlapGroups, OverlapValue};

#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub point: Vec<f64>,
    /// Upper bound on the prox-objective suboptimality of `point`.
    pub certified_gap: f64,
    pub inner_iterations: usize,
}

impl ProxResult {
    fn exact(point: Vec<f64>) -> Self {
        ProxResult { point, certified_gap: 0.0, inner_iterations: 0 }
    }
}

/// One prox subproblem. `epsilon` is the admissible suboptimality.
#[derive(Debug, Clone, Copy)]
pub struct ProxRequest<'a> {
    pub v: &'a [f64],
    pub theta: f64,
    pub anchor: &'a [f64],
    pub generator: Generator,
    pub regularizer: &'a Regularizer,
    pub constraint: &'a ConstraintSet,
    pub epsilon: f64,
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("prox weight theta = {theta} must be positive")))
    }
}

/// `z₀ − v/θ`, the unconstrained Euclidean minimiser.
fn gradient_step(v: &[f64], theta: f64, z0: &[f64]) -> Vec<f64> {
    z0.iter().zip(v).map(|(z, vi)| z - vi / theta).collect()
}

fn soft_threshold(w: f64, level: f64) -> f64 {
    if w > level {
        w - level
    } else if w < -level {
        w + level
    } else {
        0.0
    }
}

/// Exact minimiser of `⟨v, x⟩ + λ‖x‖₁ + (θ/2)‖x − z₀‖²`.
pub fn prox_l1(v: &[f64], theta: f64, z0: &[f64], lambda: f64) -> Result<ProxResult> {
    check_dim(z0.len(), v.len())?;
    check_theta(theta)?;
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("negative L1 weight {lambda}")));
    }
    let level = lambda / theta;
    let point = gradient_step(v, theta, z0).into_iter().map(|w| soft_threshold(w, level)).collect();
    Ok(ProxResult::exact(point))
}

/// Euclidean projection onto `set`.
pub fn project(point: &[f64], set: &ConstraintSet) -> Result<Vec<f64>> {
    match set {
        ConstraintSet::Full => Ok(point.to_vec()),
        ConstraintSet::Box { lower, upper } => {
            check_dim(lower.len(), point.len())?;
            check_dim(upper.len(), point.len())?;
            if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
                return Err(Error::InvalidArgument(format!(
                    "empty box: lower[{i}] = {} > upper[{i}] = {}",
                    lower[i], upper[i]
                )));
            }
            Ok(point.iter().zip(lower.iter().zip(upper)).map(|(p, (lo, hi))| p.clamp(*lo, *hi)).collect())
        }
        ConstraintSet::Simplex => Ok(project_simplex(point)),
    }
}

/// Projection onto `{x ≥ 0, Σx = 1}` by sorting.
pub fn project_simplex(point: &[f64]) -> Vec<f64> {
    let mut sorted = point.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (k, u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            shift = t;
        }
    }
    point.iter().map(|p| (p - shift).max(0.0)).collect()
}

/// Exact minimiser of `⟨v, x⟩ + (θ/2)‖x − z₀‖²` over `set`.
pub fn prox_indicator(v: &[f64], theta: f64, z0: &[f64], set: &ConstraintSet) -> Result<ProxResult> {
    check_dim(z0.len(), v.len())?;
    check_theta(theta)?;
    Ok(ProxResult::exact(project(&gradient_step(v, theta, z0), set)?))
}

/// Exact minimiser of `⟨v, x⟩ + θ KL(x, z₀)` over the simplex: `x ∝ z₀ exp(−v/θ)`.
pub fn prox_entropy_simplex(v: &[f64], theta: f64, z0: &[f64]) -> Result<ProxResult> {
    check_dim(z0.len(), v.len())?;
    check_theta(theta)?;
    if let Some(i) = z0.iter().position(|z| !(*z > 0.0)) {
        return Err(Error::OutsideDomain(format!(
            "entropy prox anchor must be in the simplex interior, z0[{i}] = {}",
            z0[i]
        )));
    }
    let logits: Vec<f64> = z0.iter().zip(v).map(|(z, vi)| z.ln() - vi / theta).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(ProxResult::exact(weights.iter().map(|w| w / total).collect()))
}

/// The single feasible set encoded by a regularizer/constraint pair, if any.
fn effective_set<'a>(regularizer: &'a Regularizer, constraint: &'a ConstraintSet) -> Result<&'a ConstraintSet> {
    match regularizer {
        Regularizer::Indicator(set) => {
            if constraint.is_full() || constraint == set {
                Ok(set)
            } else {
                Err(Error::Unsupported("indicator regularizer combined with a different constraint set".into()))
            }
        }
        _ => Ok(constraint),
    }
}

/// Whether [`solve`] supports this combination (independent of the data).
pub fn check_supported(
    generator: Generator,
    regularizer: &Regularizer,
    constraint: &ConstraintSet,
    epsilon_positive: bool,
) -> Result<()> {
    let set = effective_set(regularizer, constraint)?;
    match generator {
        Generator::Euclidean => match regularizer {
            Regularizer::OverlapGroup { .. } => {
                if !set.is_full() {
                    Err(Error::Unsupported("overlapping group prox is only available over the full space".into()))
                } else if !epsilon_positive {
                    Err(Error::Unsupported(
                        "overlapping group prox cannot be computed exactly; use a positive epsilon".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        },
        Generator::Entropy => match (regularizer, set) {
            (Regularizer::Zero | Regularizer::Indicator(_), ConstraintSet::Simplex) => Ok(()),
            (Regularizer::Zero, ConstraintSet::Full) => Ok(()),
            _ => Err(Error::Unsupported("the entropy distance is only supported with P = 0 on the simplex".into())),
        },
    }
}

/// Solves a prox request with the appropriate closed form or inexact solver.
pub fn solve(req: &ProxRequest<'_>) -> Result<ProxResult> {
    check_dim(req.anchor.len(), req.v.len())?;
    check_theta(req.theta)?;
    check_supported(req.generator, req.regularizer, req.constraint, req.epsilon > 0.0)?;
    let set = effective_set(req.regularizer, req.constraint)?;
    match req.generator {
        Generator::Entropy => prox_entropy_simplex(req.v, req.theta, req.anchor),
        Generator::Euclidean => match req.regularizer {
            Regularizer::Zero | Regularizer::Indicator(_) => prox_indicator(req.v, req.theta, req.anchor, set),
            Regularizer::L1 { lambda } => match set {
                ConstraintSet::Full => prox_l1(req.v, req.theta, req.anchor, *lambda),
                // separable: clamping the 1-D soft threshold is exact on a box
                ConstraintSet::Box { .. } => {
                    let r = prox_l1(req.v, req.theta, req.anchor, *lambda)?;
                    Ok(ProxResult::exact(project(&r.point, set)?))
                }
                // ‖x‖₁ = 1 on the simplex, so the penalty is constant there
                ConstraintSet::Simplex => prox_indicator(req.v, req.theta, req.anchor, set),
            },
            Regularizer::OverlapGroup { lambda, groups } => {
                prox_overlap_group(req.v, req.theta, req.anchor, *lambda, groups, req.epsilon)
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_example() {
        let r = prox_l1(&[-2.0, 0.5, 0.0], 1.0, &[0.0; 3], 1.0).unwrap();
        assert_eq!(r.point, vec![1.0, 0.0, 0.0]);
        assert_eq!(r.certified_gap, 0.0);
    }

    #[test]
    fn l1_identity_case() {
        let z0 = [0.3, -1.7, 4.0];
        assert_eq!(prox_l1(&[0.0; 3], 2.5, &z0, 0.0).unwrap().point, z0.to_vec());
    }

    #[test]
    fn l1_rejects_nonpositive_theta() {
        assert!(prox_l1(&[0.0], 0.0, &[0.0], 1.0).is_err());
        assert!(prox_l1(&[0.0], -1.0, &[0.0], 1.0).is_err());
    }

    #[test]
    fn indicator_examples() {
        let unit = ConstraintSet::cube(0.0, 1.0, 2);
        assert_eq!(prox_indicator(&[0.0, 0.0], 1.0, &[2.0, -1.0], &unit).unwrap().point, vec![1.0, 0.0]);
        assert_eq!(prox_indicator(&[0.0, 0.0], 1.0, &[0.25, 0.75], &unit).unwrap().point, vec![0.25, 0.75]);
        let s = prox_indicator(&[0.0, 0.0], 1.0, &[0.6, 0.6], &ConstraintSet::Simplex).unwrap().point;
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15);
        let empty = ConstraintSet::Box { lower: vec![1.0], upper: vec![0.0] };
        assert!(prox_indicator(&[0.0], 1.0, &[0.0], &empty).is_err());
    }

    #[test]
    fn simplex_projection_handles_vertices() {
        assert_eq!(project_simplex(&[5.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let p = project_simplex(&[0.2, 0.3, 0.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_prox_is_multiplicative() {
        let r = prox_entropy_simplex(&[0.0, 0.0], 1.0, &[0.3, 0.7]).unwrap();
        assert!((r.point[0] - 0.3).abs() < 1e-15);
        let r = prox_entropy_simplex(&[1.0, 0.0], 1.0, &[0.5, 0.5]).unwrap();
        let e = (-1.0f64).exp();
        assert!((r.point[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!(prox_entropy_simplex(&[0.0, 0.0], 1.0, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn dispatch_rejects_unsupported_pairs() {
        let l1 = Regularizer::L1 { lambda: 0.1 };
        assert!(check_supported(Generator::Entropy, &l1, &ConstraintSet::Simplex, false).is_err());
        let g = Regularizer::OverlapGroup { lambda: 0.1, groups: OverlapGroups::chain(3).unwrap() };
        assert!(check_supported(Generator::Euclidean, &g, &ConstraintSet::Full, false).is_err());
        assert!(check_supported(Generator::Euclidean, &g, &ConstraintSet::Full, true).is_ok());
        assert!(check_supported(Generator::Euclidean, &g, &ConstraintSet::cube(0.0, 1.0, 3), true).is_err());
    }

    #[test]
    fn l1_on_box_is_clamped_soft_threshold() {
        let set = ConstraintSet::cube(-0.5, 0.5, 2);
        let reg = Regularizer::L1 { lambda: 1.0 };
        let req = ProxRequest {
            v: &[-3.0, 0.2],
            theta: 1.0,
            anchor: &[0.0, 0.0],
            generator: Generator::Euclidean,
            regularizer: &reg,
            constraint: &set,
            epsilon: 0.0,
        };
        assert_eq!(solve(&req).unwrap().point, vec![0.5, 0.0]);
    }
}
