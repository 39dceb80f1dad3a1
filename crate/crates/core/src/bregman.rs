//! Distance generating functions `h` and their Bregman distances
//! `D(x, y) = h(x) − h(y) − ⟨∇h(y), x − y⟩`.
//!
//! Every generator here is 1-strongly convex on its domain, so
//! `D(x, y) ≥ ½‖x − y‖²`.

use crate::error::{check_dim, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorDomain {
    FullSpace,
    /// The probability simplex; gradients need strictly positive coordinates.
    Simplex,
}

pub trait DistanceGenerator {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Lipschitz constant of `∇h`, or `None` when it is unbounded on the domain.
    fn smoothness(&self) -> Option<f64>;
    fn domain(&self) -> GeneratorDomain;

    fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        let gy = self.gradient(y)?;
        let diff = linalg::sub(x, y);
        Ok(self.value(x)? - self.value(y)? - linalg::dot(&gy, &diff))
    }
}

/// The two generators shipped with the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// `h(x) = ½‖x‖²`, giving `D(x, y) = ½‖x − y‖²`.
    Euclidean,
    /// `h(x) = Σ x_i log x_i` on the simplex, giving the KL divergence.
    Entropy,
}

fn check_nonnegative(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| *v < 0.0 || !v.is_finite()) {
        Some(i) => Err(Error::OutsideDomain(format!("entropy generator needs x_i >= 0, got x[{i}] = {}", x[i]))),
        None => Ok(()),
    }
}

fn check_positive(y: &[f64]) -> Result<()> {
    match y.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        Some(i) => Err(Error::OutsideDomain(format!("entropy generator needs y_i > 0, got y[{i}] = {}", y[i]))),
        None => Ok(()),
    }
}

fn xlogx(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v * v.ln()
    }
}

impl DistanceGenerator for Generator {
    fn value(&self, x: &[f64]) -> Result<f64> {
        match self {
            Generator::Euclidean => Ok(0.5 * linalg::norm_sq(x)),
            Generator::Entropy => {
                check_nonnegative(x)?;
                Ok(x.iter().map(|v| xlogx(*v)).sum())
            }
        }
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Generator::Euclidean => Ok(x.to_vec()),
            Generator::Entropy => {
                check_positive(x)?;
                Ok(x.iter().map(|v| v.ln() + 1.0).collect())
            }
        }
    }

    fn smoothness(&self) -> Option<f64> {
        match self {
            Generator::Euclidean => Some(1.0),
            Generator::Entropy => None,
        }
    }

    fn domain(&self) -> GeneratorDomain {
        match self {
            Generator::Euclidean => GeneratorDomain::FullSpace,
            Generator::Entropy => GeneratorDomain::Simplex,
        }
    }

    fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        match self {
            Generator::Euclidean => Ok(0.5 * linalg::dist_sq(x, y)),
            Generator::Entropy => {
                check_nonnegative(x)?;
                check_positive(y)?;
                // Σ x log(x/y) − x + y; the linear terms cancel on the simplex
                // but are kept so the identity holds off it as well.
                Ok(x.iter()
                    .zip(y)
                    .map(|(xi, yi)| {
                        let t = if *xi == 0.0 { 0.0 } else { xi * (xi / yi).ln() };
                        t - xi + yi
                    })
                    .sum())
            }
        }
    }
}

/// `|D(x,y) + D(y,z) − D(x,z) − ⟨x − y, ∇h(z) − ∇h(y)⟩|`, zero up to roundoff.
pub fn three_point_residual<G: DistanceGenerator + ?Sized>(gen: &G, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    check_dim(x.len(), z.len())?;
    let gz = gen.gradient(z)?;
    let gy = gen.gradient(y)?;
    let cross: f64 = x.iter().zip(y).zip(gz.iter().zip(&gy)).map(|((xi, yi), (a, b))| (xi - yi) * (a - b)).sum();
    Ok((gen.distance(x, y)? + gen.distance(y, z)? - gen.distance(x, z)? - cross).abs())
}
