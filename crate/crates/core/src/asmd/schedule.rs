use crate::error::{Error, Result};

/// One stage's interpolation weights `(α₁, α₂, α₃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaTriple {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

/// `α₂,s = 2/(s + ν)`, `α₁,s = 1 − α₃ − α₂,s`, with `ν ≥ 2` and
/// `0 < α₃ ≤ (ν − 1)/(ν + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSchedule {
    nu: f64,
    alpha3: f64,
}

impl AlphaSchedule {
    pub fn new(nu: f64, alpha3: f64) -> Result<Self> {
        if !(nu >= 2.0) || !nu.is_finite() {
            return Err(Error::InvalidArgument(format!("nu = {nu} must be at least 2")));
        }
        let cap = (nu - 1.0) / (nu + 1.0);
        // a few ulps of slack so that e.g. α₃ = 1/3 with ν = 2 is accepted
        if !(alpha3 > 0.0) || alpha3 > cap * (1.0 + 4.0 * f64::EPSILON) {
            return Err(Error::InvalidArgument(format!(
                "alpha3 = {alpha3} must lie in (0, (nu-1)/(nu+1)] = (0, {cap}]"
            )));
        }
        Ok(AlphaSchedule { nu, alpha3 })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn alpha3(&self) -> f64 {
        self.alpha3
    }

    /// Weights for stage `s ≥ 1`.
    pub fn at(&self, s: usize) -> AlphaTriple {
        assert!(s >= 1, "stages are numbered from 1");
        let alpha2 = 2.0 / (s as f64 + self.nu);
        let mut alpha1 = (1.0 - self.alpha3) - alpha2;
        // exact zero (e.g. s = 1, ν = 2, α₃ = 1/3) can come out as ±1 ulp
        if alpha1.abs() <= 4.0 * f64::EPSILON {
            alpha1 = 0.0;
        }
        AlphaTriple { alpha1, alpha2, alpha3: self.alpha3 }
    }

    /// Slacks of the three schedule conditions at stage `s`:
    /// `(1 − α₁,s)/α₂,s² − α₃/α₂,s+1²`, `1/α₂,s² − (1 − α₂,s+1)/α₂,s+1²`
    /// (both must be ≥ 0) and `|α₁,s + α₂,s + α₃ − 1|`.
    pub fn condition_slacks(&self, s: usize) -> [f64; 3] {
        let a = self.at(s);
        let next = self.at(s + 1);
        let first = (1.0 - a.alpha1) / (a.alpha2 * a.alpha2) - a.alpha3 / (next.alpha2 * next.alpha2);
        let second = 1.0 / (a.alpha2 * a.alpha2) - (1.0 - next.alpha2) / (next.alpha2 * next.alpha2);
        let sum = (a.alpha1 + a.alpha2 + a.alpha3 - 1.0).abs();
        [first, second, sum]
    }
}

/// Per-stage prox accuracy `ε_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSchedule {
    Exact,
    Fixed(f64),
    /// `ε_s = initial / s^exponent`.
    Power {
        initial: f64,
        exponent: f64,
    },
}

impl EpsilonSchedule {
    pub fn at(&self, s: usize) -> f64 {
        match *self {
            EpsilonSchedule::Exact => 0.0,
            EpsilonSchedule::Fixed(e) => e,
            EpsilonSchedule::Power { initial, exponent } => initial / (s as f64).powf(exponent),
        }
    }

    pub fn is_exact(&self) -> bool {
        match *self {
            EpsilonSchedule::Exact => true,
            EpsilonSchedule::Fixed(e) => e == 0.0,
            EpsilonSchedule::Power { initial, .. } => initial == 0.0,
        }
    }

    /// Whether `Σ_s sqrt(ε_s / α₂,s)` converges (`α₂,s ~ 2/s`), which the
    /// inexact rate guarantee requires: true for exact runs and for
    /// power schedules with exponent above 3.
    pub fn is_summable(&self) -> bool {
        match *self {
            EpsilonSchedule::Exact => true,
            EpsilonSchedule::Fixed(e) => e == 0.0,
            EpsilonSchedule::Power { initial, exponent } => initial == 0.0 || exponent > 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            EpsilonSchedule::Exact => true,
            EpsilonSchedule::Fixed(e) => e >= 0.0 && e.is_finite(),
            EpsilonSchedule::Power { initial, exponent } => {
                initial >= 0.0 && initial.is_finite() && exponent.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid epsilon schedule {self:?}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: AlphaTriple, b: (f64, f64, f64)) -> bool {
        (a.alpha1 - b.0).abs() < 1e-15 && (a.alpha2 - b.1).abs() < 1e-15 && (a.alpha3 - b.2).abs() < 1e-15
    }

    #[test]
    fn alpha_examples() {
        let s = AlphaSchedule::new(2.0, 1.0 / 3.0).unwrap();
        assert!(close(s.at(1), (0.0, 2.0 / 3.0, 1.0 / 3.0)));
        assert_eq!(s.at(1).alpha1, 0.0);
        assert!(close(s.at(2), (1.0 / 6.0, 0.5, 1.0 / 3.0)));
        let s = AlphaSchedule::new(5.0, 2.0 / 3.0).unwrap();
        assert!(close(s.at(1), (0.0, 1.0 / 3.0, 2.0 / 3.0)));
    }

    #[test]
    fn schedule_validation() {
        assert!(AlphaSchedule::new(1.5, 0.2).is_err());
        assert!(AlphaSchedule::new(2.0, 0.0).is_err());
        assert!(AlphaSchedule::new(2.0, 0.4).is_err());
        assert!(AlphaSchedule::new(5.0, 2.0 / 3.0).is_ok());
        assert!(AlphaSchedule::new(5.0, 0.7).is_err());
    }

    #[test]
    fn epsilon_schedules() {
        assert_eq!(EpsilonSchedule::Exact.at(4), 0.0);
        assert_eq!(EpsilonSchedule::Fixed(1e-3).at(9), 1e-3);
        assert_eq!(EpsilonSchedule::Power { initial: 1e-3, exponent: 4.0 }.at(2), 1e-3 / 16.0);
        assert!(EpsilonSchedule::Power { initial: 1e-3, exponent: 3.5 }.is_summable());
        assert!(!EpsilonSchedule::Power { initial: 1e-3, exponent: 3.0 }.is_summable());
        assert!(!EpsilonSchedule::Fixed(1e-3).is_summable());
    }
}
