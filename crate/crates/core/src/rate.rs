//! Empirical convergence rates from solver traces.

use crate::error::{Error, Result};
use crate::trace::{SolverTrace, GAP_FLOOR};

/// Least-squares slope of `log gap` against `log stage`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 5 {
        return Err(Error::InvalidArgument(format!("need at least 5 points, got {}", points.len())));
    }
    if let Some((s, g)) = points.iter().find(|(s, g)| !(*s > 0.0) || !(*g > GAP_FLOOR)) {
        return Err(Error::InvalidArgument(format!(
            "stage {s} has gap {g:e}: gaps must be positive and above the floor (reference optimum too loose?)"
        )));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(s, g)| (s.ln(), g.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all stages in the window coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Slope over records with `first ≤ stage ≤ last`.
pub fn fit_rate(trace: &SolverTrace, first: usize, last: usize) -> Result<f64> {
    let mut points = Vec::new();
    for r in trace.records.iter().filter(|r| r.stage >= first && r.stage <= last) {
        let gap = r.gap.ok_or_else(|| Error::InvalidArgument(format!("stage {} has no gap", r.stage)))?;
        points.push((r.stage as f64, gap));
    }
    fit_slope(&points)
}

/// Like [`fit_rate`], but ends the window at the last stage whose gap is
/// still above `resolution`, the accuracy of the reference optimum. Gaps
/// below it measure the reference error, not the solver.
pub fn fit_rate_resolved(trace: &SolverTrace, first: usize, last: usize, resolution: f64) -> Result<f64> {
    let cut = trace
        .records
        .iter()
        .filter(|r| r.stage >= first && r.stage <= last && r.gap.is_some_and(|g| g > resolution))
        .map(|r| r.stage)
        .max()
        .ok_or_else(|| Error::InvalidArgument(format!("no gap above {resolution:e} in stages {first}..={last}")))?;
    fit_rate(trace, first, cut)
}
