//! Per-stage (or per-iteration) solver output shared by every solver.

/// Gaps are floored here so that log-scale plots and rate fits stay finite.
pub const GAP_FLOOR: f64 = 1e-16;

pub fn floored_gap(objective: f64, reference: f64) -> f64 {
    (objective - reference).max(GAP_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    /// Stage index for the stochastic solvers, iteration index for the deterministic ones.
    pub stage: usize,
    /// Cumulative component-gradient evaluations.
    pub gradient_evaluations: u64,
    /// Objective actually minimised (the smoothed one for smoothed problems).
    pub objective: f64,
    pub gap: Option<f64>,
    /// Objective of the original nonsmooth problem, when the solver knows it.
    pub original_objective: Option<f64>,
    pub wall_ms: f64,
    /// Largest `‖z‖` seen so far (monitors the bounded-iterate assumption).
    pub max_z_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub solver: String,
    /// Number of components, used to normalise gradient counts.
    pub n: usize,
    pub records: Vec<StageRecord>,
    pub final_point: Vec<f64>,
    pub notes: Vec<String>,
}

impl SolverTrace {
    pub fn new(solver: impl Into<String>, n: usize) -> Self {
        SolverTrace { solver: solver.into(), n, records: Vec::new(), final_point: Vec::new(), notes: Vec::new() }
    }

    pub fn last(&self) -> Option<&StageRecord> {
        self.records.last()
    }

    pub fn grads_over_n(&self, record: &StageRecord) -> f64 {
        record.gradient_evaluations as f64 / self.n as f64
    }

    /// First record whose gap is at most `target`.
    pub fn first_reaching(&self, target: f64) -> Option<&StageRecord> {
        self.records.iter().find(|r| r.gap.is_some_and(|g| g <= target))
    }

    /// Recomputes every gap against a (new) reference value.
    pub fn set_reference(&mut self, reference: f64) {
        for r in &mut self.records {
            r.gap = Some(floored_gap(r.objective, reference));
        }
    }

    /// Equality of everything except wall-clock timings.
    pub fn same_path(&self, other: &SolverTrace) -> bool {
        self.final_point == other.final_point
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.stage == b.stage
                    && a.gradient_evaluations == b.gradient_evaluations
                    && a.objective.to_bits() == b.objective.to_bits()
                    && a.gap.map(f64::to_bits) == b.gap.map(f64::to_bits)
                    && a.original_objective.map(f64::to_bits) == b.original_objective.map(f64::to_bits)
                    && a.max_z_norm.to_bits() == b.max_z_norm.to_bits()
            })
    }
}
