//! Builds problems from run specifications, computes reference optima and
//! dispatches runs to the solvers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use asmd_core::asmd::{self, AsmdConfig, StartPoint};
use asmd_core::baselines::{self, BaselineConfig};
use asmd_core::data::{self, Dataset};
use asmd_core::reference::{self, ReferenceOptions};
use asmd_core::saddle::{self, SaddleConfig, SaddleProblem};
use asmd_core::smoothing::{ScalarSmoother, SmootherKind};
use asmd_core::{ConstraintSet, FiniteSumProblem, SolverTrace};
use rayon::prelude::*;

use crate::config::{DatasetSpec, ExperimentConfig, ProblemSpec, RunSpec, SmootherChoice, SolverKind};
use crate::output;

pub const MANIFEST: &str = "manifest.ini";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
    /// Write measured wall-clock times instead of zeros.
    pub timing: bool,
}

pub enum BuiltProblem {
    Finite(FiniteSumProblem),
    Saddle(SaddleProblem),
}

impl BuiltProblem {
    /// The problem the solvers minimise (smoothed for the saddle form).
    pub fn finite(&self) -> &FiniteSumProblem {
        match self {
            BuiltProblem::Finite(p) => p,
            BuiltProblem::Saddle(p) => p.smoothed(),
        }
    }
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    Ok(match spec {
        DatasetSpec::Synthetic { n, d, seed } => data::generate_synthetic_lasso(*n, *d, *seed)?.0,
        DatasetSpec::Classification { n, d, flip, seed } => {
            data::generate_synthetic_classification(*n, *d, *flip, *seed)?
        }
        DatasetSpec::Libsvm { path } => {
            data::load_libsvm(path).with_context(|| format!("loading {}", path.display()))?
        }
    })
}

pub fn build_problem(spec: &ProblemSpec, data: &Dataset) -> Result<BuiltProblem> {
    Ok(match *spec {
        ProblemSpec::Lasso { lambda } => BuiltProblem::Finite(data::build_lasso_problem(data, lambda)?),
        ProblemSpec::GroupLasso { lambda } => BuiltProblem::Finite(data::build_group_lasso_problem(data, lambda)?),
        ProblemSpec::SmoothedHinge { smoother, mu, lambda } => {
            let kind = match smoother {
                SmootherChoice::Sqrt => SmootherKind::Sqrt,
                SmootherChoice::Neural => SmootherKind::Neural,
            };
            BuiltProblem::Finite(data::build_smoothed_hinge_problem(data, ScalarSmoother::new(kind, mu)?, lambda)?)
        }
        ProblemSpec::HingeSaddle { mu } => {
            BuiltProblem::Saddle(data::build_hinge_saddle_problem(data, mu, ConstraintSet::Full)?)
        }
    })
}

/// Runs sharing this key share a reference optimum.
pub fn reference_key(spec: &RunSpec) -> String {
    format!("{:?}|{:?}|{:?}", spec.dataset, spec.problem, spec.reference_tolerance)
}

/// High-accuracy optimum of the problem a run minimises, starting from zero.
pub fn compute_reference(spec: &RunSpec) -> Result<f64> {
    let data = load_dataset(&spec.dataset)?;
    let built = build_problem(&spec.problem, &data)?;
    let tol = spec.reference_tolerance;
    let r = match spec.problem {
        ProblemSpec::Lasso { lambda } => reference::lasso_reference(&data, built.finite(), lambda, tol)?,
        _ => reference::reference_optimum(built.finite(), &vec![0.0; data.dim()], &ReferenceOptions::new(tol))?,
    };
    Ok(r.value)
}

/// Runs one specification against a known reference value.
pub fn execute(spec: &RunSpec, reference: Option<f64>) -> Result<SolverTrace> {
    let data = load_dataset(&spec.dataset)?;
    let built = build_problem(&spec.problem, &data)?;
    let x0 = vec![0.0; data.dim()];
    let n = built.finite().n();
    let m = spec.m.unwrap_or(n);
    let trace = match spec.solver {
        SolverKind::Asmd => {
            let mut c = AsmdConfig::new(m, spec.stages, spec.seed);
            c.sampling = spec.sampling.clone();
            c.schedule = spec.schedule;
            c.epsilon = spec.epsilon;
            c.x_update = spec.variant;
            c.stage_rule = spec.stage_rule;
            c.reference_value = reference;
            c.verify_steps = false;
            asmd::run(built.finite(), c, &StartPoint::at(&x0))?
        }
        SolverKind::CcSaddle => {
            let BuiltProblem::Saddle(p) = &built else { bail!("ccsaddle needs problem = hinge-saddle") };
            let mut c = SaddleConfig::new(m, spec.stages, spec.seed);
            c.sampling = spec.sampling.clone();
            c.reference_value = reference;
            saddle::run_saddle(p, &c, &x0)?
        }
        kind => {
            // SPGD takes one sample per step, so its `stages` count passes over the data
            let steps = if kind == SolverKind::Spgd { spec.stages * n } else { spec.stages };
            let mut c = BaselineConfig::new(steps);
            c.seed = spec.seed;
            c.reference_value = reference;
            c.record_every = spec.record_every;
            let p = built.finite();
            match kind {
                SolverKind::Pgd => baselines::run_pgd(p, &c, &x0)?,
                SolverKind::Spgd => baselines::run_spgd(p, &c, &x0)?,
                SolverKind::Fista => baselines::run_fista(p, &c, &x0)?,
                SolverKind::Apg => baselines::run_apg(p, &c, &x0)?,
                SolverKind::Asmd | SolverKind::CcSaddle => unreachable!(),
            }
        }
    };
    Ok(trace)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    b.build().map_err(|e| anyhow!("thread pool: {e}"))
}

/// Reference optima for every distinct key, computed once each.
pub fn references(config: &ExperimentConfig, threads: Option<usize>) -> Result<BTreeMap<String, Result<f64, String>>> {
    let mut unique: BTreeMap<String, &RunSpec> = BTreeMap::new();
    for run in &config.runs {
        unique.entry(reference_key(run)).or_insert(run);
    }
    let jobs: Vec<(String, &RunSpec)> = unique.into_iter().collect();
    let values: Vec<Result<f64, String>> = pool(threads)?
        .install(|| jobs.par_iter().map(|(_, s)| compute_reference(s).map_err(|e| format!("{e:#}"))).collect());
    Ok(jobs.into_iter().map(|(k, _)| k).zip(values).collect())
}

pub struct RunOutcome {
    pub name: String,
    pub reference: Option<f64>,
    pub result: Result<SolverTrace, String>,
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// The manifest: every run's resolved parameters plus what was produced.
pub fn manifest(config: &ExperimentConfig, outcomes: &[RunOutcome], timing: bool) -> String {
    let mut out = String::new();
    let names: Vec<&str> = config.runs.iter().map(|r| r.name.as_str()).collect();
    let _ = writeln!(out, "runs = {}", names.join(","));
    let _ = writeln!(out, "timing = {timing}");
    for (spec, o) in config.runs.iter().zip(outcomes) {
        let _ = writeln!(out, "\n[{}]", spec.name);
        for (k, v) in spec.to_pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        if let Some(r) = o.reference {
            let _ = writeln!(out, "reference_value = {r:?}");
        }
        match &o.result {
            Ok(t) => {
                let _ = writeln!(out, "status = ok");
                let _ = writeln!(out, "label = {}", t.solver);
                let _ = writeln!(out, "output = {}.csv", spec.name);
                if let Some(last) = t.last() {
                    let _ = writeln!(out, "final_objective = {:?}", last.objective);
                    let _ = writeln!(out, "final_grads_over_n = {:?}", t.grads_over_n(last));
                }
                if !t.notes.is_empty() {
                    let _ = writeln!(out, "notes = {}", one_line(&t.notes.join("; ")));
                }
            }
            Err(e) => {
                let _ = writeln!(out, "status = failed: {}", one_line(e));
            }
        }
    }
    out
}

/// Runs every specification, writes one CSV per successful run and the
/// manifest, and fails if any run failed.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<RunOutcome>> {
    std::fs::create_dir_all(&opts.out_dir).with_context(|| format!("creating {}", opts.out_dir.display()))?;
    let refs = references(config, opts.threads)?;
    let outcomes: Vec<RunOutcome> = pool(opts.threads)?.install(|| {
        config
            .runs
            .par_iter()
            .map(|spec| {
                let (reference, result) = match &refs[&reference_key(spec)] {
                    Ok(r) => (Some(*r), execute(spec, Some(*r)).map_err(|e| format!("{e:#}"))),
                    Err(e) => (None, Err(format!("reference optimum: {e}"))),
                };
                RunOutcome { name: spec.name.clone(), reference, result }
            })
            .collect()
    });
    for o in &outcomes {
        if let Ok(t) = &o.result {
            let path = opts.out_dir.join(format!("{}.csv", o.name));
            output::write_atomic(&path, &output::trace_to_csv(t, opts.timing)?)?;
        }
    }
    output::write_atomic(&opts.out_dir.join(MANIFEST), manifest(config, &outcomes, opts.timing).as_bytes())?;
    let failed: Vec<String> =
        outcomes.iter().filter_map(|o| o.result.as_ref().err().map(|e| format!("{}: {e}", o.name))).collect();
    if !failed.is_empty() {
        bail!("{} run(s) failed:\n  {}", failed.len(), failed.join("\n  "));
    }
    Ok(outcomes)
}

/// Slope of `log gap` against `log stage_or_iter` over a window of a trace CSV,
/// optionally cut at the reference resolution.
pub fn rate_from_csv(path: &Path, first: usize, last: usize, resolution: Option<f64>) -> Result<f64> {
    let mut trace = SolverTrace::new(path.display().to_string(), 1);
    trace.records = output::read_trace_csv(path)?;
    Ok(match resolution {
        Some(r) => asmd_core::rate::fit_rate_resolved(&trace, first, last, r)?,
        None => asmd_core::rate::fit_rate(&trace, first, last)?,
    })
}
