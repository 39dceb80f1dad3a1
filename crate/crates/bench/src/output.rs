//! Trace CSV files and atomic writes.
//!
//! Columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `stage_or_iter` | stage for ASMD and the saddle solver, iteration for the baselines |
//! | `grads_over_n` | cumulative component gradients divided by `n` |
//! | `objective` | objective being minimised (smoothed when the problem is smoothed) |
//! | `gap` | `objective − f*`, floored at `1e-16`; empty without a reference |
//! | `wall_ms` | elapsed milliseconds, or `0` unless timing was requested |
//! | `max_z_norm` | largest mirror-iterate norm so far |
//! | `original_objective` | nonsmooth objective when the solver reports it, else empty |
//!
//! Floats use Rust's shortest round-trip formatting, so reruns are byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use asmd_core::{SolverTrace, StageRecord};

pub const COLUMNS: [&str; 7] =
    ["stage_or_iter", "grads_over_n", "objective", "gap", "wall_ms", "max_z_norm", "original_objective"];

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub fn trace_to_csv(trace: &SolverTrace, timing: bool) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in &trace.records {
        w.write_record([
            r.stage.to_string(),
            float(trace.grads_over_n(r)),
            float(r.objective),
            opt_float(r.gap),
            if timing { float(r.wall_ms) } else { "0".into() },
            float(r.max_z_norm),
            opt_float(r.original_objective),
        ])?;
    }
    w.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))
}

/// Reads a trace CSV back; `gradient_evaluations` is reconstructed as
/// `round(grads_over_n · n)` with `n = 1`, so only the ratio survives.
pub fn read_trace_csv(path: &Path) -> Result<Vec<StageRecord>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("{}: missing column '{name}'", path.display()))
    };
    let idx = [col("stage_or_iter")?, col("grads_over_n")?, col("objective")?, col("gap")?, col("max_z_norm")?];
    let original = col("original_objective").ok();
    let wall = col("wall_ms").ok();
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let ctx = || format!("{} row {}", path.display(), line + 2);
        let num = |i: usize| -> Result<f64> { rec[i].parse::<f64>().with_context(ctx) };
        let opt = |i: Option<usize>| -> Result<Option<f64>> {
            match i.map(|i| &rec[i]) {
                None | Some("") => Ok(None),
                Some(s) => Ok(Some(s.parse::<f64>().with_context(ctx)?)),
            }
        };
        out.push(StageRecord {
            stage: rec[idx[0]].parse().with_context(ctx)?,
            gradient_evaluations: num(idx[1])?.round() as u64,
            objective: num(idx[2])?,
            gap: opt(Some(idx[3]))?,
            original_objective: opt(original)?,
            wall_ms: opt(wall)?.unwrap_or(0.0),
            max_z_norm: num(idx[4])?,
        });
    }
    Ok(out)
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| anyhow!("{} has no file name", path.display()))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(stage: usize, gap: Option<f64>) -> StageRecord {
        StageRecord {
            stage,
            gradient_evaluations: 3 * stage as u64,
            objective: 0.1 + stage as f64,
            gap,
            original_objective: None,
            wall_ms: 12.5,
            max_z_norm: 1.0 / 3.0,
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut t = SolverTrace::new("x", 1);
        t.records = vec![record(0, Some(1e-16)), record(1, None)];
        let bytes = trace_to_csv(&t, false).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("stage_or_iter,grads_over_n,objective,gap,wall_ms,max_z_norm,original_objective\n"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_atomic(&p, &bytes).unwrap();
        let back = read_trace_csv(&p).unwrap();
        assert_eq!(back[0].gap, Some(1e-16));
        assert_eq!(back[1].gap, None);
        assert_eq!(back[1].objective, 1.1);
        assert_eq!(back[1].max_z_norm, 1.0 / 3.0);
        assert_eq!(back[1].wall_ms, 0.0);
        assert!(trace_to_csv(&t, true).unwrap() != bytes);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
