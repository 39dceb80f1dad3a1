//! Experiment configuration: a flat key-value file with one section per run.
//!
//! Keys outside any section are defaults for every run. Section names become
//! run names (and output file stems).
//!
//! ```text
//! dataset = synthetic
//! N = 1000
//! D = 10
//!
//! [asmd-ii]
//! solver = asmd
//! variant = II
//! ```

use std::fmt;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use asmd_core::asmd::{AlphaSchedule, EpsilonSchedule, SamplingRule, StageRule, XUpdate};
use ini::Ini;

/// Every key a run section (or the defaults section) may set.
pub const VALID_KEYS: &[&str] = &[
    "solver",
    "dataset",
    "path",
    "N",
    "D",
    "flip",
    "data_seed",
    "problem",
    "lambda",
    "smoother",
    "mu",
    "seed",
    "m",
    "nu",
    "alpha3",
    "variant",
    "stage_rule",
    "epsilon_kind",
    "epsilon0",
    "epsilon_p",
    "stages",
    "sampling",
    "record_every",
    "reference_tolerance",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Asmd,
    CcSaddle,
    Pgd,
    Spgd,
    Fista,
    Apg,
}

impl SolverKind {
    pub const NAMES: &'static [&'static str] = &["asmd", "ccsaddle", "pgd", "spgd", "fista", "apg"];

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "asmd" => SolverKind::Asmd,
            "ccsaddle" => SolverKind::CcSaddle,
            "pgd" => SolverKind::Pgd,
            "spgd" => SolverKind::Spgd,
            "fista" => SolverKind::Fista,
            "apg" => SolverKind::Apg,
            _ => bail!("unknown solver '{s}'; valid solvers: {}", Self::NAMES.join(", ")),
        })
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// Regression data uniform on `[0, 10]^D` with a 0/1 signal.
    Synthetic {
        n: usize,
        d: usize,
        seed: u64,
    },
    /// Unit-norm Gaussian rows with ±1 labels flipped with probability `flip`.
    Classification {
        n: usize,
        d: usize,
        flip: f64,
        seed: u64,
    },
    Libsvm {
        path: PathBuf,
    },
}

impl DatasetSpec {
    pub const NAMES: &'static [&'static str] = &["synthetic", "classification", "libsvm"];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherChoice {
    Sqrt,
    Neural,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Lasso {
        lambda: f64,
    },
    GroupLasso {
        lambda: f64,
    },
    SmoothedHinge {
        smoother: SmootherChoice,
        mu: f64,
        lambda: f64,
    },
    /// Hinge loss written as a max over `z ∈ [0, 1]` and smoothed with `½z²`.
    HingeSaddle {
        mu: f64,
    },
}

impl ProblemSpec {
    pub const NAMES: &'static [&'static str] = &["lasso", "group-lasso", "smoothed-hinge", "hinge-saddle"];
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub name: String,
    pub solver: SolverKind,
    pub dataset: DatasetSpec,
    pub problem: ProblemSpec,
    pub seed: u64,
    /// Inner steps per stage; `None` means `n`.
    pub m: Option<usize>,
    pub stages: usize,
    pub schedule: AlphaSchedule,
    pub variant: XUpdate,
    pub stage_rule: StageRule,
    pub epsilon: EpsilonSchedule,
    pub sampling: SamplingRule,
    pub record_every: usize,
    pub reference_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub runs: Vec<RunSpec>,
}

/// Key-value lookup with defaults and unused-key detection.
struct Section<'a> {
    name: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
    defaults: &'a [(String, String)],
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .rev()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .or_else(|| self.defaults.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str()))
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: Option<T>) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            Some(v) => v.trim().parse().map_err(|e| anyhow!("[{}] {key} = '{v}': {e}", self.name)),
            None => default.ok_or_else(|| anyhow!("[{}] missing required key '{key}'", self.name)),
        }
    }

    fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.raw(key).map(|_| self.get(key, None)).transpose()
    }
}

fn check_keys<'a>(section: &str, keys: impl Iterator<Item = &'a str>) -> Result<()> {
    for k in keys {
        if !VALID_KEYS.contains(&k) {
            bail!("[{section}] unknown key '{k}'; valid keys: {}", VALID_KEYS.join(", "));
        }
    }
    Ok(())
}

fn parse_variant(s: &str) -> Result<XUpdate> {
    match s {
        "I" | "i" | "1" => Ok(XUpdate::Interpolated),
        "II" | "ii" | "2" => Ok(XUpdate::ProxStep),
        _ => match s.strip_prefix("blend:") {
            Some(l) => Ok(XUpdate::Blend(l.parse().with_context(|| format!("blend weight '{l}'"))?)),
            None => bail!("unknown variant '{s}'; valid variants: I, II, blend:<weight>"),
        },
    }
}

fn variant_str(v: XUpdate) -> String {
    match v {
        XUpdate::Interpolated => "I".into(),
        XUpdate::ProxStep => "II".into(),
        XUpdate::Blend(l) => format!("blend:{l:?}"),
    }
}

fn parse_run(section: &Section<'_>) -> Result<RunSpec> {
    let name = section.name.to_string();
    let solver = SolverKind::parse(&section.get::<String>("solver", None)?)?;

    let data_seed = section.get("data_seed", Some(1u64))?;
    let dataset = match section.get::<String>("dataset", Some("synthetic".into()))?.as_str() {
        "synthetic" => {
            DatasetSpec::Synthetic { n: section.get("N", None)?, d: section.get("D", None)?, seed: data_seed }
        }
        "classification" => DatasetSpec::Classification {
            n: section.get("N", None)?,
            d: section.get("D", None)?,
            flip: section.get("flip", Some(0.1))?,
            seed: data_seed,
        },
        "libsvm" => DatasetSpec::Libsvm { path: section.get::<String>("path", None)?.into() },
        other => bail!("[{name}] unknown dataset '{other}'; valid datasets: {}", DatasetSpec::NAMES.join(", ")),
    };

    let default_problem = if solver == SolverKind::CcSaddle { "hinge-saddle" } else { "lasso" };
    let lambda = || section.get("lambda", Some(0.1));
    let problem = match section.get::<String>("problem", Some(default_problem.into()))?.as_str() {
        "lasso" => ProblemSpec::Lasso { lambda: lambda()? },
        "group-lasso" => ProblemSpec::GroupLasso { lambda: lambda()? },
        "smoothed-hinge" => {
            let smoother = match section.get::<String>("smoother", Some("sqrt".into()))?.as_str() {
                "sqrt" => SmootherChoice::Sqrt,
                "neural" => SmootherChoice::Neural,
                other => bail!("[{name}] unknown smoother '{other}'; valid smoothers: sqrt, neural"),
            };
            ProblemSpec::SmoothedHinge {
                smoother,
                mu: section.get("mu", None)?,
                lambda: section.get("lambda", Some(0.0))?,
            }
        }
        "hinge-saddle" => ProblemSpec::HingeSaddle { mu: section.get("mu", None)? },
        other => bail!("[{name}] unknown problem '{other}'; valid problems: {}", ProblemSpec::NAMES.join(", ")),
    };
    if solver == SolverKind::CcSaddle && !matches!(problem, ProblemSpec::HingeSaddle { .. }) {
        bail!("[{name}] solver ccsaddle needs problem = hinge-saddle");
    }

    let nu = section.get("nu", Some(2.0))?;
    let alpha3 = section.get("alpha3", Some(1.0 / 3.0))?;
    let schedule = AlphaSchedule::new(nu, alpha3).map_err(|e| anyhow!("[{name}] {e}"))?;

    let epsilon = match section.get::<String>("epsilon_kind", Some("exact".into()))?.as_str() {
        "exact" => EpsilonSchedule::Exact,
        "fixed" => EpsilonSchedule::Fixed(section.get("epsilon0", None)?),
        "power" => EpsilonSchedule::Power {
            initial: section.get("epsilon0", None)?,
            exponent: section.get("epsilon_p", None)?,
        },
        other => bail!("[{name}] unknown epsilon_kind '{other}'; valid kinds: exact, fixed, power"),
    };
    epsilon.validate().map_err(|e| anyhow!("[{name}] {e}"))?;

    let sampling = match section.get::<String>("sampling", Some("uniform".into()))?.as_str() {
        "uniform" => SamplingRule::Uniform,
        "lipschitz" => SamplingRule::LipschitzProportional,
        other => bail!("[{name}] unknown sampling '{other}'; valid rules: uniform, lipschitz"),
    };
    let stage_rule = match section.get::<String>("stage_rule", Some("average".into()))?.as_str() {
        "average" => StageRule::Average,
        "best" => StageRule::Best,
        other => bail!("[{name}] unknown stage_rule '{other}'; valid rules: average, best"),
    };

    let reference_tolerance: f64 = section.get("reference_tolerance", Some(1e-10))?;
    if reference_tolerance.is_nan() || reference_tolerance <= 0.0 {
        bail!("[{name}] reference_tolerance must be positive");
    }
    Ok(RunSpec {
        name,
        solver,
        dataset,
        problem,
        seed: section.get("seed", Some(1))?,
        m: section.opt("m")?,
        stages: section.get("stages", None)?,
        schedule,
        variant: parse_variant(&section.get::<String>("variant", Some("I".into()))?)
            .map_err(|e| anyhow!("[{}] {e}", section.name))?,
        stage_rule,
        epsilon,
        sampling,
        record_every: section.get("record_every", Some(0))?,
        reference_tolerance,
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| anyhow!("config syntax: {e}"))?;
        let mut defaults = Vec::new();
        if let Some(general) = ini.section(None::<String>) {
            check_keys("defaults", general.iter().map(|(k, _)| k))?;
            defaults = general.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        }
        let mut runs: Vec<RunSpec> = Vec::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else { continue };
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                bail!("invalid run name '{name}' (used as a file name)");
            }
            if runs.iter().any(|r| r.name == name) {
                bail!("duplicate run name '{name}'");
            }
            check_keys(name, props.iter().map(|(k, _)| k))?;
            let section = Section { name, pairs: props.iter().collect(), defaults: &defaults };
            runs.push(parse_run(&section)?);
        }
        Ok(ExperimentConfig { runs })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }
}

impl RunSpec {
    /// Fully resolved parameters as key-value pairs, re-parseable as a run section.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("solver", self.solver.name().into());
        match &self.dataset {
            DatasetSpec::Synthetic { n, d, seed } => {
                put("dataset", "synthetic".into());
                put("N", n.to_string());
                put("D", d.to_string());
                put("data_seed", seed.to_string());
            }
            DatasetSpec::Classification { n, d, flip, seed } => {
                put("dataset", "classification".into());
                put("N", n.to_string());
                put("D", d.to_string());
                put("flip", format!("{flip:?}"));
                put("data_seed", seed.to_string());
            }
            DatasetSpec::Libsvm { path } => {
                put("dataset", "libsvm".into());
                put("path", path.display().to_string());
            }
        }
        match &self.problem {
            ProblemSpec::Lasso { lambda } => {
                put("problem", "lasso".into());
                put("lambda", format!("{lambda:?}"));
            }
            ProblemSpec::GroupLasso { lambda } => {
                put("problem", "group-lasso".into());
                put("lambda", format!("{lambda:?}"));
            }
            ProblemSpec::SmoothedHinge { smoother, mu, lambda } => {
                put("problem", "smoothed-hinge".into());
                put("smoother", if *smoother == SmootherChoice::Sqrt { "sqrt" } else { "neural" }.into());
                put("mu", format!("{mu:?}"));
                put("lambda", format!("{lambda:?}"));
            }
            ProblemSpec::HingeSaddle { mu } => {
                put("problem", "hinge-saddle".into());
                put("mu", format!("{mu:?}"));
            }
        }
        put("seed", self.seed.to_string());
        if let Some(m) = self.m {
            put("m", m.to_string());
        }
        put("stages", self.stages.to_string());
        put("nu", format!("{:?}", self.schedule.nu()));
        put("alpha3", format!("{:?}", self.schedule.alpha3()));
        put("variant", variant_str(self.variant));
        put("stage_rule", if self.stage_rule == StageRule::Average { "average" } else { "best" }.into());
        match self.epsilon {
            EpsilonSchedule::Exact => put("epsilon_kind", "exact".into()),
            EpsilonSchedule::Fixed(e) => {
                put("epsilon_kind", "fixed".into());
                put("epsilon0", format!("{e:?}"));
            }
            EpsilonSchedule::Power { initial, exponent } => {
                put("epsilon_kind", "power".into());
                put("epsilon0", format!("{initial:?}"));
                put("epsilon_p", format!("{exponent:?}"));
            }
        }
        put(
            "sampling",
            match self.sampling {
                SamplingRule::LipschitzProportional => "lipschitz",
                _ => "uniform",
            }
            .into(),
        );
        put("record_every", self.record_every.to_string());
        put("reference_tolerance", format!("{:?}", self.reference_tolerance));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: &str = "
dataset = synthetic
N = 50
D = 5
stages = 4

[asmd-ii]
solver = asmd
variant = II
alpha3 = 0.3333333333333333

[fista]
solver = fista
";

    #[test]
    fn defaults_and_sections() {
        let c = ExperimentConfig::parse(GRID).unwrap();
        assert_eq!(c.runs.len(), 2);
        let a = &c.runs[0];
        assert_eq!(a.name, "asmd-ii");
        assert_eq!(a.variant, XUpdate::ProxStep);
        assert_eq!(a.dataset, DatasetSpec::Synthetic { n: 50, d: 5, seed: 1 });
        assert_eq!(a.problem, ProblemSpec::Lasso { lambda: 0.1 });
        assert_eq!(c.runs[1].solver, SolverKind::Fista);
    }

    #[test]
    fn resolved_pairs_round_trip() {
        let c = ExperimentConfig::parse(GRID).unwrap();
        for run in &c.runs {
            let mut text = format!("[{}]\n", run.name);
            for (k, v) in run.to_pairs() {
                text.push_str(&format!("{k} = {v}\n"));
            }
            assert_eq!(&ExperimentConfig::parse(&text).unwrap().runs[0], run);
        }
    }

    #[test]
    fn errors_list_valid_values() {
        let e = ExperimentConfig::parse("[x]\nsolver = saga\nN=1\nD=1\nstages=1\n").unwrap_err().to_string();
        assert!(e.contains("saga") && e.contains("fista"), "{e}");
        let e = ExperimentConfig::parse("[x]\nsolver = pgd\ndataset = mnist\nstages=1\n").unwrap_err().to_string();
        assert!(e.contains("classification"), "{e}");
        let e = ExperimentConfig::parse("[x]\nsolver = pgd\nfoo = 1\n").unwrap_err().to_string();
        assert!(e.contains("valid keys"), "{e}");
        assert!(ExperimentConfig::parse("[x]\nsolver = asmd\nN=1\nD=1\nstages=1\nalpha3=0.5\n").is_err());
        assert!(ExperimentConfig::parse("[x]\nsolver = ccsaddle\nN=1\nD=1\nstages=1\nmu=0.1\nproblem=lasso\n").is_err());
    }

    #[test]
    fn empty_config_has_no_runs() {
        assert!(ExperimentConfig::parse("N = 3\n").unwrap().runs.is_empty());
    }
}
