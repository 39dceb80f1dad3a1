//! Datasets: seeded synthetic generators, libsvm text I/O and problem builders.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{Component, FiniteSumProblem, Regularizer, SquaredLoss};
use crate::prox::OverlapGroups;
use crate::saddle::SaddleProblem;
use crate::smoothing::{BoxQuadraticMax, ScalarSmoother, SmoothedHinge, SmoothedMax};

/// Dense `N × D` features with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    features: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
    scaled: bool,
}

impl Dataset {
    /// `features` is row-major with `labels.len()` rows of length `dim`.
    pub fn new(name: impl Into<String>, features: Vec<f64>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if labels.is_empty() || dim == 0 {
            return Err(Error::InvalidArgument("a dataset needs N ≥ 1 rows and D ≥ 1 columns".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch { expected: labels.len() * dim, got: features.len() });
        }
        if !linalg::all_finite(&features) || !linalg::all_finite(&labels) {
            return Err(Error::NonFinite("dataset entries".into()));
        }
        Ok(Dataset { name: name.into(), features, labels, dim, scaled: false })
    }

    pub fn with_scaled(mut self, scaled: bool) -> Self {
        self.scaled = scaled;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn scaled(&self) -> bool {
        self.scaled
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks(self.dim)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

/// Noise level of the synthetic regression targets.
pub const SYNTHETIC_NOISE_SD: f64 = 0.01;

/// Rows uniform on `[0, 10]^D`, a 0/1 signal with exactly `⌈D/2⌉` ones and
/// targets `b_i = ⟨a_i, x*⟩ + ε_i`, `ε_i ~ N(0, 0.01²)`.
///
/// Draw order: all features row by row, then the support of `x*`, then the noise.
pub fn generate_synthetic_lasso(n: usize, d: usize, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("N and D must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features: Vec<f64> = (0..n * d).map(|_| rng.random_range(0.0..=10.0)).collect();
    let mut x_true = vec![0.0; d];
    for j in index::sample(&mut rng, d, d.div_ceil(2)) {
        x_true[j] = 1.0;
    }
    let noise = Normal::new(0.0, SYNTHETIC_NOISE_SD).expect("valid normal");
    let labels: Vec<f64> = features.chunks(d).map(|row| linalg::dot(row, &x_true) + noise.sample(&mut rng)).collect();
    Ok((Dataset::new(format!("synthetic-{n}x{d}-seed{seed}"), features, labels, d)?, x_true))
}

/// Binary classification data: standard normal rows scaled to unit norm,
/// labels `sign⟨a_i, w⟩` for a random unit `w`, each flipped with probability
/// `flip`. With `flip > 0` the data are (almost surely) not separable.
pub fn generate_synthetic_classification(n: usize, d: usize, flip: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("N and D must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&flip) {
        return Err(Error::InvalidArgument(format!("flip probability {flip} not in [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nw = linalg::norm(&w);
    w.iter_mut().for_each(|v| *v /= nw);
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nr = linalg::norm(&row);
        row.iter_mut().for_each(|v| *v /= nr);
        let mut b = if linalg::dot(&row, &w) >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < flip {
            b = -b;
        }
        features.extend(row);
        labels.push(b);
    }
    Ok(Dataset::new(format!("classification-{n}x{d}-seed{seed}"), features, labels, d)?.with_scaled(true))
}

/// Parses libsvm text: `<label> <index>:<value> ...`, 1-based strictly
/// ascending indices, absent entries zero, `D` = largest index seen. Blank
/// lines and `#` comments are ignored.
pub fn parse_libsvm(reader: impl Read, name: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: line_no, message };
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| err(format!("invalid label '{label_tok}'")))?;
        if !label.is_finite() {
            return Err(err(format!("non-finite label '{label_tok}'")));
        }
        let mut entries = Vec::new();
        let mut last = 0;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| err(format!("expected index:value, got '{tok}'")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("invalid index '{idx}'")))?;
            if idx == 0 {
                return Err(err("indices are 1-based".into()));
            }
            if idx <= last {
                return Err(err(format!("index {idx} not ascending after {last}")));
            }
            let val: f64 = val.parse().map_err(|_| err(format!("invalid value '{val}'")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite value '{val}'")));
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        dim = dim.max(last);
        rows.push(entries);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 0, message: "no data rows".into() });
    }
    if dim == 0 {
        return Err(Error::Parse { line: 0, message: "no features in any row".into() });
    }
    let mut features = vec![0.0; rows.len() * dim];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[i * dim + j] = v;
        }
    }
    Dataset::new(name, features, labels, dim)
}

pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let scaled = name.contains("scale");
    Ok(parse_libsvm(file, &name)?.with_scaled(scaled))
}

/// Writes nonzero entries with round-trip precision; the last feature is always
/// written so the dimension survives a reload.
pub fn write_libsvm(data: &Dataset, out: impl Write) -> Result<()> {
    let mut w = BufWriter::new(out);
    let d = data.dim();
    for (row, label) in data.rows().zip(data.labels()) {
        write!(w, "{label:?}")?;
        for (j, v) in row.iter().enumerate() {
            if *v != 0.0 || j + 1 == d {
                write!(w, " {}:{v:?}", j + 1)?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("regularization weight {lambda} must be non-negative")))
    }
}

fn squared_losses(data: &Dataset) -> Vec<Box<dyn Component>> {
    data.rows()
        .zip(data.labels())
        .map(|(a, b)| Box::new(SquaredLoss::new(a.to_vec(), *b)) as Box<dyn Component>)
        .collect()
}

/// `(1/N) Σ ½(⟨a_i, x⟩ − b_i)² + λ‖x‖₁`.
pub fn build_lasso_problem(data: &Dataset, lambda: f64) -> Result<FiniteSumProblem> {
    check_lambda(lambda)?;
    let reg = if lambda == 0.0 { Regularizer::Zero } else { Regularizer::L1 { lambda } };
    FiniteSumProblem::new(squared_losses(data), reg)
}

/// Least squares with the overlapping group penalty on the chain groups
/// `{1,2,3}, {3,4,5}, …`.
pub fn build_group_lasso_problem(data: &Dataset, lambda: f64) -> Result<FiniteSumProblem> {
    check_lambda(lambda)?;
    let groups = OverlapGroups::chain(data.dim())?;
    FiniteSumProblem::new(squared_losses(data), Regularizer::OverlapGroup { lambda, groups })
}

/// Smoothed hinge loss `(1/N) Σ f_μ(1 − b_i⟨a_i, x⟩) + λ‖x‖₁`.
pub fn build_smoothed_hinge_problem(data: &Dataset, smoother: ScalarSmoother, lambda: f64) -> Result<FiniteSumProblem> {
    check_lambda(lambda)?;
    let comps = data
        .rows()
        .zip(data.labels())
        .map(|(a, b)| Box::new(SmoothedHinge::new(a.to_vec(), *b, smoother)) as Box<dyn Component>)
        .collect();
    let reg = if lambda == 0.0 { Regularizer::Zero } else { Regularizer::L1 { lambda } };
    FiniteSumProblem::new(comps, reg)
}

/// Hinge loss as a max over `z_i ∈ [0, 1]`, smoothed with `R = ½z²`.
pub fn build_hinge_saddle_problem(
    data: &Dataset,
    mu: f64,
    constraint: crate::problem::ConstraintSet,
) -> Result<SaddleProblem> {
    let terms = data
        .rows()
        .zip(data.labels())
        .map(|(a, b)| Ok(Arc::new(BoxQuadraticMax::hinge(a, *b, mu)?) as Arc<dyn SmoothedMax>))
        .collect::<Result<Vec<_>>>()?;
    SaddleProblem::new(terms, constraint)
}
