//! Binary classifiers with calibrated probability outputs.
//!
//! DYG is the positive class (+1) everywhere in this module.

pub mod gbt;
pub mod persist;
pub mod platt;
pub mod svm;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Label;

pub use gbt::{train_gbt, GbtModel, GbtParams};
pub use svm::{train_svm, Gamma, Kernel, KernelSpec, SvmModel, SvmParams};

/// Class-probability distribution over {TD, DYG}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityPair {
    pub p_td: f64,
    pub p_dyg: f64,
}

impl ProbabilityPair {
    pub fn new(p_td: f64, p_dyg: f64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&p_td)
            && (0.0..=1.0).contains(&p_dyg)
            && (p_td + p_dyg - 1.0).abs() <= 1e-9;
        if ok {
            Ok(ProbabilityPair { p_td, p_dyg })
        } else {
            Err(Error::InvalidConfig(format!(
                "({p_td}, {p_dyg}) is not a probability pair"
            )))
        }
    }

    pub fn from_dyg(p_dyg: f64) -> Self {
        let p_dyg = p_dyg.clamp(0.0, 1.0);
        ProbabilityPair {
            p_td: 1.0 - p_dyg,
            p_dyg,
        }
    }

    /// Argmax with exact ties going to DYG.
    pub fn label(&self) -> Label {
        if self.p_dyg >= self.p_td {
            Label::Dyg
        } else {
            Label::Td
        }
    }

    pub fn margin(&self) -> f64 {
        (self.p_dyg - self.p_td).abs()
    }

    pub fn max(&self) -> f64 {
        self.p_td.max(self.p_dyg)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix shape mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Per-feature z-scoring fitted on training rows. Zero-variance features get
/// a unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let d = x.cols();
        let mut means = vec![0.0; d];
        for r in x.iter_rows() {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stds = vec![0.0; d];
        for r in x.iter_rows() {
            for ((s, v), m) in stds.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
            if *s == 0.0 || !s.is_finite() {
                *s = 1.0;
            }
        }
        Standardizer { means, stds }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut data = Vec::with_capacity(x.rows() * x.cols());
        for r in x.iter_rows() {
            data.extend(self.transform_row(r));
        }
        Matrix::new(x.rows(), x.cols(), data)
    }
}

pub trait Classifier: Send + Sync {
    fn dim(&self) -> usize;
    fn predict_proba(&self, x: &[f64]) -> Result<ProbabilityPair>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algo {
    Svm,
    Gbt,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Svm => "svm",
            Algo::Gbt => "gbt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HyperParams {
    Svm(SvmParams),
    Gbt(GbtParams),
}

impl HyperParams {
    pub fn algo(&self) -> Algo {
        match self {
            HyperParams::Svm(_) => Algo::Svm,
            HyperParams::Gbt(_) => Algo::Gbt,
        }
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperParams::Svm(p) => write!(f, "svm(C={}, kernel={})", p.c, p.kernel),
            HyperParams::Gbt(p) => write!(
                f,
                "gbt(rounds={}, depth={}, lr={}, subsample={})",
                p.rounds, p.max_depth, p.learning_rate, p.subsample
            ),
        }
    }
}

/// Default search grids, in the declared tie-breaking order.
pub fn default_grid(algo: Algo) -> Vec<HyperParams> {
    match algo {
        Algo::Svm => {
            let mut grid = Vec::new();
            for c in [0.1, 1.0, 10.0, 100.0] {
                grid.push(HyperParams::Svm(SvmParams {
                    c,
                    kernel: KernelSpec::Linear,
                }));
                for gamma in [Gamma::InverseDim, Gamma::Value(0.01), Gamma::Value(0.1)] {
                    grid.push(HyperParams::Svm(SvmParams {
                        c,
                        kernel: KernelSpec::Rbf(gamma),
                    }));
                }
            }
            grid
        }
        Algo::Gbt => {
            let mut grid = Vec::new();
            for rounds in [100, 300] {
                for max_depth in [2, 3] {
                    for learning_rate in [0.05, 0.1] {
                        for subsample in [0.8, 1.0] {
                            grid.push(HyperParams::Gbt(GbtParams {
                                rounds,
                                max_depth,
                                learning_rate,
                                subsample,
                                ..GbtParams::default()
                            }));
                        }
                    }
                }
            }
            grid
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Svm(SvmModel),
    Gbt(GbtModel),
}

impl Classifier for Model {
    fn dim(&self) -> usize {
        match self {
            Model::Svm(m) => m.dim(),
            Model::Gbt(m) => m.dim(),
        }
    }

    fn predict_proba(&self, x: &[f64]) -> Result<ProbabilityPair> {
        match self {
            Model::Svm(m) => m.predict_proba(x),
            Model::Gbt(m) => m.predict_proba(x),
        }
    }
}

/// Trains the classifier described by `hp`. `groups` (subject ids, one per
/// row) keeps the SVM's internal calibration folds subject-exclusive.
pub fn train(
    x: &Matrix,
    y: &[Label],
    groups: Option<&[String]>,
    hp: &HyperParams,
    seed: u64,
) -> Result<Model> {
    match hp {
        HyperParams::Svm(p) => train_svm(x, y, groups, p, seed).map(Model::Svm),
        HyperParams::Gbt(p) => train_gbt(x, y, p, seed).map(Model::Gbt),
    }
}

pub(crate) fn validate_training(x: &Matrix, y: &[Label]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if let Some(i) = x.iter_rows().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteInput(i));
    }
    let pos = y.iter().filter(|l| l.is_positive()).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClassInput);
    }
    Ok(())
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            found: x.len(),
        })
    }
}
