//! Support vector machine trained with sequential minimal optimization.
//!
//! The dual problem is
//!
//! ```text
//! min  ½ αᵀQα − Σα    s.t.  0 ≤ α ≤ C,  yᵀα = 0,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! Each iteration picks the maximal violating pair (first-order working-set
//! selection) and solves the two-variable subproblem analytically. The
//! decision function is `f(x) = Σ α_i y_i K(x_i, x) − ρ`, and probabilities
//! come from a Platt sigmoid fitted on out-of-fold decision values.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::platt;
use super::{check_dim, sigmoid, validate_training, Matrix, ProbabilityPair, Standardizer};
use crate::error::Result;
use crate::eval::folds::assign_groups;
use crate::ingest::Label;
use crate::seed;

pub const DEFAULT_TOL: f64 = 1e-3;
/// Curvature floor for non positive-definite pairs.
const TAU: f64 = 1e-12;
const PLATT_FOLDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gamma {
    /// `1 / n_features`, resolved at training time.
    InverseDim,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    Linear,
    Rbf(Gamma),
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => f.write_str("linear"),
            KernelSpec::Rbf(Gamma::InverseDim) => f.write_str("rbf(1/d)"),
            KernelSpec::Rbf(Gamma::Value(g)) => write!(f, "rbf({g})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    fn resolve(spec: KernelSpec, dim: usize) -> Kernel {
        match spec {
            KernelSpec::Linear => Kernel::Linear,
            KernelSpec::Rbf(Gamma::InverseDim) => Kernel::Rbf {
                gamma: 1.0 / dim.max(1) as f64,
            },
            KernelSpec::Rbf(Gamma::Value(gamma)) => Kernel::Rbf { gamma },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelSpec,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            kernel: KernelSpec::Rbf(Gamma::InverseDim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    /// Standardized support vectors.
    pub support_vectors: Matrix,
    /// `α_i y_i` for each support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub platt_a: f64,
    pub platt_b: f64,
    pub standardizer: Standardizer,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn decision_std(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter_rows()
            .zip(&self.dual_coefs)
            .map(|(sv, c)| c * self.kernel.eval(sv, z))
            .sum::<f64>()
            + self.bias
    }

    /// Decision value on a raw (unstandardized) feature vector.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(self.decision_std(&self.standardizer.transform_row(x)))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ProbabilityPair> {
        let f = self.decision_function(x)?;
        Ok(ProbabilityPair::from_dyg(sigmoid(self.platt_a * f + self.platt_b)))
    }
}

/// Result of solving the dual problem on a precomputed kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// `m(α) − M(α)` at exit; below `tol` on convergence.
    pub max_violation: f64,
}

/// Row-major `n × n` kernel matrix.
pub fn kernel_matrix(kernel: &Kernel, x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(x.row(i), x.row(j));
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// `½ αᵀQα − Σα` with `Q_ij = y_i y_j K_ij`.
pub fn dual_objective(k: &[f64], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i * n + j];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

fn in_up(alpha: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && alpha < c) || (y < 0.0 && alpha > 0.0)
}

fn in_low(alpha: f64, y: f64, c: f64) -> bool {
    (y < 0.0 && alpha < c) || (y > 0.0 && alpha > 0.0)
}

/// Maximal KKT violation `m(α) − M(α)` for gradient `grad = Qα − e`.
pub fn kkt_violation(y: &[f64], c: f64, alpha: &[f64], grad: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    let mut big_m = f64::INFINITY;
    for t in 0..y.len() {
        let v = -y[t] * grad[t];
        if in_up(alpha[t], y[t], c) {
            m = m.max(v);
        }
        if in_low(alpha[t], y[t], c) {
            big_m = big_m.min(v);
        }
    }
    if m.is_finite() && big_m.is_finite() {
        (m - big_m).max(0.0)
    } else {
        0.0
    }
}

/// Dual gradient `Qα − e`.
pub fn dual_gradient(k: &[f64], y: &[f64], alpha: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut g = vec![-1.0; n];
    for j in 0..n {
        if alpha[j] == 0.0 {
            continue;
        }
        for (i, gi) in g.iter_mut().enumerate() {
            *gi += y[i] * y[j] * k[i * n + j] * alpha[j];
        }
    }
    g
}

/// SMO with maximal-violating-pair selection. `y` holds ±1.
pub fn solve_dual(k: &[f64], y: &[f64], c: f64, tol: f64) -> DualSolution {
    let n = y.len();
    assert_eq!(k.len(), n * n, "kernel matrix must be n×n");
    let max_iter = (10 * n * n).max(10_000);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];

    let mut iterations = 0;
    let mut violation;
    loop {
        // select the maximal violating pair
        let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t], c) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], y[t], c) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        violation = if i == usize::MAX || j == usize::MAX {
            0.0
        } else {
            gmax - gmin
        };
        if violation < tol || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(i, t) * di + q(j, t) * dj;
        }
    }

    let rho = compute_rho(y, c, &alpha, &grad);
    DualSolution {
        alpha,
        rho,
        iterations,
        max_violation: violation,
    }
}

fn compute_rho(y: &[f64], c: f64, alpha: &[f64], grad: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

fn submatrix(k: &[f64], n: usize, idx: &[usize]) -> Vec<f64> {
    let m = idx.len();
    let mut out = Vec::with_capacity(m * m);
    for &i in idx {
        for &j in idx {
            out.push(k[i * n + j]);
        }
    }
    out
}

/// Decision values of rows `test` under a model fitted on rows `train`.
fn fold_decisions(k: &[f64], n: usize, y: &[f64], c: f64, train: &[usize], test: &[usize]) -> Vec<f64> {
    let ky = submatrix(k, n, train);
    let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let sol = solve_dual(&ky, &yt, c, DEFAULT_TOL);
    test.iter()
        .map(|&t| {
            train
                .iter()
                .zip(&sol.alpha)
                .filter(|(_, a)| **a > 0.0)
                .map(|(&i, a)| a * y[i] * k[i * n + t])
                .sum::<f64>()
                - sol.rho
        })
        .collect()
}

/// Out-of-fold decision values for Platt scaling, or `None` when some fold
/// leaves a single class in its training part.
fn out_of_fold_decisions(
    k: &[f64],
    y: &[f64],
    labels: &[Label],
    groups: Option<&[String]>,
    c: f64,
    seed: u64,
) -> Option<Vec<f64>> {
    let n = y.len();
    let row_ids: Vec<String>;
    let group_ids: Vec<&str> = match groups {
        Some(g) => g.iter().map(String::as_str).collect(),
        None => {
            row_ids = (0..n).map(|i| i.to_string()).collect();
            row_ids.iter().map(String::as_str).collect()
        }
    };
    let assignment = assign_groups(&group_ids, labels, PLATT_FOLDS, seed).ok()?;
    let fold_of: Vec<usize> = group_ids.iter().map(|g| assignment.fold_of_subject[*g]).collect();
    let mut dec = vec![0.0; n];
    for fold in 0..PLATT_FOLDS {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == fold);
        let pos = train.iter().filter(|&&i| y[i] > 0.0).count();
        if test.is_empty() || pos == 0 || pos == train.len() {
            return None;
        }
        for (t, d) in test.iter().zip(fold_decisions(k, n, y, c, &train, &test)) {
            dec[*t] = d;
        }
    }
    Some(dec)
}

pub fn train_svm(
    x: &Matrix,
    y: &[Label],
    groups: Option<&[String]>,
    params: &SvmParams,
    seed: u64,
) -> Result<SvmModel> {
    train_svm_with_tol(x, y, groups, params, seed, DEFAULT_TOL)
}

pub fn train_svm_with_tol(
    x: &Matrix,
    y: &[Label],
    groups: Option<&[String]>,
    params: &SvmParams,
    seed: u64,
    tol: f64,
) -> Result<SvmModel> {
    validate_training(x, y)?;
    let standardizer = Standardizer::fit(x);
    let xs = standardizer.transform(x);
    let kernel = Kernel::resolve(params.kernel, x.cols());
    let n = xs.rows();
    let k = kernel_matrix(&kernel, &xs);
    let ys: Vec<f64> = y.iter().map(|l| l.sign()).collect();

    let sol = solve_dual(&k, &ys, params.c, tol);

    let mut sv_rows = Vec::new();
    let mut dual_coefs = Vec::new();
    for (i, (&a, &yi)) in sol.alpha.iter().zip(&ys).enumerate() {
        if a > 0.0 {
            sv_rows.push(i);
            dual_coefs.push(a * yi);
        }
    }
    let bias = -sol.rho;

    let platt_seed = seed::derive(seed, &[seed::TAG_PLATT]);
    let decisions = out_of_fold_decisions(&k, &ys, y, groups, params.c, platt_seed).unwrap_or_else(|| {
        (0..n)
            .map(|t| {
                sv_rows
                    .iter()
                    .zip(&dual_coefs)
                    .map(|(&i, c)| c * k[i * n + t])
                    .sum::<f64>()
                    + bias
            })
            .collect()
    });
    let positives: Vec<bool> = y.iter().map(|l| l.is_positive()).collect();
    let (platt_a, platt_b) = platt::fit(&decisions, &positives);

    Ok(SvmModel {
        kernel,
        c: params.c,
        support_vectors: xs.select_rows(&sv_rows),
        dual_coefs,
        bias,
        platt_a,
        platt_b,
        standardizer,
    })
}
