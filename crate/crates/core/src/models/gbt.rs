//! Gradient-boosted regression trees with logistic loss.
//!
//! Each round fits a tree to the residuals `y − p` with exact greedy splits;
//! a leaf predicts `Σ residual / (Σ p(1−p) + λ)`. The model scores
//! `p(DYG) = sigmoid(base_score + lr · Σ tree(x))`, where `base_score` is the
//! log-odds of the training prevalence.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{check_dim, sigmoid, validate_training, Matrix, ProbabilityPair, Standardizer};
use crate::error::{Error, Result};
use crate::ingest::Label;
use crate::seed;

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            subsample: 1.0,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { value } => Some(*value),
                _ => None,
            })
            .collect()
    }
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    grad: &'a [f64],
    hess: &'a [f64],
    lambda: f64,
    max_depth: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        g / (h + self.lambda)
    }

    fn best_split(&self, rows: &[usize]) -> Option<SplitCandidate> {
        let g_total: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h_total: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let parent = g_total * g_total / (h_total + self.lambda);
        let mut best: Option<SplitCandidate> = None;
        let mut order = rows.to_vec();
        for f in 0..self.x.cols() {
            order.sort_by(|&a, &b| self.x.row(a)[f].total_cmp(&self.x.row(b)[f]).then(a.cmp(&b)));
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..order.len() - 1 {
                let i = order[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let here = self.x.row(i)[f];
                let next = self.x.row(order[w + 1])[f];
                if here == next {
                    continue;
                }
                let (gr, hr) = (g_total - gl, h_total - hl);
                let gain = gl * gl / (hl + self.lambda) + gr * gr / (hr + self.lambda) - parent;
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitCandidate {
                        feature: f,
                        threshold: 0.5 * (here + next),
                        gain,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let split = if depth < self.max_depth && rows.len() >= 2 {
            self.best_split(rows)
        } else {
            None
        };
        match split {
            None => {
                self.nodes[id] = Node::Leaf {
                    value: self.leaf_value(rows),
                };
            }
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&i| self.x.row(i)[s.feature] <= s.threshold);
                let left = self.build(&l, depth + 1);
                let right = self.build(&r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }
}

/// Fits one regression tree on `rows` for the given gradients (residuals)
/// and hessians.
pub fn fit_tree(x: &Matrix, residuals: &[f64], hessians: &[f64], rows: &[usize], max_depth: usize, lambda: f64) -> Tree {
    let mut b = TreeBuilder {
        x,
        grad: residuals,
        hess: hessians,
        lambda,
        max_depth,
        nodes: Vec::new(),
    };
    b.build(rows, 0);
    Tree { nodes: b.nodes }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub standardizer: Standardizer,
}

impl GbtModel {
    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn raw_score_std(&self, z: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(z)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ProbabilityPair> {
        check_dim(self.dim(), x)?;
        let z = self.standardizer.transform_row(x);
        Ok(ProbabilityPair::from_dyg(sigmoid(self.raw_score_std(&z))))
    }
}

pub fn log_loss(y: &[f64], p: &[f64]) -> f64 {
    const CLIP: f64 = 1e-15;
    y.iter()
        .zip(p)
        .map(|(&t, &q)| {
            let q = q.clamp(CLIP, 1.0 - CLIP);
            -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
        })
        .sum::<f64>()
        / y.len() as f64
}

pub fn train_gbt(x: &Matrix, y: &[Label], params: &GbtParams, seed: u64) -> Result<GbtModel> {
    train_gbt_traced(x, y, params, seed).map(|(m, _)| m)
}

/// Trains and also returns the training log-loss before the first round and
/// after every round.
pub fn train_gbt_traced(x: &Matrix, y: &[Label], params: &GbtParams, seed: u64) -> Result<(GbtModel, Vec<f64>)> {
    validate_training(x, y)?;
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::InvalidConfig("learning_rate must lie in (0, 1]".into()));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(Error::InvalidConfig("subsample must lie in (0, 1]".into()));
    }
    if params.lambda < 0.0 {
        return Err(Error::InvalidConfig("lambda must be non-negative".into()));
    }
    let standardizer = Standardizer::fit(x);
    let xs = standardizer.transform(x);
    let n = xs.rows();
    let targets: Vec<f64> = y.iter().map(|l| if l.is_positive() { 1.0 } else { 0.0 }).collect();
    let prevalence = targets.iter().sum::<f64>() / n as f64;
    let base_score = (prevalence / (1.0 - prevalence)).ln();

    let mut scores = vec![base_score; n];
    let mut probs: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
    let mut losses = vec![log_loss(&targets, &probs)];
    let mut trees = Vec::with_capacity(params.rounds);
    let mut rng = seed::rng(seed::derive(seed, &[seed::TAG_SUBSAMPLE]));
    let take = ((n as f64 * params.subsample).round() as usize).clamp(1, n);

    for _ in 0..params.rounds {
        let residuals: Vec<f64> = targets.iter().zip(&probs).map(|(t, p)| t - p).collect();
        let hessians: Vec<f64> = probs.iter().map(|p| p * (1.0 - p)).collect();
        let rows: Vec<usize> = if take == n {
            (0..n).collect()
        } else {
            let mut r = sample(&mut rng, n, take).into_vec();
            r.sort_unstable();
            r
        };
        let tree = fit_tree(&xs, &residuals, &hessians, &rows, params.max_depth, params.lambda);
        for i in 0..n {
            scores[i] += params.learning_rate * tree.predict(xs.row(i));
            probs[i] = sigmoid(scores[i]);
        }
        losses.push(log_loss(&targets, &probs));
        trees.push(tree);
    }

    Ok((
        GbtModel {
            trees,
            learning_rate: params.learning_rate,
            base_score,
            max_depth: params.max_depth,
            lambda: params.lambda,
            standardizer,
        },
        losses,
    ))
}
