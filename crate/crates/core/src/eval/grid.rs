//! Exhaustive hyperparameter search scored by grouped inner cross-validation.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::eval::folds::{assign_groups, FoldAssignment};
use crate::ingest::Label;
use crate::models::{self, Classifier, HyperParams, Matrix};
use crate::par::{self, Execution};
use crate::seed::{self, TAG_TRAIN};

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best_index: usize,
    pub best: HyperParams,
    /// Inner-CV accuracy per cell; empty when the grid has a single cell.
    pub scores: Vec<f64>,
}

/// Picks the cell with the highest pooled inner-CV accuracy; the first
/// listed cell wins ties.
pub fn grid_search(
    x: &Matrix,
    y: &[Label],
    groups: &[String],
    grid: &[HyperParams],
    inner_k: usize,
    seed: u64,
    exec: Execution,
) -> Result<GridResult> {
    let counter = AtomicUsize::new(0);
    let inner = assign_groups(groups, y, inner_k, seed)?;
    search(x, y, groups, grid, &inner, seed, exec, &counter)
}

pub(crate) fn train_counted(
    x: &Matrix,
    y: &[Label],
    groups: &[String],
    hp: &HyperParams,
    seed: u64,
    counter: &AtomicUsize,
) -> Result<models::Model> {
    counter.fetch_add(1, Ordering::Relaxed);
    models::train(x, y, Some(groups), hp, seed)
}

fn pick<T: Clone>(xs: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| xs[i].clone()).collect()
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn search(
    x: &Matrix,
    y: &[Label],
    groups: &[String],
    grid: &[HyperParams],
    inner: &FoldAssignment,
    seed: u64,
    exec: Execution,
    counter: &AtomicUsize,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    let pos = y.iter().filter(|l| l.is_positive()).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClassInput);
    }
    if grid.len() == 1 {
        return Ok(GridResult {
            best_index: 0,
            best: grid[0].clone(),
            scores: Vec::new(),
        });
    }

    let scores = par::try_map_range(exec, grid.len(), |cell| -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for fold in 0..inner.k {
            let (train, test) = inner.split(groups, fold);
            let y_train = pick(y, &train);
            let pos = y_train.iter().filter(|l| l.is_positive()).count();
            let predictions: Vec<Label> = if pos == 0 || pos == y_train.len() {
                // a one-class training part can only predict that class
                vec![y_train[0]; test.len()]
            } else {
                let model = train_counted(
                    &x.select_rows(&train),
                    &y_train,
                    &pick(groups, &train),
                    &grid[cell],
                    seed::derive(seed, &[TAG_TRAIN, cell as u64, fold as u64]),
                    counter,
                )?;
                test.iter()
                    .map(|&i| model.predict_proba(x.row(i)).map(|p| p.label()))
                    .collect::<Result<_>>()?
            };
            correct += test
                .iter()
                .zip(&predictions)
                .filter(|(&i, p)| y[i] == **p)
                .count();
            total += test.len();
        }
        Ok(correct as f64 / total.max(1) as f64)
    })?;

    let mut best_index = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best_index] {
            best_index = i;
        }
    }
    Ok(GridResult {
        best_index,
        best: grid[best_index].clone(),
        scores,
    })
}
