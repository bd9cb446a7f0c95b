//! Subject-grouped, class-stratified fold assignment.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, Label};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of_subject: BTreeMap<String, usize>,
    pub k: usize,
}

impl FoldAssignment {
    /// Row indices `(train, test)` for `fold`, given the group of each row.
    pub fn split<S: AsRef<str>>(&self, groups: &[S], fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, g) in groups.iter().enumerate() {
            if self.fold_of_subject[g.as_ref()] == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn subjects_in(&self, fold: usize) -> Vec<&str> {
        self.fold_of_subject
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }
}

#[derive(Default)]
struct Tally {
    td: i64,
    dyg: i64,
}

impl Tally {
    fn size(&self) -> i64 {
        self.td + self.dyg
    }
}

/// Balance cost of one fold, scaled by `k` so that it stays integral.
fn fold_cost(f: &Tally, total: &Tally, k: i64) -> i64 {
    (k * f.td - total.td).abs() + (k * f.dyg - total.dyg).abs() + (k * f.size() - total.size()).abs()
}

/// Assigns each group to one of `k` folds.
///
/// Groups are visited in order of (majority label with TD first, descending
/// row count, id) and placed greedily in the fold whose balance cost grows
/// least; cost is the deviation of the fold's per-class row counts and size
/// from their global share. Equal-cost folds are scanned from a seeded
/// starting offset. When the remaining groups are only just enough to fill
/// the remaining empty folds, they go to empty folds.
pub fn assign_groups<S: AsRef<str>>(
    groups: &[S],
    labels: &[Label],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    assert_eq!(groups.len(), labels.len(), "one label per row");
    let mut per_group: BTreeMap<&str, Tally> = BTreeMap::new();
    for (g, l) in groups.iter().zip(labels) {
        let t = per_group.entry(g.as_ref()).or_default();
        match l {
            Label::Td => t.td += 1,
            Label::Dyg => t.dyg += 1,
        }
    }
    if k < 2 || per_group.len() < k {
        return Err(Error::TooFewSubjects {
            subjects: per_group.len(),
            k,
        });
    }

    let mut order: Vec<(&str, &Tally)> = per_group.iter().map(|(g, t)| (*g, t)).collect();
    order.sort_by(|a, b| {
        let maj = |t: &Tally| if t.dyg > t.td { 1 } else { 0 };
        maj(a.1)
            .cmp(&maj(b.1))
            .then(b.1.size().cmp(&a.1.size()))
            .then(a.0.cmp(b.0))
    });

    let total = Tally {
        td: labels.iter().filter(|l| **l == Label::Td).count() as i64,
        dyg: labels.iter().filter(|l| **l == Label::Dyg).count() as i64,
    };
    let ki = k as i64;
    let offset = seed::rng(seed).random_range(0..k);
    let mut folds: Vec<Tally> = (0..k).map(|_| Tally::default()).collect();
    let mut fold_of_subject = BTreeMap::new();

    for (i, (g, t)) in order.iter().enumerate() {
        let remaining = order.len() - i;
        let empty = folds.iter().filter(|f| f.size() == 0).count();
        let forced = empty > 0 && empty >= remaining;
        let mut best: Option<(i64, usize)> = None;
        for j in 0..k {
            let f = (offset + j) % k;
            if forced && folds[f].size() != 0 {
                continue;
            }
            let before = fold_cost(&folds[f], &total, ki);
            let after = fold_cost(
                &Tally {
                    td: folds[f].td + t.td,
                    dyg: folds[f].dyg + t.dyg,
                },
                &total,
                ki,
            );
            let delta = after - before;
            if best.is_none_or(|(b, _)| delta < b) {
                best = Some((delta, f));
            }
        }
        let (_, f) = best.expect("k >= 2");
        folds[f].td += t.td;
        folds[f].dyg += t.dyg;
        fold_of_subject.insert(g.to_string(), f);
    }
    Ok(FoldAssignment { fold_of_subject, k })
}

/// Fold assignment over the subjects of `dataset`.
pub fn stratified_group_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    let groups: Vec<&str> = dataset.records.iter().map(|r| r.subject_id.as_str()).collect();
    let labels: Vec<Label> = dataset.records.iter().map(|r| r.label).collect();
    assign_groups(&groups, &labels, k, seed)
}
