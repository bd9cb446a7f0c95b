//! Confusion counts, metrics and the report file. DYG is the positive class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Dyg, Label::Dyg) => self.tp += 1,
            (Label::Td, Label::Dyg) => self.fp += 1,
            (Label::Dyg, Label::Td) => self.fn_ += 1,
            (Label::Td, Label::Td) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merged(&self, other: &Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    pub fn metrics(&self) -> Result<Metrics> {
        metrics_from_confusion(self.tp, self.fp, self.fn_, self.tn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, precision and recall; a zero denominator yields 0.
pub fn metrics_from_confusion(tp: usize, fp: usize, fn_: usize, tn: usize) -> Result<Metrics> {
    let total = tp + fp + fn_ + tn;
    if total == 0 {
        return Err(Error::EmptyConfusion);
    }
    Ok(Metrics {
        accuracy: ratio(tp + tn, total),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScopeReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub confusion: Confusion,
}

impl ScopeReport {
    pub fn from_confusion(confusion: Confusion) -> Result<Self> {
        let m = confusion.metrics()?;
        Ok(ScopeReport {
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            confusion,
        })
    }

    fn csv_row(&self, scope: &str) -> String {
        let c = &self.confusion;
        format!(
            "{scope},{:.6},{:.6},{:.6},{},{},{},{}\n",
            self.accuracy, self.precision, self.recall, c.tp, c.fp, c.fn_, c.tn
        )
    }
}

/// Headline metrics from the confusion pooled over folds, plus each fold's own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub confusion: Confusion,
    pub per_fold: Vec<ScopeReport>,
    pub pooled: bool,
}

pub const REPORT_HEADER: &str = "scope,accuracy,precision,recall,tp,fp,fn,tn";

impl EvalReport {
    pub fn from_folds(folds: &[Confusion]) -> Result<Self> {
        let pooled = folds.iter().fold(Confusion::default(), |a, c| a.merged(c));
        let head = ScopeReport::from_confusion(pooled)?;
        let per_fold = folds
            .iter()
            .map(|c| ScopeReport::from_confusion(*c))
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalReport {
            accuracy: head.accuracy,
            precision: head.precision,
            recall: head.recall,
            confusion: pooled,
            per_fold,
            pooled: true,
        })
    }

    pub fn headline(&self) -> ScopeReport {
        ScopeReport {
            accuracy: self.accuracy,
            precision: self.precision,
            recall: self.recall,
            confusion: self.confusion,
        }
    }

    /// Pooled row followed by one row per fold.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        out += &self.headline().csv_row("pooled");
        for (i, f) in self.per_fold.iter().enumerate() {
            out += &f.csv_row(&format!("fold{i}"));
        }
        out
    }
}
