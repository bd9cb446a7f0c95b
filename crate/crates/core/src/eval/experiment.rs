//! Nested, subject-grouped cross-validation of the fusion strategies.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::folds::{assign_groups, FoldAssignment};
use crate::eval::grid::{search, train_counted};
use crate::eval::metrics::{Confusion, EvalReport};
use crate::features::FeatureMap;
use crate::fusion::{self, FusionConfig, FusionDecision, FusionMode, FusionModels};
use crate::ingest::{Dataset, Label};
use crate::models::{default_grid, Algo, Classifier, HyperParams, Matrix, Model};
use crate::offline::{extract_offline, OfflineExtractorKind};
use crate::online::extract_online_dataset;
use crate::par::{self, Execution};
use crate::raster::{rasterize, RasterConfig, RasterImage};
use crate::seed::{self, TAG_INNER_FOLDS, TAG_OUTER_FOLDS, TAG_TRAIN};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_INNER_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Online,
    Offline,
    Fused,
}

impl Modality {
    fn index(self) -> u64 {
        match self {
            Modality::Online => 0,
            Modality::Offline => 1,
            Modality::Fused => 2,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Modality::Online => "online",
            Modality::Offline => "offline",
            Modality::Fused => "fused",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Modality::Online),
            "offline" => Ok(Modality::Offline),
            "fused" => Ok(Modality::Fused),
            other => Err(Error::InvalidConfig(format!("unknown modality {other:?}"))),
        }
    }
}

/// Both feature sets aligned to the records of a dataset, in dataset order.
#[derive(Debug, Clone)]
pub struct MultimodalSet {
    pub sample_ids: Vec<String>,
    pub subjects: Vec<String>,
    pub labels: Vec<Label>,
    pub online: FeatureMap,
    pub offline: FeatureMap,
    online_x: Matrix,
    offline_x: Matrix,
    fused_x: Matrix,
}

fn aligned(map: &FeatureMap, ids: &[String], what: &str) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(ids.len());
    for id in ids {
        let v = map
            .get(id)
            .ok_or_else(|| Error::CoverageMismatch(format!("{what} features missing sample {id}")))?;
        rows.push(v.values.as_slice());
    }
    Matrix::from_rows(&rows)
        .map_err(|_| Error::CoverageMismatch(format!("{what} feature vectors differ in length")))
}

impl MultimodalSet {
    pub fn new(dataset: &Dataset, online: FeatureMap, offline: FeatureMap) -> Result<Self> {
        let sample_ids: Vec<String> = dataset.records.iter().map(|r| r.sample_id.clone()).collect();
        let online_x = aligned(&online, &sample_ids, "online")?;
        let offline_x = aligned(&offline, &sample_ids, "offline")?;
        let fused_rows: Vec<Vec<f64>> = online_x
            .iter_rows()
            .zip(offline_x.iter_rows())
            .map(|(a, b)| [a, b].concat())
            .collect();
        let fused_x = Matrix::from_rows(&fused_rows)?;
        Ok(MultimodalSet {
            subjects: dataset.records.iter().map(|r| r.subject_id.clone()).collect(),
            labels: dataset.records.iter().map(|r| r.label).collect(),
            sample_ids,
            online,
            offline,
            online_x,
            offline_x,
            fused_x,
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    /// Rows in dataset order; the fused matrix is `[online | offline]`.
    pub fn matrix(&self, modality: Modality) -> &Matrix {
        match modality {
            Modality::Online => &self.online_x,
            Modality::Offline => &self.offline_x,
            Modality::Fused => &self.fused_x,
        }
    }
}

/// Online features plus zoning features of the rasterized trajectories, the
/// default feature pipeline when no external embeddings are supplied.
pub fn zoning_set(
    dataset: &Dataset,
    tick_seconds: f64,
    raster: &RasterConfig,
    grid: usize,
    exec: Execution,
) -> Result<MultimodalSet> {
    let (_, online) = extract_online_dataset(dataset, tick_seconds, exec);
    let images = par::try_map(exec, &dataset.records, |r| {
        rasterize(r, raster).map(|img| (r.sample_id.clone(), img))
    })?;
    let images: BTreeMap<String, RasterImage> = images.into_iter().collect();
    let (_, offline) = extract_offline(dataset, &images, &OfflineExtractorKind::Zoning { grid }, exec)?;
    MultimodalSet::new(dataset, online, offline)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub fusion: FusionConfig,
    pub k: usize,
    pub inner_k: usize,
    pub seed: u64,
    pub grid: Vec<HyperParams>,
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn new(algo: Algo, fusion: FusionConfig, seed: u64) -> Self {
        ExperimentConfig {
            algo,
            fusion,
            k: DEFAULT_K,
            inner_k: DEFAULT_INNER_K,
            seed,
            grid: default_grid(algo),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Grouped folds over the training rows, indexed relative to `train`.
    pub inner: FoldAssignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub outer: FoldAssignment,
    pub folds: Vec<FoldPlan>,
}

fn pick<T: Clone>(xs: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| xs[i].clone()).collect()
}

/// Outer folds from `seed`, and inner folds per outer fold from derived seeds.
pub fn plan_cv(set: &MultimodalSet, k: usize, inner_k: usize, seed: u64) -> Result<CvPlan> {
    let outer = assign_groups(
        &set.subjects,
        &set.labels,
        k,
        seed::derive(seed, &[TAG_OUTER_FOLDS]),
    )?;
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let (train, test) = outer.split(&set.subjects, fold);
        let inner = assign_groups(
            &pick(&set.subjects, &train),
            &pick(&set.labels, &train),
            inner_k,
            seed::derive(seed, &[TAG_INNER_FOLDS, fold as u64]),
        )?;
        folds.push(FoldPlan {
            fold,
            train,
            test,
            inner,
        });
    }
    let plan = CvPlan { outer, folds };
    let leaks = plan.leaks(&set.subjects);
    assert!(leaks.is_empty(), "subject leakage: {leaks:?}");
    Ok(plan)
}

impl CvPlan {
    /// Descriptions of every subject seen on both sides of a split, for the
    /// outer folds and for each inner fold. Empty for a sound plan.
    pub fn leaks(&self, subjects: &[String]) -> Vec<String> {
        let mut out = Vec::new();
        let set_of = |idx: &[usize]| -> BTreeSet<&str> { idx.iter().map(|&i| subjects[i].as_str()).collect() };
        for f in &self.folds {
            let train = set_of(&f.train);
            let test = set_of(&f.test);
            for s in train.intersection(&test) {
                out.push(format!("outer fold {}: {s}", f.fold));
            }
            let train_subjects = pick(subjects, &f.train);
            for inner in 0..f.inner.k {
                let (itrain, itest) = f.inner.split(&train_subjects, inner);
                let a: BTreeSet<&str> = itrain.iter().map(|&i| train_subjects[i].as_str()).collect();
                let b: BTreeSet<&str> = itest.iter().map(|&i| train_subjects[i].as_str()).collect();
                for s in a.intersection(&b) {
                    out.push(format!("outer fold {} inner fold {inner}: {s}", f.fold));
                }
                for s in a.union(&b) {
                    if test.contains(s) {
                        out.push(format!("outer fold {} inner fold {inner} uses test subject {s}", f.fold));
                    }
                }
            }
        }
        out
    }
}

/// Models trained on one outer fold, with the chosen hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub fold: usize,
    pub models: Vec<(Modality, HyperParams, Model)>,
}

impl TrainedFold {
    fn get(&self, m: Modality) -> Option<&dyn Classifier> {
        self.models
            .iter()
            .find(|(mm, _, _)| *mm == m)
            .map(|(_, _, model)| model as &dyn Classifier)
    }
}

fn train_folds(
    set: &MultimodalSet,
    plan: &CvPlan,
    cfg: &ExperimentConfig,
    modalities: &[Modality],
    counter: &AtomicUsize,
) -> Result<Vec<TrainedFold>> {
    if let Some(bad) = cfg.grid.iter().find(|h| h.algo() != cfg.algo) {
        return Err(Error::InvalidConfig(format!("grid cell {bad} does not match algorithm {}", cfg.algo)));
    }
    par::try_map(cfg.execution, &plan.folds, |fp| {
        let y = pick(&set.labels, &fp.train);
        let groups = pick(&set.subjects, &fp.train);
        let mut models = Vec::with_capacity(modalities.len());
        for &m in modalities {
            let x = set.matrix(m).select_rows(&fp.train);
            let base = seed::derive(cfg.seed, &[TAG_TRAIN, fp.fold as u64, m.index()]);
            let chosen = search(&x, &y, &groups, &cfg.grid, &fp.inner, base, cfg.execution, counter)?;
            let model = train_counted(&x, &y, &groups, &chosen.best, base, counter)?;
            models.push((m, chosen.best, model));
        }
        Ok(TrainedFold { fold: fp.fold, models })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub sample_id: String,
    pub fold: usize,
    pub truth: Label,
    pub decision: FusionDecision,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    /// Held-out decisions, grouped by fold in ascending order.
    pub decisions: Vec<DecisionRecord>,
    pub models_trained: usize,
    pub trained: Vec<TrainedFold>,
}

impl ExperimentOutcome {
    pub fn triggered(&self) -> usize {
        self.decisions.iter().filter(|d| d.decision.triggered).count()
    }

    pub fn decisions_csv(&self, config: &FusionConfig) -> String {
        let rows: Vec<(String, FusionDecision, Label)> = self
            .decisions
            .iter()
            .map(|d| (d.sample_id.clone(), d.decision, d.truth))
            .collect();
        fusion::decisions_csv(config, &rows)
    }
}

enum Strategy {
    Fusion(FusionConfig),
    Single(Modality),
}

fn needed(strategy: &Strategy) -> Vec<Modality> {
    match strategy {
        Strategy::Single(m) => vec![*m],
        Strategy::Fusion(c) => {
            let mut v = Vec::new();
            if c.mode.needs_single_models() {
                v.extend([Modality::Online, Modality::Offline]);
            }
            if c.mode.needs_fused_model() {
                v.push(Modality::Fused);
            }
            v
        }
    }
}

fn decide(
    set: &MultimodalSet,
    plan: &CvPlan,
    trained: &[TrainedFold],
    strategy: &Strategy,
    exec: Execution,
) -> Result<(EvalReport, Vec<DecisionRecord>)> {
    let mut confusions = Vec::with_capacity(plan.folds.len());
    let mut records = Vec::with_capacity(set.len());
    for (fp, tf) in plan.folds.iter().zip(trained) {
        let ids = pick(&set.sample_ids, &fp.test);
        let decisions: Vec<FusionDecision> = match strategy {
            Strategy::Fusion(config) => {
                let models = FusionModels {
                    online: tf.get(Modality::Online),
                    offline: tf.get(Modality::Offline),
                    fused: tf.get(Modality::Fused),
                };
                fusion::predict_dataset(&ids, models, &set.online, &set.offline, config, exec)?
                    .into_iter()
                    .map(|(_, d)| d)
                    .collect()
            }
            Strategy::Single(m) => {
                let clf = tf.get(*m).expect("model trained for this modality");
                let x = set.matrix(*m);
                par::try_map(exec, &fp.test, |&i| {
                    let p = clf.predict_proba(x.row(i))?;
                    Ok::<_, Error>(FusionDecision {
                        label: p.label(),
                        ensemble_probs: p,
                        fused_probs: None,
                        triggered: false,
                        final_probs: p,
                    })
                })?
            }
        };
        let mut confusion = Confusion::default();
        for (&i, d) in fp.test.iter().zip(decisions) {
            confusion.record(set.labels[i], d.label);
            records.push(DecisionRecord {
                sample_id: set.sample_ids[i].clone(),
                fold: fp.fold,
                truth: set.labels[i],
                decision: d,
            });
        }
        confusions.push(confusion);
    }
    Ok((EvalReport::from_folds(&confusions)?, records))
}

fn run(set: &MultimodalSet, cfg: &ExperimentConfig, strategy: Strategy) -> Result<ExperimentOutcome> {
    cfg.fusion.validate()?;
    let plan = plan_cv(set, cfg.k, cfg.inner_k, cfg.seed)?;
    let counter = AtomicUsize::new(0);
    let trained = train_folds(set, &plan, cfg, &needed(&strategy), &counter)?;
    let (report, decisions) = decide(set, &plan, &trained, &strategy, cfg.execution)?;
    Ok(ExperimentOutcome {
        report,
        decisions,
        models_trained: counter.load(Ordering::Relaxed),
        trained,
    })
}

/// Cross-validates the fusion strategy in `cfg.fusion`. Each outer fold
/// grid-searches and trains the classifiers the mode needs on its training
/// subjects, then decides its held-out samples.
pub fn run_experiment(set: &MultimodalSet, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run(set, cfg, Strategy::Fusion(cfg.fusion))
}

/// Same protocol with one classifier on one modality; `cfg.fusion` is ignored.
pub fn run_single_modality(
    set: &MultimodalSet,
    modality: Modality,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    run(set, cfg, Strategy::Single(modality))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub report: EvalReport,
    pub triggered: usize,
    pub trigger_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub models_trained: usize,
}

pub const SWEEP_HEADER: &str = "tau,accuracy,precision,recall,trigger_rate";

impl SweepOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            out += &format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                r.tau, r.report.accuracy, r.report.precision, r.report.recall, r.trigger_rate
            );
        }
        out
    }
}

/// Conditional-fusion reports for each threshold. Models are trained once,
/// on the same folds, and only the decision rule changes with `tau`.
pub fn sweep_threshold(set: &MultimodalSet, taus: &[f64], cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    if taus.is_empty() {
        return Err(Error::InvalidConfig("no thresholds to sweep".into()));
    }
    let configs = taus
        .iter()
        .map(|&t| FusionConfig::new(FusionMode::ConditionalFusion, t))
        .collect::<Result<Vec<_>>>()?;
    let plan = plan_cv(set, cfg.k, cfg.inner_k, cfg.seed)?;
    let counter = AtomicUsize::new(0);
    let trained = train_folds(
        set,
        &plan,
        cfg,
        &needed(&Strategy::Fusion(configs[0])),
        &counter,
    )?;
    let mut rows = Vec::with_capacity(taus.len());
    for c in configs {
        let (report, decisions) = decide(set, &plan, &trained, &Strategy::Fusion(c), cfg.execution)?;
        let triggered = decisions.iter().filter(|d| d.decision.triggered).count();
        rows.push(SweepRow {
            tau: c.tau,
            report,
            triggered,
            trigger_rate: triggered as f64 / set.len() as f64,
        });
    }
    Ok(SweepOutcome {
        rows,
        models_trained: counter.load(Ordering::Relaxed),
    })
}
