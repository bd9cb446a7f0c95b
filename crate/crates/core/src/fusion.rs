//! Multimodal decision rules: feature concatenation, soft voting, and the
//! soft-vote ensemble with conditional feature fusion.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureVector};
use crate::ingest::Label;
use crate::models::{Classifier, ProbabilityPair};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionMode {
    FeatureFusion,
    SoftVote,
    ConditionalFusion,
}

impl FusionMode {
    pub fn token(self) -> &'static str {
        match self {
            FusionMode::FeatureFusion => "feature-fusion",
            FusionMode::SoftVote => "soft-vote",
            FusionMode::ConditionalFusion => "conditional",
        }
    }

    pub fn needs_fused_model(self) -> bool {
        self != FusionMode::SoftVote
    }

    pub fn needs_single_models(self) -> bool {
        self != FusionMode::FeatureFusion
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature-fusion" => Ok(FusionMode::FeatureFusion),
            "soft-vote" => Ok(FusionMode::SoftVote),
            "conditional" => Ok(FusionMode::ConditionalFusion),
            other => Err(Error::InvalidConfig(format!("unknown fusion mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Confidence-margin threshold on |p_dyg - p_td| of the two-model ensemble.
    pub tau: f64,
    pub mode: FusionMode,
}

impl FusionConfig {
    pub fn new(mode: FusionMode, tau: f64) -> Result<Self> {
        let c = FusionConfig { tau, mode };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.tau) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("tau {} outside [0, 1]", self.tau)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionDecision {
    pub label: Label,
    pub ensemble_probs: ProbabilityPair,
    /// Output of the fused-feature classifier; present exactly when triggered.
    pub fused_probs: Option<ProbabilityPair>,
    pub triggered: bool,
    /// Distribution the label was taken from.
    pub final_probs: ProbabilityPair,
}

/// Element-wise mean of the class distributions.
pub fn soft_vote(probs: &[ProbabilityPair]) -> Result<ProbabilityPair> {
    if probs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = probs.len() as f64;
    let p_td = probs.iter().map(|p| p.p_td).sum::<f64>() / n;
    let p_dyg = probs.iter().map(|p| p.p_dyg).sum::<f64>() / n;
    Ok(ProbabilityPair { p_td, p_dyg })
}

/// `[online | offline]` for one sample.
pub fn concat_features(online: &FeatureVector, offline: &FeatureVector) -> Result<FeatureVector> {
    if online.sample_id != offline.sample_id {
        return Err(Error::SampleIdMismatch(
            online.sample_id.clone(),
            offline.sample_id.clone(),
        ));
    }
    let mut values = Vec::with_capacity(online.len() + offline.len());
    values.extend_from_slice(&online.values);
    values.extend_from_slice(&offline.values);
    Ok(FeatureVector {
        values,
        manifest_version: format!("{}+{}", online.manifest_version, offline.manifest_version),
        sample_id: online.sample_id.clone(),
    })
}

/// Strict margin test; `tau = 0` never fires.
pub fn triggers(ensemble: &ProbabilityPair, tau: f64) -> bool {
    ensemble.margin() < tau
}

fn plain_vote(p_online: ProbabilityPair, p_offline: ProbabilityPair) -> Result<FusionDecision> {
    let ensemble = soft_vote(&[p_online, p_offline])?;
    Ok(FusionDecision {
        label: ensemble.label(),
        ensemble_probs: ensemble,
        fused_probs: None,
        triggered: false,
        final_probs: ensemble,
    })
}

/// Two-model soft vote, falling back to a three-way vote with the fused
/// classifier when the ensemble margin is below `tau`. The fused classifier
/// is only evaluated in that case.
pub fn conditional_fusion_predict(
    p_online: ProbabilityPair,
    p_offline: ProbabilityPair,
    clf_fused: &dyn Classifier,
    x_fused: &FeatureVector,
    config: &FusionConfig,
) -> Result<FusionDecision> {
    if config.mode != FusionMode::ConditionalFusion {
        return Err(Error::InvalidConfig(format!(
            "conditional prediction called in {} mode",
            config.mode
        )));
    }
    let mut decision = plain_vote(p_online, p_offline)?;
    if triggers(&decision.ensemble_probs, config.tau) {
        let p_fused = clf_fused.predict_proba(&x_fused.values)?;
        let fin = soft_vote(&[p_online, p_offline, p_fused])?;
        decision.fused_probs = Some(p_fused);
        decision.triggered = true;
        decision.final_probs = fin;
        decision.label = fin.label();
    }
    Ok(decision)
}

/// The classifiers a fusion mode may consult. Unused slots can be `None`.
#[derive(Clone, Copy, Default)]
pub struct FusionModels<'a> {
    pub online: Option<&'a dyn Classifier>,
    pub offline: Option<&'a dyn Classifier>,
    pub fused: Option<&'a dyn Classifier>,
}

fn require<'a>(m: Option<&'a dyn Classifier>, what: &str, mode: FusionMode) -> Result<&'a dyn Classifier> {
    m.ok_or_else(|| Error::InvalidConfig(format!("{mode} mode needs the {what} classifier")))
}

fn lookup<'m>(map: &'m FeatureMap, id: &str) -> Result<&'m FeatureVector> {
    map.get(id).ok_or_else(|| Error::MissingSample(id.to_string()))
}

/// One decision per id, in input order.
pub fn predict_dataset(
    sample_ids: &[String],
    models: FusionModels<'_>,
    online: &FeatureMap,
    offline: &FeatureMap,
    config: &FusionConfig,
    exec: Execution,
) -> Result<Vec<(String, FusionDecision)>> {
    config.validate()?;
    let mode = config.mode;
    let clf_on = if mode.needs_single_models() {
        Some(require(models.online, "online", mode)?)
    } else {
        None
    };
    let clf_off = if mode.needs_single_models() {
        Some(require(models.offline, "offline", mode)?)
    } else {
        None
    };
    let clf_fused = if mode.needs_fused_model() {
        Some(require(models.fused, "fused", mode)?)
    } else {
        None
    };

    par::try_map(exec, sample_ids, |id| {
        let x_on = lookup(online, id)?;
        let x_off = lookup(offline, id)?;
        let decision = match mode {
            FusionMode::FeatureFusion => {
                let x = concat_features(x_on, x_off)?;
                let p = clf_fused.expect("checked").predict_proba(&x.values)?;
                FusionDecision {
                    label: p.label(),
                    ensemble_probs: p,
                    fused_probs: None,
                    triggered: false,
                    final_probs: p,
                }
            }
            FusionMode::SoftVote => plain_vote(
                clf_on.expect("checked").predict_proba(&x_on.values)?,
                clf_off.expect("checked").predict_proba(&x_off.values)?,
            )?,
            FusionMode::ConditionalFusion => conditional_fusion_predict(
                clf_on.expect("checked").predict_proba(&x_on.values)?,
                clf_off.expect("checked").predict_proba(&x_off.values)?,
                clf_fused.expect("checked"),
                &concat_features(x_on, x_off)?,
                config,
            )?,
        };
        Ok((id.clone(), decision))
    })
}

pub const DECISION_HEADER: &str =
    "sample_id,mode,tau,p_td_ensemble,p_dyg_ensemble,triggered,p_td_final,p_dyg_final,label,truth";

/// Decision dump, one row per `(sample_id, decision, truth)`.
pub fn decisions_csv(config: &FusionConfig, rows: &[(String, FusionDecision, Label)]) -> String {
    let mut out = String::from(DECISION_HEADER);
    out.push('\n');
    for (id, d, truth) in rows {
        out += &format!(
            "{id},{},{},{:.6},{:.6},{},{:.6},{:.6},{},{}\n",
            config.mode,
            config.tau,
            d.ensemble_probs.p_td,
            d.ensemble_probs.p_dyg,
            d.triggered,
            d.final_probs.p_td,
            d.final_probs.p_dyg,
            d.label,
            truth
        );
    }
    out
}
