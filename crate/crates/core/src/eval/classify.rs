use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::average_precision;
use crate::features::{Clip, Label};
use crate::math::ParamSet;
use crate::model::{forward, ModelConfig};

/// Model outputs kept after the tape is dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipOutput {
    pub clip_scores: Vec<f32>,
    pub frame_scores: Vec<Vec<f32>>,
    pub attention: Vec<Vec<f32>>,
}

/// Runs the model over every clip, in parallel on the current rayon pool. Output order follows `clips`.
pub fn score_clips(params: &ParamSet, cfg: &ModelConfig, clips: &[Clip]) -> Result<Vec<ClipOutput>> {
    clips
        .par_iter()
        .map(|clip| {
            let trace = forward(clip, params, cfg)?;
            Ok(ClipOutput {
                clip_scores: trace.clip_scores,
                frame_scores: trace.frame_scores,
                attention: trace.attention,
            })
        })
        .collect()
}

pub fn class_name(k: usize) -> String {
    format!("class_{k}")
}

/// Per-class AP (None when the class has no positives) and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassAp {
    pub per_class: Vec<Option<f64>>,
    pub map: f64,
}

impl ClassAp {
    pub fn skipped(&self) -> Vec<usize> {
        (0..self.per_class.len())
            .filter(|&k| self.per_class[k].is_none())
            .collect()
    }
}

/// One ranked list per class over all items; NEGATIVE items are negatives for every class.
pub fn class_map(scores: &[Vec<f32>], labels: &[Label], num_classes: usize) -> Result<ClassAp> {
    let positives: Vec<Vec<bool>> = labels
        .iter()
        .map(|l| (0..num_classes).map(|k| l.event() == Some(k)).collect())
        .collect();
    multi_label_map(scores, &positives, num_classes)
}

/// Like [`class_map`] but an item may be positive for several classes.
pub fn multi_label_map(scores: &[Vec<f32>], positives: &[Vec<bool>], num_classes: usize) -> Result<ClassAp> {
    if scores.len() != positives.len() {
        return Err(Error::Dimension {
            context: "scores/labels",
            left: vec![scores.len()],
            right: vec![positives.len()],
        });
    }
    if let Some(bad) = scores.iter().find(|s| s.len() < num_classes) {
        return Err(Error::Dimension {
            context: "per-item class scores",
            left: vec![bad.len()],
            right: vec![num_classes],
        });
    }
    let mut per_class = Vec::with_capacity(num_classes);
    for k in 0..num_classes {
        let column: Vec<f64> = scores.iter().map(|s| f64::from(s[k])).collect();
        let pos: Vec<bool> = positives.iter().map(|p| p[k]).collect();
        match average_precision(&column, &pos) {
            Ok(ap) => per_class.push(Some(ap)),
            Err(Error::UndefinedAp(_)) => {
                log::warn!("{} has no positives; skipped", class_name(k));
                per_class.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedAp("no class has a positive".into()));
    }
    let map = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(ClassAp { per_class, map })
}

/// JSON evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<String, f64>,
    pub map: f64,
    pub skipped: Vec<String>,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn from_class_ap(ap: &ClassAp) -> Self {
        let per_class = ap
            .per_class
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (class_name(k), v)))
            .collect();
        Self {
            per_class,
            map: ap.map,
            skipped: ap.skipped().into_iter().map(class_name).collect(),
            extra: BTreeMap::new(),
            config: serde_json::Value::Null,
        }
    }
}

/// Clip classification mAP over the event classes.
pub fn classify_eval(params: &ParamSet, cfg: &ModelConfig, clips: &[Clip]) -> Result<ClassAp> {
    if let Some(c) = clips.iter().find(|c| c.label == Label::Negative) {
        return Err(Error::validation(format!(
            "clip {} is NEGATIVE; classification needs event labels",
            c.clip_id
        )));
    }
    let outputs = score_clips(params, cfg, clips)?;
    let scores: Vec<Vec<f32>> = outputs.into_iter().map(|o| o.clip_scores).collect();
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    class_map(&scores, &labels, cfg.event_classes())
}
