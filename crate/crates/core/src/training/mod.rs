//! Batched RMSProp training with validation-based model selection, and checkpoints.

mod checkpoint;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{class_map, score_clips};
use crate::features::{Clip, Label};
use crate::math::{clip_global_norm, LrSchedule, ParamSet, RmsPropState};
use crate::model::{init_params, loss_and_grad, ModelConfig};

pub use checkpoint::{
    decode, load_checkpoint, save_checkpoint, Checkpoint, Manifest, TensorEntry, BLOB_FILE, CHECKPOINT_VERSION,
    MANIFEST_FILE,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
    pub max_steps: u64,
    pub clip_norm: f64,
    pub seed: u64,
    pub eval_every: u64,
    pub workers: usize,
    /// Stop after this many evaluations without a validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            base_lr: 0.005,
            decay_factor: 0.1,
            decay_every: 10_000,
            max_steps: 5000,
            clip_norm: 5.0,
            seed: 0,
            eval_every: 250,
            workers: 1,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return bad("decay_factor must be positive");
        }
        if self.decay_every == 0 {
            return bad("decay_every must be at least 1");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base_lr: self.base_lr,
            decay_factor: self.decay_factor,
            decay_every: self.decay_every,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    /// Mean batch loss since the previous evaluation; absent before the first step.
    pub train_loss: Option<f64>,
    pub val_map: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the best validation mAP.
    pub best: Checkpoint,
    /// Mean per-clip loss of every batch.
    pub losses: Vec<f64>,
    pub steps_run: u64,
}

pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Mean loss and mean gradient over a batch; per-clip results are reduced in batch order.
pub fn batch_gradient(batch: &[&Clip], params: &ParamSet, cfg: &ModelConfig) -> Result<(f64, ParamSet)> {
    let results: Vec<Result<(f64, ParamSet)>> = batch.par_iter().map(|c| loss_and_grad(c, params, cfg)).collect();
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (clip, r) in batch.iter().zip(results) {
        let (l, g) = r?;
        if !l.is_finite() {
            return Err(Error::Training {
                at: clip.clip_id.clone(),
                reason: format!("non-finite loss {l}"),
            });
        }
        loss += l;
        total.add_assign(&g)?;
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Validation mAP over event classes; NEGATIVE clips count as negatives everywhere.
pub fn validation_map(params: &ParamSet, cfg: &ModelConfig, clips: &[Clip]) -> Result<f64> {
    let outputs = score_clips(params, cfg, clips)?;
    let scores: Vec<Vec<f32>> = outputs.into_iter().map(|o| o.clip_scores).collect();
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    Ok(class_map(&scores, &labels, cfg.event_classes())?.map)
}

/// Trains from a seeded initialization and returns the checkpoint with the best validation mAP.
pub fn train(train_set: &[Clip], val_set: &[Clip], model: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    model.validate()?;
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyInput("validation set"));
    }
    for clip in train_set {
        model.target_index(clip.label)?;
    }
    let params = init_params(model, cfg.seed)?;
    let pool = worker_pool(cfg.workers)?;
    pool.install(|| run(train_set, val_set, model, cfg, params))
}

fn run(
    train_set: &[Clip],
    val_set: &[Clip],
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut params: ParamSet,
) -> Result<TrainOutcome> {
    let mut opt = RmsPropState::new(&params, cfg.schedule());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e_ed0f_ba7c);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();

    let init_map = validation_map(&params, model, val_set)?;
    let mut history = vec![EvalPoint {
        step: 0,
        train_loss: None,
        val_map: init_map,
    }];
    let mut best = (init_map, 0u64, params.clone());
    let mut since_best = 0usize;
    let mut losses = Vec::new();
    let mut window = Vec::new();

    let mut step = 0u64;
    while step < cfg.max_steps {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let batch: Vec<&Clip> = order[cursor..end].iter().map(|&i| &train_set[i]).collect();
        cursor = end;

        let (loss, mut grads) = batch_gradient(&batch, &params, model)?;
        clip_global_norm(&mut grads, cfg.clip_norm);
        opt.step(&mut params, &grads)?;
        step += 1;
        losses.push(loss);
        window.push(loss);

        if step.is_multiple_of(cfg.eval_every) || step == cfg.max_steps {
            let val_map = validation_map(&params, model, val_set)?;
            let train_loss = window.iter().sum::<f64>() / window.len() as f64;
            window.clear();
            log::info!("step {step}: loss {train_loss:.5} val mAP {val_map:.4}");
            history.push(EvalPoint {
                step,
                train_loss: Some(train_loss),
                val_map,
            });
            if val_map > best.0 {
                best = (val_map, step, params.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience.is_some_and(|p| since_best >= p) {
                    log::info!("no improvement in {since_best} evaluations; stopping at step {step}");
                    break;
                }
            }
        }
    }

    let (_, best_step, best_params) = best;
    Ok(TrainOutcome {
        best: Checkpoint {
            model: model.clone(),
            train: cfg.clone(),
            step: best_step,
            history,
            params: best_params,
        },
        losses,
        steps_run: step,
    })
}
