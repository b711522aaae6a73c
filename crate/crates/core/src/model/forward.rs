use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::{Clip, Label};
use crate::math::tape::{Adjoints, Tape, Var};
use crate::math::ParamSet;
use crate::model::layers::{attention, avg_player, blstm, embed, lstm_cell, track_states};
use crate::model::params::Handles;
use crate::model::{ClipScore, Mode, ModelConfig};

/// Everything computed for one clip, including the tape for the backward pass.
pub struct ForwardTrace<'p> {
    pub tape: Tape<'p>,
    pub cfg: ModelConfig,
    /// Frame feature leaves (empty without a frame stream).
    pub frame_inputs: Vec<Var>,
    /// Composed player feature leaves, per frame and detection.
    pub player_inputs: Vec<Vec<Var>>,
    /// Frame BLSTM outputs (empty without a frame stream).
    pub frame_context: Vec<Var>,
    /// Representations offered to attention or averaging, per frame and detection.
    pub player_reprs: Vec<Vec<Var>>,
    /// Per-frame weights over detections; empty rows for frames without detections
    /// and for the frame-only mode. Uniform for the averaging mode.
    pub attention: Vec<Vec<f32>>,
    pub attended: Vec<Option<Var>>,
    pub event_states: Vec<Var>,
    pub score_vars: Vec<Var>,
    pub frame_scores: Vec<Vec<f32>>,
    pub clip_scores: Vec<f32>,
}

impl ForwardTrace<'_> {
    pub fn frames(&self) -> usize {
        self.score_vars.len()
    }

    fn scores_f64(&self, t: usize) -> &[f64] {
        self.tape.value(self.score_vars[t])
    }
}

fn validate_inputs(clip: &Clip, cfg: &ModelConfig) -> Result<()> {
    if clip.frames.is_empty() {
        return Err(Error::validation(format!("clip {} has no frames", clip.clip_id)));
    }
    for (t, frame) in clip.frames.iter().enumerate() {
        if cfg.mode.has_frame_stream() && frame.feature.len() != cfg.d_frame {
            return Err(Error::validation(format!(
                "clip {} frame {t}: frame feature width {} != {}",
                clip.clip_id,
                frame.feature.len(),
                cfg.d_frame
            )));
        }
        if !cfg.mode.uses_players() {
            continue;
        }
        for (i, det) in frame.detections.iter().enumerate() {
            if det.appearance.len() != cfg.d_app {
                return Err(Error::validation(format!(
                    "clip {} frame {t} detection {i}: appearance width {} != {}",
                    clip.clip_id,
                    det.appearance.len(),
                    cfg.d_app
                )));
            }
            if cfg.mode.needs_tracks() && det.track_id.is_none() {
                return Err(Error::validation(format!(
                    "clip {} frame {t} detection {i} has no track id (run the tracker first)",
                    clip.clip_id
                )));
            }
        }
    }
    Ok(())
}

/// Groups detections by track id; each entry is `(frame, detection)` in frame order.
fn group_tracks(clip: &Clip) -> Result<Vec<Vec<(usize, usize)>>> {
    let mut groups: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for (t, frame) in clip.frames.iter().enumerate() {
        for (i, det) in frame.detections.iter().enumerate() {
            let id = det.track_id.expect("validated");
            let entries = groups.entry(id).or_default();
            if entries.last().is_some_and(|&(f, _)| f == t) {
                return Err(Error::validation(format!(
                    "clip {} frame {t}: track {id} claims two detections",
                    clip.clip_id
                )));
            }
            entries.push((t, i));
        }
    }
    Ok(groups.into_values().collect())
}

/// Runs the configured model over one clip.
///
/// Attention at frame `t` reads the event state from `t - 1`; the attended feature then
/// feeds the event LSTM at `t`. Per-frame class scores are `w_k^T h_t^e`.
pub fn forward<'p>(clip: &Clip, params: &'p ParamSet, cfg: &ModelConfig) -> Result<ForwardTrace<'p>> {
    cfg.validate()?;
    let handles = Handles::resolve(cfg, params)?;
    validate_inputs(clip, cfg)?;
    let frames = clip.frames.len();
    let mode = cfg.mode;
    let mut tape = Tape::new(params);

    let mut frame_inputs = Vec::new();
    let mut frame_context = Vec::new();
    if let (Some(fe), Some((fwd, bwd))) = (handles.frame_embed, handles.frame_rnn) {
        let mut embedded = Vec::with_capacity(frames);
        for frame in &clip.frames {
            let x = tape.leaf_f32(&frame.feature);
            frame_inputs.push(x);
            embedded.push(embed(&mut tape, fe, x));
        }
        frame_context = blstm(&mut tape, &fwd, &bwd, &embedded)?;
    }

    let mut player_inputs = vec![Vec::new(); frames];
    let mut player_reprs = vec![Vec::new(); frames];
    if let Some(pe) = handles.player_embed {
        let layout = cfg.layout();
        for (t, frame) in clip.frames.iter().enumerate() {
            for det in &frame.detections {
                let feat = layout.compose(det)?;
                let x = tape.leaf_f32(feat.data());
                player_inputs[t].push(x);
                player_reprs[t].push(embed(&mut tape, pe, x));
            }
        }
        if let Some((fwd, bwd)) = handles.track_rnn {
            let groups = group_tracks(clip)?;
            let sequences: Vec<Vec<Var>> = groups
                .iter()
                .map(|g| g.iter().map(|&(t, i)| player_reprs[t][i]).collect())
                .collect();
            let states = track_states(&mut tape, &fwd, &bwd, &sequences)?;
            for (group, hs) in groups.iter().zip(states) {
                for (&(t, i), h) in group.iter().zip(hs) {
                    player_reprs[t][i] = h;
                }
            }
        }
    }

    let hidden = cfg.hidden_dim;
    let repr_dim = cfg.repr_dim();
    let zero_event = tape.zeros(hidden);
    let mut state = None;
    let mut attention_weights = Vec::with_capacity(frames);
    let mut attended = Vec::with_capacity(frames);
    let mut event_states = Vec::with_capacity(frames);
    let mut score_vars = Vec::with_capacity(frames);
    for t in 0..frames {
        let h_prev = state.map_or(zero_event, |s: crate::model::LstmState| s.h);
        let h_frame = frame_context.get(t).copied();
        let reprs = &player_reprs[t];
        let (a_t, gamma) = match mode {
            Mode::FrameOnly => (None, Vec::new()),
            Mode::AvgPlayer => {
                let n = reprs.len();
                let uniform = vec![1.0 / n as f32; n];
                (Some(avg_player(&mut tape, reprs, repr_dim)), uniform)
            }
            Mode::OnlyPlayer | Mode::AttnNoTrack | Mode::AttnTrack => {
                let attn = handles.attn.expect("attending modes carry a scorer");
                let out = attention(&mut tape, &attn, h_frame, reprs, h_prev, cfg.tau, repr_dim);
                let gamma = out.weights.map(|w| tape.value_f32(w)).unwrap_or_default();
                (Some(out.feature), gamma)
            }
        };
        let x = match (h_frame, a_t) {
            (Some(f), Some(a)) => tape.concat(&[f, a]),
            (Some(f), None) => f,
            (None, Some(a)) => a,
            (None, None) => unreachable!("every mode has at least one stream"),
        };
        let s = lstm_cell(&mut tape, &handles.event_rnn, x, state);
        state = Some(s);
        event_states.push(s.h);
        score_vars.push(tape.affine(handles.classifier, None, s.h));
        attention_weights.push(gamma);
        attended.push(a_t);
    }

    let frame_scores: Vec<Vec<f32>> = score_vars.iter().map(|&v| tape.value_f32(v)).collect();
    let clip_scores = match cfg.clip_score {
        ClipScore::Mean => (0..cfg.num_classes)
            .map(|k| {
                let total: f64 = score_vars.iter().map(|&v| tape.value(v)[k]).sum();
                (total / frames as f64) as f32
            })
            .collect(),
        ClipScore::Last => frame_scores.last().cloned().unwrap_or_default(),
    };

    Ok(ForwardTrace {
        tape,
        cfg: cfg.clone(),
        frame_inputs,
        player_inputs,
        frame_context,
        player_reprs,
        attention: attention_weights,
        attended,
        event_states,
        score_vars,
        frame_scores,
        clip_scores,
    })
}

/// Squared hinge: `1/2 sum_t sum_k max(0, 1 - y_k s_tk)^2` with `y = +1` for the target only.
pub fn squared_hinge<S: AsRef<[f64]>>(frame_scores: &[S], target: usize) -> f64 {
    let mut loss = 0.0;
    for scores in frame_scores {
        for (k, &s) in scores.as_ref().iter().enumerate() {
            let y = if k == target { 1.0 } else { -1.0 };
            let margin = 1.0 - y * s;
            if margin > 0.0 || margin.is_nan() {
                loss += 0.5 * margin * margin;
            }
        }
    }
    loss
}

/// Clip loss of a trace; NEGATIVE labels need a model with a background class.
pub fn clip_loss(trace: &ForwardTrace<'_>, label: Label) -> Result<f64> {
    let target = trace.cfg.target_index(label)?;
    let scores: Vec<&[f64]> = (0..trace.frames()).map(|t| trace.scores_f64(t)).collect();
    Ok(squared_hinge(&scores, target))
}

fn loss_seeds(trace: &ForwardTrace<'_>, target: usize) -> Vec<(Var, Vec<f64>)> {
    (0..trace.frames())
        .map(|t| {
            let grad = trace
                .scores_f64(t)
                .iter()
                .enumerate()
                .map(|(k, &s)| {
                    let y = if k == target { 1.0 } else { -1.0 };
                    let margin = 1.0 - y * s;
                    if margin > 0.0 || margin.is_nan() {
                        -y * margin
                    } else {
                        0.0
                    }
                })
                .collect();
            (trace.score_vars[t], grad)
        })
        .collect()
}

/// Adjoints of the clip loss for every node and parameter.
pub fn backward_adjoints(trace: &ForwardTrace<'_>, label: Label) -> Result<Adjoints> {
    let target = trace.cfg.target_index(label)?;
    Ok(trace.tape.backward(&loss_seeds(trace, target)))
}

/// Gradient of the clip loss, laid out like the parameters.
pub fn backward(trace: &ForwardTrace<'_>, label: Label) -> Result<ParamSet> {
    let adj = backward_adjoints(trace, label)?;
    Ok(adj.param_grads(trace.tape.params()))
}

/// Loss and gradient of one clip.
pub fn loss_and_grad(clip: &Clip, params: &ParamSet, cfg: &ModelConfig) -> Result<(f64, ParamSet)> {
    let trace = forward(clip, params, cfg)?;
    let loss = clip_loss(&trace, clip.label)?;
    let grads = backward(&trace, clip.label)?;
    Ok((loss, grads))
}
