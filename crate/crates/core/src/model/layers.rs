//! Recurrent and attention building blocks recorded on a [`Tape`].

use crate::error::{Error, Result};
use crate::math::tape::{Tape, Var};
use crate::math::ParamId;
use crate::model::params::{AttnBlock, LstmBlock};

/// Hidden and cell state after one LSTM step.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

fn hidden_of(tape: &Tape<'_>, block: &LstmBlock) -> usize {
    tape.params().get(block.b).len() / 4
}

/// One LSTM step from `state` (zero when `None`).
pub fn lstm_cell(tape: &mut Tape<'_>, block: &LstmBlock, x: Var, state: Option<LstmState>) -> LstmState {
    let hidden = hidden_of(tape, block);
    let joint = tape.lstm(block.w, block.b, x, state.map(|s| s.h), state.map(|s| s.c));
    LstmState {
        h: tape.slice(joint, 0, hidden),
        c: tape.slice(joint, hidden, hidden),
    }
}

/// Hidden states of a unidirectional pass, returned in input order.
pub fn run_lstm(tape: &mut Tape<'_>, block: &LstmBlock, inputs: &[Var], reverse: bool) -> Vec<Var> {
    let mut out = vec![None; inputs.len()];
    let mut state = None;
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for t in order {
        let s = lstm_cell(tape, block, inputs[t], state);
        out[t] = Some(s.h);
        state = Some(s);
    }
    out.into_iter().map(|h| h.expect("every step visited")).collect()
}

/// Bidirectional pass: `concat(h_fwd_t, h_bwd_t)` per step, forward half first.
pub fn blstm(tape: &mut Tape<'_>, fwd: &LstmBlock, bwd: &LstmBlock, seq: &[Var]) -> Result<Vec<Var>> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("bidirectional LSTM over an empty sequence"));
    }
    let forward = run_lstm(tape, fwd, seq, false);
    let backward = run_lstm(tape, bwd, seq, true);
    Ok(forward
        .into_iter()
        .zip(backward)
        .map(|(f, b)| tape.concat(&[f, b]))
        .collect())
}

/// Rectified affine embedding.
pub fn embed(tape: &mut Tape<'_>, (w, b): (ParamId, ParamId), x: Var) -> Var {
    let z = tape.affine(w, Some(b), x);
    tape.relu(z)
}

/// Runs the track BLSTM over each track's embedded features independently.
pub fn track_states(
    tape: &mut Tape<'_>,
    fwd: &LstmBlock,
    bwd: &LstmBlock,
    tracks: &[Vec<Var>],
) -> Result<Vec<Vec<Var>>> {
    tracks.iter().map(|seq| blstm(tape, fwd, bwd, seq)).collect()
}

/// Attended feature and, for non-empty frames, the weight node.
#[derive(Clone, Copy, Debug)]
pub struct Attended {
    pub feature: Var,
    pub weights: Option<Var>,
}

/// Temperature-softmax attention over `reprs`.
///
/// Each item is scored by `v^T tanh(W_f h_f + W_p r_i + W_e h_e_prev + b) + c`. With no
/// items the attended feature is a zero vector of width `repr_dim`.
pub fn attention(
    tape: &mut Tape<'_>,
    attn: &AttnBlock,
    h_frame: Option<Var>,
    reprs: &[Var],
    h_event_prev: Var,
    tau: f64,
    repr_dim: usize,
) -> Attended {
    if reprs.is_empty() {
        return Attended {
            feature: tape.zeros(repr_dim),
            weights: None,
        };
    }
    let mut shared_parts = vec![tape.affine(attn.w_event, Some(attn.b), h_event_prev)];
    if let (Some(w), Some(hf)) = (attn.w_frame, h_frame) {
        shared_parts.push(tape.affine(w, None, hf));
    }
    let shared = if shared_parts.len() == 1 {
        shared_parts[0]
    } else {
        tape.add(&shared_parts)
    };
    let scores: Vec<Var> = reprs
        .iter()
        .map(|&r| {
            let own = tape.affine(attn.w_player, None, r);
            let hidden = tape.add(&[shared, own]);
            let act = tape.tanh(hidden);
            tape.affine(attn.v, Some(attn.c), act)
        })
        .collect();
    let logits = tape.concat(&scores);
    let weights = tape.softmax(logits, tau);
    Attended {
        feature: tape.weighted_sum(weights, reprs),
        weights: Some(weights),
    }
}

/// Unweighted mean of `reprs`, zero when empty.
pub fn avg_player(tape: &mut Tape<'_>, reprs: &[Var], repr_dim: usize) -> Var {
    if reprs.is_empty() {
        tape.zeros(repr_dim)
    } else {
        tape.mean(reprs)
    }
}
