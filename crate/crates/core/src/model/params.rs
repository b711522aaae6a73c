use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{ParamId, ParamSet, Tensor};
use crate::model::ModelConfig;

const RECURRENT_INIT: f32 = 0.08;

/// Weight and bias of one LSTM: `w: [4H, in + H]`, `b: [4H]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmBlock {
    pub w: ParamId,
    pub b: ParamId,
}

/// Scorer `v^T tanh(W_f h_f + W_p r + W_e h_e + b) + c`.
#[derive(Clone, Copy, Debug)]
pub struct AttnBlock {
    pub w_frame: Option<ParamId>,
    pub w_player: ParamId,
    pub w_event: ParamId,
    pub b: ParamId,
    pub v: ParamId,
    pub c: ParamId,
}

/// Resolved handles for every tensor the configured mode uses.
#[derive(Clone, Copy, Debug)]
pub struct Handles {
    pub frame_embed: Option<(ParamId, ParamId)>,
    pub player_embed: Option<(ParamId, ParamId)>,
    pub frame_rnn: Option<(LstmBlock, LstmBlock)>,
    pub track_rnn: Option<(LstmBlock, LstmBlock)>,
    pub event_rnn: LstmBlock,
    pub attn: Option<AttnBlock>,
    pub classifier: ParamId,
}

enum Init {
    Recurrent,
    He,
    Xavier,
    Zero,
}

/// Name, shape and initialization of every tensor, in manifest order.
fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (h, e, a) = (cfg.hidden_dim, cfg.embed_dim, cfg.attn_dim);
    let mut out = Vec::new();
    let lstm = |out: &mut Vec<_>, name: &str, input: usize| {
        out.push((format!("{name}.w"), vec![4 * h, input + h], Init::Recurrent));
        out.push((format!("{name}.b"), vec![4 * h], Init::Zero));
    };
    if cfg.mode.has_frame_stream() {
        out.push(("frame_embed.w".into(), vec![e, cfg.d_frame], Init::He));
        out.push(("frame_embed.b".into(), vec![e], Init::Zero));
        lstm(&mut out, "frame_rnn.fwd", e);
        lstm(&mut out, "frame_rnn.bwd", e);
    }
    if cfg.mode.uses_players() {
        out.push(("player_embed.w".into(), vec![e, cfg.d_player()], Init::He));
        out.push(("player_embed.b".into(), vec![e], Init::Zero));
    }
    if cfg.mode.needs_tracks() {
        lstm(&mut out, "track_rnn.fwd", e);
        lstm(&mut out, "track_rnn.bwd", e);
    }
    if cfg.mode.attends() {
        if cfg.mode.has_frame_stream() {
            out.push(("attn.w_frame".into(), vec![a, 2 * h], Init::Xavier));
        }
        out.push(("attn.w_player".into(), vec![a, cfg.repr_dim()], Init::Xavier));
        out.push(("attn.w_event".into(), vec![a, h], Init::Xavier));
        out.push(("attn.b".into(), vec![a], Init::Zero));
        out.push(("attn.v".into(), vec![1, a], Init::Xavier));
        out.push(("attn.c".into(), vec![1], Init::Zero));
    }
    lstm(&mut out, "event_rnn", cfg.event_input_dim());
    out.push(("classifier.w".into(), vec![cfg.num_classes, h], Init::Recurrent));
    out
}

/// Expected `(name, shape)` table for a configuration.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    layout(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Recurrent weights and classifier rows uniform in ±0.08, embeddings He-uniform,
/// scorer Xavier-uniform, biases zero.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    for (name, shape, init) in layout(cfg) {
        let len: usize = shape.iter().product();
        let fan_in = *shape.last().unwrap() as f32;
        let fan_out = shape[0] as f32;
        let bound = match init {
            Init::Recurrent => RECURRENT_INIT,
            Init::He => (6.0 / fan_in).sqrt(),
            Init::Xavier => (6.0 / (fan_in + fan_out)).sqrt(),
            Init::Zero => 0.0,
        };
        let data = if bound == 0.0 {
            vec![0.0; len]
        } else {
            (0..len).map(|_| rng.random_range(-bound..bound)).collect()
        };
        params.insert(name, Tensor::new(shape, data)?)?;
    }
    Ok(params)
}

/// Checks names and shapes of `params` against `cfg`.
pub fn check_shapes(cfg: &ModelConfig, params: &ParamSet) -> Result<()> {
    let expected = param_shapes(cfg);
    for (name, shape) in &expected {
        let found = params
            .by_name(name)
            .ok_or_else(|| Error::validation(format!("missing tensor `{name}`")))?;
        if found.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                name: name.clone(),
                expected: shape.clone(),
                found: found.shape().to_vec(),
            });
        }
    }
    if params.len() != expected.len() {
        return Err(Error::validation(format!(
            "{} tensors present, configuration expects {}",
            params.len(),
            expected.len()
        )));
    }
    Ok(())
}

impl Handles {
    pub fn resolve(cfg: &ModelConfig, params: &ParamSet) -> Result<Self> {
        check_shapes(cfg, params)?;
        let id = |n: &str| params.id(n).expect("shape check covers names");
        let pair = |p: &str| (id(&format!("{p}.w")), id(&format!("{p}.b")));
        let block = |p: &str| {
            let (w, b) = pair(p);
            LstmBlock { w, b }
        };
        let mode = cfg.mode;
        Ok(Self {
            frame_embed: mode.has_frame_stream().then(|| pair("frame_embed")),
            player_embed: mode.uses_players().then(|| pair("player_embed")),
            frame_rnn: mode
                .has_frame_stream()
                .then(|| (block("frame_rnn.fwd"), block("frame_rnn.bwd"))),
            track_rnn: mode
                .needs_tracks()
                .then(|| (block("track_rnn.fwd"), block("track_rnn.bwd"))),
            event_rnn: block("event_rnn"),
            attn: mode.attends().then(|| AttnBlock {
                w_frame: mode.has_frame_stream().then(|| id("attn.w_frame")),
                w_player: id("attn.w_player"),
                w_event: id("attn.w_event"),
                b: id("attn.b"),
                v: id("attn.v"),
                c: id("attn.c"),
            }),
            classifier: id("classifier.w"),
        })
    }
}

/// Parameter groups (tensor names minus the final `.w`/`.b` segment) in manifest order.
pub fn param_blocks(cfg: &ModelConfig) -> Vec<String> {
    let mut blocks: Vec<String> = Vec::new();
    for (name, _, _) in layout(cfg) {
        let prefix = name.rsplit_once('.').map_or(name.as_str(), |(p, _)| p).to_string();
        if !blocks.contains(&prefix) {
            blocks.push(prefix);
        }
    }
    blocks
}
