//! Planted-key-player clip generator.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::spatial::{spatial_dim, DEFAULT_LEVELS};
use crate::features::{BoundingBox, Clip, Dataset, DatasetHeader, Detection, Frame, Label};

/// Pins the key player of one class to a fixed box center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyAnchor {
    pub class: usize,
    pub x: f32,
    pub y: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub num_clips: usize,
    pub frames: usize,
    pub fps: f64,
    pub players_min: usize,
    pub players_max: usize,
    pub d_app: usize,
    pub d_frame: usize,
    pub spatial_levels: Vec<usize>,
    pub signal_strength: f32,
    pub noise_sigma: f32,
    /// Frames `[start, end)` during which the key player carries the class signal.
    pub active_window: (usize, usize),
    /// Scale of a class cue mixed into the frame feature. Zero leaves frames uninformative.
    pub cue_leak: f32,
    pub empty_frame_prob: f64,
    /// Box width range; heights are twice the width.
    pub box_width: (f32, f32),
    pub max_speed: f32,
    pub jitter: f32,
    /// Give each player its own horizontal lane so boxes of distinct players never touch.
    pub separated_lanes: bool,
    pub key_anchor: Option<KeyAnchor>,
    /// Extra clips labeled NEGATIVE in which no player carries a signal.
    pub negative_clips: usize,
    /// Seeds the class prototypes; splits that share it share the planted signal.
    pub prototype_seed: u64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 11,
            num_clips: 200,
            frames: 24,
            fps: 6.0,
            players_min: 5,
            players_max: 6,
            d_app: 64,
            d_frame: 64,
            spatial_levels: DEFAULT_LEVELS.to_vec(),
            signal_strength: 1.0,
            noise_sigma: 0.1,
            active_window: (4, 20),
            cue_leak: 0.0,
            empty_frame_prob: 0.02,
            box_width: (0.04, 0.08),
            max_speed: 0.01,
            jitter: 0.002,
            separated_lanes: false,
            key_anchor: None,
            negative_clips: 0,
            prototype_seed: 0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes == 0 || self.frames == 0 {
            return bad("num_classes and frames must be positive".into());
        }
        if self.num_classes > self.d_app {
            return bad(format!(
                "cannot build {} orthogonal prototypes in {} appearance dimensions",
                self.num_classes, self.d_app
            ));
        }
        if self.cue_leak != 0.0 && self.num_classes > self.d_frame {
            return bad(format!(
                "cue_leak needs num_classes ({}) <= d_frame ({})",
                self.num_classes, self.d_frame
            ));
        }
        let (start, end) = self.active_window;
        if !(start < end && end <= self.frames) {
            return bad(format!("active window {start}..{end} outside 0..{}", self.frames));
        }
        if !(self.signal_strength > 0.0) || self.noise_sigma < 0.0 {
            return bad("signal_strength must be positive and noise_sigma non-negative".into());
        }
        if self.players_min == 0 || self.players_min > self.players_max {
            return bad(format!("bad player range {}..={}", self.players_min, self.players_max));
        }
        if !(0.0..=1.0).contains(&self.empty_frame_prob) {
            return bad("empty_frame_prob must be a probability".into());
        }
        let (w0, w1) = self.box_width;
        if !(w0 > 0.0 && w0 <= w1 && 2.0 * w1 < 1.0) {
            return bad(format!("bad box width range {w0}..{w1}"));
        }
        if self.spatial_levels.is_empty() || self.spatial_levels.contains(&0) {
            return bad(format!("bad spatial levels {:?}", self.spatial_levels));
        }
        if let Some(a) = &self.key_anchor {
            if a.class >= self.num_classes || !(0.0..=1.0).contains(&a.x) || !(0.0..=1.0).contains(&a.y) {
                return bad(format!("bad key anchor {a:?}"));
            }
        }
        Ok(())
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            version: 1,
            d_frame: self.d_frame,
            d_app: self.d_app,
            d_sp: spatial_dim(&self.spatial_levels),
            k: self.num_classes,
            fps: self.fps,
        }
    }
}

/// `count` mutually orthogonal unit vectors of width `dim` (Gram-Schmidt on Gaussian draws).
pub fn orthonormal_prototypes<R: Rng>(count: usize, dim: usize, rng: &mut R) -> Vec<Vec<f32>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        basis.push(v.into_iter().map(|x| x / norm).collect());
    }
    basis
        .into_iter()
        .map(|v| v.into_iter().map(|x| x as f32).collect())
        .collect()
}

/// Shared random state of one dataset: class prototypes for players and frames.
pub struct Prototypes {
    pub player: Vec<Vec<f32>>,
    pub frame: Vec<Vec<f32>>,
}

impl Prototypes {
    pub fn for_config(cfg: &SynthConfig) -> Self {
        Self::new(cfg, &mut ChaCha8Rng::seed_from_u64(cfg.prototype_seed))
    }

    pub fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let player = orthonormal_prototypes(cfg.num_classes, cfg.d_app, rng);
        let frame = if cfg.num_classes <= cfg.d_frame {
            orthonormal_prototypes(cfg.num_classes, cfg.d_frame, rng)
        } else {
            Vec::new()
        };
        Self { player, frame }
    }
}

struct Mover {
    center: [f32; 2],
    velocity: [f32; 2],
    half: [f32; 2],
}

impl Mover {
    fn bbox(&self, t: usize, jitter: &mut impl FnMut() -> f32) -> BoundingBox {
        let mut c = [0.0f32; 2];
        for a in 0..2 {
            let raw = self.center[a] + self.velocity[a] * t as f32 + jitter();
            c[a] = raw.clamp(self.half[a], 1.0 - self.half[a]);
        }
        BoundingBox {
            x_min: (c[0] - self.half[0]).max(0.0),
            y_min: (c[1] - self.half[1]).max(0.0),
            x_max: (c[0] + self.half[0]).min(1.0),
            y_max: (c[1] + self.half[1]).min(1.0),
        }
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, sigma: f32) -> Vec<f32> {
    if sigma == 0.0 {
        return vec![0.0; dim];
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    (0..dim).map(|_| normal.sample(rng)).collect()
}

/// Motion, appearance and ball annotation for one clip of class `class`.
///
/// `key_active(t)` says whether the key player carries the class signal at frame `t`.
pub(crate) fn generate_frames(
    cfg: &SynthConfig,
    protos: &Prototypes,
    class: Option<usize>,
    frames: usize,
    key_active: &dyn Fn(usize) -> bool,
    rng: &mut ChaCha8Rng,
) -> Vec<Frame> {
    let players = rng.random_range(cfg.players_min..=cfg.players_max);
    let key = rng.random_range(0..players);
    let lane_height = 1.0 / players as f32;

    let mut movers: Vec<Mover> = (0..players)
        .map(|p| {
            let mut w = rng.random_range(cfg.box_width.0..=cfg.box_width.1);
            let mut h = 2.0 * w;
            if cfg.separated_lanes {
                h = h.min(0.8 * lane_height);
                w = w.min(0.5 * h);
                let cy = (p as f32 + 0.5) * lane_height;
                let cx = rng.random_range(0.2f32..0.8);
                let vx = rng.random_range(-cfg.max_speed..=cfg.max_speed);
                Mover {
                    center: [cx, cy],
                    velocity: [vx, 0.0],
                    half: [w / 2.0, h / 2.0],
                }
            } else {
                let cx = rng.random_range(0.1f32..0.9);
                let cy = rng.random_range(0.1f32..0.9);
                let v = [
                    rng.random_range(-cfg.max_speed..=cfg.max_speed),
                    rng.random_range(-cfg.max_speed..=cfg.max_speed),
                ];
                Mover {
                    center: [cx, cy],
                    velocity: v,
                    half: [w / 2.0, h / 2.0],
                }
            }
        })
        .collect();
    if let (Some(anchor), Some(k)) = (&cfg.key_anchor, class) {
        if anchor.class == k {
            movers[key].center = [anchor.x, anchor.y];
            movers[key].velocity = [0.0, 0.0];
        }
    }

    let jitter_sigma = cfg.jitter;
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut feature = gaussian_vec(rng, cfg.d_frame, cfg.noise_sigma);
        if let (Some(k), true) = (class, cfg.cue_leak != 0.0) {
            for (f, &p) in feature.iter_mut().zip(&protos.frame[k]) {
                *f += cfg.cue_leak * p;
            }
        }
        let empty = cfg.empty_frame_prob > 0.0 && rng.random_bool(cfg.empty_frame_prob);
        let mut detections = Vec::new();
        let mut ball = None;
        if !empty {
            for (p, mover) in movers.iter().enumerate() {
                let mut jit = || {
                    if jitter_sigma == 0.0 {
                        0.0
                    } else {
                        rng.sample::<f32, _>(StandardNormal) * jitter_sigma
                    }
                };
                let bbox = mover.bbox(t, &mut jit);
                let mut appearance = gaussian_vec(rng, cfg.d_app, cfg.noise_sigma);
                let active = p == key && key_active(t);
                if let (true, Some(k)) = (active, class) {
                    for (a, &m) in appearance.iter_mut().zip(&protos.player[k]) {
                        *a += cfg.signal_strength * m;
                    }
                    let c = bbox.center();
                    ball = Some([c[0] as f32, c[1] as f32]);
                }
                detections.push(Detection {
                    bbox,
                    appearance,
                    confidence: rng.random_range(0.5f32..1.0),
                    track_id: None,
                    gt_player_id: Some(p as u32),
                });
            }
            detections.shuffle(rng);
        }
        out.push(Frame {
            index: t,
            feature,
            detections,
            ball,
        });
    }
    out
}

/// Deterministic planted-signal dataset with exactly balanced classes.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let protos = Prototypes::for_config(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels: Vec<Option<usize>> = (0..cfg.num_clips).map(|i| Some(i % cfg.num_classes)).collect();
    labels.extend(std::iter::repeat_n(None, cfg.negative_clips));
    labels.shuffle(&mut rng);
    let (start, end) = cfg.active_window;
    let active = move |t: usize| t >= start && t < end;

    let clips = labels
        .into_iter()
        .enumerate()
        .map(|(i, k)| Clip {
            clip_id: format!("s{}-{i:05}", cfg.seed),
            label: k.map_or(Label::Negative, Label::Event),
            fps: cfg.fps,
            frames: generate_frames(cfg, &protos, k, cfg.frames, &active, &mut rng),
        })
        .collect();
    Ok(Dataset {
        header: cfg.header(),
        clips,
    })
}

/// A labeled event inside a long sequence, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub class: usize,
    pub start: f64,
    pub end: f64,
}

/// An untrimmed sequence with its ground-truth events.
#[derive(Clone, Debug, PartialEq)]
pub struct Timeline {
    pub clip: Clip,
    pub events: Vec<TimelineEvent>,
}

impl Timeline {
    pub fn duration(&self) -> f64 {
        self.clip.frames.len() as f64 / self.clip.fps
    }
}

/// Builds an untrimmed sequence out of 2 s segments: 4 s events of random classes
/// (key player active throughout) separated by background segments.
///
/// Players are redrawn at every segment boundary.
pub fn synth_timeline(cfg: &SynthConfig, duration: f64, event_prob: f64) -> Result<Timeline> {
    cfg.validate()?;
    let unit = (2.0 * cfg.fps).round() as usize;
    if unit == 0 || (2.0 * cfg.fps - unit as f64).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "fps {} does not give whole 2 s segments",
            cfg.fps
        )));
    }
    if !(duration >= 0.0) || !(0.0..=1.0).contains(&event_prob) {
        return Err(Error::Config("bad timeline duration or event probability".into()));
    }
    let protos = Prototypes::for_config(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = (duration * cfg.fps).round() as usize;
    let mut frames: Vec<Frame> = Vec::with_capacity(total);
    let mut events = Vec::new();
    while frames.len() < total {
        let remaining = total - frames.len();
        let (class, len) = if remaining >= 2 * unit && rng.random_bool(event_prob) {
            (Some(rng.random_range(0..cfg.num_classes)), 2 * unit)
        } else {
            (None, unit.min(remaining))
        };
        if let Some(k) = class {
            let start = frames.len() as f64 / cfg.fps;
            events.push(TimelineEvent {
                class: k,
                start,
                end: start + len as f64 / cfg.fps,
            });
        }
        let offset = frames.len();
        for mut f in generate_frames(cfg, &protos, class, len, &|_| true, &mut rng) {
            f.index += offset;
            frames.push(f);
        }
    }
    Ok(Timeline {
        clip: Clip {
            clip_id: format!("timeline-s{}", cfg.seed),
            label: Label::Negative,
            fps: cfg.fps,
            frames,
        },
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            num_classes: 4,
            num_clips: 40,
            d_app: 8,
            d_frame: 6,
            spatial_levels: vec![2, 1],
            ..SynthConfig::default()
        }
    }

    fn key_of(frame: &Frame, ball: [f32; 2]) -> &Detection {
        frame
            .detections
            .iter()
            .find(|d| {
                let c = d.bbox.center();
                c[0] as f32 == ball[0] && c[1] as f32 == ball[1]
            })
            .unwrap()
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synth_dataset(&small()).unwrap();
        let b = synth_dataset(&small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_classes_for_appearance() {
        let cfg = SynthConfig {
            num_classes: 9,
            ..small()
        };
        assert!(matches!(synth_dataset(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn prototypes_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = orthonormal_prototypes(5, 7, &mut rng);
        for i in 0..5 {
            for j in 0..5 {
                let d: f32 = p[i].iter().zip(&p[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn noise_free_key_equals_prototype() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            signal_strength: 1.0,
            empty_frame_prob: 0.0,
            ..small()
        };
        let data = synth_dataset(&cfg).unwrap();
        let protos = Prototypes::for_config(&cfg);
        for clip in &data.clips {
            let k = clip.label.event().unwrap();
            for (t, frame) in clip.frames.iter().enumerate() {
                let active = (cfg.active_window.0..cfg.active_window.1).contains(&t);
                assert_eq!(frame.ball.is_some(), active);
                if let Some(ball) = frame.ball {
                    assert_eq!(key_of(frame, ball).appearance, protos.player[k]);
                }
            }
        }
    }

    #[test]
    fn boxes_valid_and_gt_populated() {
        let data = synth_dataset(&small()).unwrap();
        for clip in &data.clips {
            assert_eq!(clip.frames.len(), 24);
            data.validate_clip(clip).unwrap();
            for d in clip.frames.iter().flat_map(|f| &f.detections) {
                assert!(d.gt_player_id.is_some());
            }
        }
    }

    #[test]
    fn class_balance_over_many_clips() {
        let cfg = SynthConfig {
            num_clips: 550,
            ..small()
        };
        let data = synth_dataset(&cfg).unwrap();
        let mut counts = vec![0usize; cfg.num_classes];
        for c in &data.clips {
            counts[c.label.event().unwrap()] += 1;
        }
        let uniform = cfg.num_clips as f64 / cfg.num_classes as f64;
        for c in counts {
            assert!((c as f64 - uniform).abs() <= 0.2 * uniform);
        }
    }

    #[test]
    fn anchored_key_player_is_stationary() {
        let cfg = SynthConfig {
            key_anchor: Some(KeyAnchor {
                class: 1,
                x: 0.3,
                y: 0.6,
            }),
            jitter: 0.0,
            empty_frame_prob: 0.0,
            ..small()
        };
        let data = synth_dataset(&cfg).unwrap();
        for clip in data.clips.iter().filter(|c| c.label == Label::Event(1)) {
            for frame in &clip.frames {
                if let Some(ball) = frame.ball {
                    assert!((ball[0] - 0.3).abs() < 1e-6 && (ball[1] - 0.6).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn separated_lanes_never_overlap() {
        let cfg = SynthConfig {
            separated_lanes: true,
            ..small()
        };
        let data = synth_dataset(&cfg).unwrap();
        for frame in data.clips.iter().flat_map(|c| &c.frames) {
            for (i, a) in frame.detections.iter().enumerate() {
                for b in &frame.detections[i + 1..] {
                    assert_eq!(a.bbox.intersection_area(&b.bbox), 0.0);
                }
            }
        }
    }

    #[test]
    fn splits_share_prototypes() {
        let a = SynthConfig { seed: 1, ..small() };
        let b = SynthConfig { seed: 2, ..small() };
        assert_eq!(Prototypes::for_config(&a).player, Prototypes::for_config(&b).player);
        assert_ne!(synth_dataset(&a).unwrap().clips, synth_dataset(&b).unwrap().clips);
    }

    #[test]
    fn negatives_carry_no_ball() {
        let cfg = SynthConfig {
            num_clips: 8,
            negative_clips: 5,
            ..small()
        };
        let data = synth_dataset(&cfg).unwrap();
        let negatives: Vec<_> = data.clips.iter().filter(|c| c.label == Label::Negative).collect();
        assert_eq!(negatives.len(), 5);
        assert_eq!(data.clips.len(), 13);
        assert!(negatives.iter().all(|c| c.frames.iter().all(|f| f.ball.is_none())));
    }

    #[test]
    fn timeline_events_on_grid() {
        let cfg = SynthConfig { seed: 4, ..small() };
        let tl = synth_timeline(&cfg, 61.0, 0.5).unwrap();
        assert_eq!(tl.clip.frames.len(), 366);
        assert!((tl.duration() - 61.0).abs() < 1e-12);
        assert!(!tl.events.is_empty());
        for (i, e) in tl.events.iter().enumerate() {
            assert_eq!(e.end - e.start, 4.0);
            assert_eq!(e.start % 2.0, 0.0);
            assert!(e.end <= 61.0);
            if i > 0 {
                assert!(e.start >= tl.events[i - 1].end);
            }
            let (a, b) = ((e.start * 6.0) as usize, (e.end * 6.0) as usize);
            assert!(tl.clip.frames[a..b]
                .iter()
                .all(|f| f.ball.is_some() || f.detections.is_empty()));
        }
        for (t, f) in tl.clip.frames.iter().enumerate() {
            assert_eq!(f.index, t);
            let inside = tl
                .events
                .iter()
                .any(|e| (t as f64) / 6.0 >= e.start && (t as f64) / 6.0 < e.end);
            if !inside {
                assert!(f.ball.is_none());
            }
        }
    }
}
