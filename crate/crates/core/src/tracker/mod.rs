//! Frame-to-frame association of detections into player tracks.

mod hungarian;

use serde::{Deserialize, Serialize};

pub use hungarian::{hungarian, Assignment, CostMatrix, FORBIDDEN};

use crate::features::{BoundingBox, Clip, Detection};

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Cosine similarity; two zero vectors count as identical, one zero vector as unrelated.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    match (aa == 0.0, bb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    pub w_iou: f64,
    pub w_app: f64,
    /// Box-center distance beyond which non-overlapping pairs are forbidden.
    pub gate_radius: f64,
    pub accept_threshold: f64,
    /// Frames a track may go unmatched before it terminates.
    pub max_gap: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            w_iou: 1.0,
            w_app: 0.5,
            gate_radius: 0.2,
            accept_threshold: 0.7,
            max_gap: 2,
        }
    }
}

/// `w_iou (1 - IoU) + w_app (1 - cos) / 2`, or [`FORBIDDEN`] for distant non-overlapping boxes.
pub fn association_cost(tail: &Detection, det: &Detection, params: &TrackerParams) -> f64 {
    let overlap = iou(&tail.bbox, &det.bbox);
    if overlap == 0.0 {
        let (a, b) = (tail.bbox.center(), det.bbox.center());
        let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        if dist > params.gate_radius {
            return FORBIDDEN;
        }
    }
    let cos = cosine_similarity(&tail.appearance, &det.appearance);
    params.w_iou * (1.0 - overlap) + params.w_app * (1.0 - cos) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrackState {
    Active,
    Terminated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub track_id: u32,
    /// `(frame_index, detection_index)` with strictly increasing frames.
    pub entries: Vec<(usize, usize)>,
    pub state: TrackState,
}

impl Track {
    fn last_frame(&self) -> usize {
        self.entries.last().expect("tracks are born with one entry").0
    }
}

/// Links detections frame by frame and writes the resulting ids into `clip`.
///
/// Existing `track_id`s are ignored and overwritten, so relinking is idempotent.
pub fn link_tracks(clip: &mut Clip, params: &TrackerParams) -> Vec<Track> {
    let mut tracks: Vec<Track> = Vec::new();
    for t in 0..clip.frames.len() {
        for track in tracks.iter_mut().filter(|tr| tr.state == TrackState::Active) {
            if t - track.last_frame() > params.max_gap + 1 {
                track.state = TrackState::Terminated;
            }
        }
        let active: Vec<usize> = (0..tracks.len())
            .filter(|&i| tracks[i].state == TrackState::Active)
            .collect();
        let dets = &clip.frames[t].detections;

        let mut values = Vec::with_capacity(active.len() * dets.len());
        for &ti in &active {
            let (f, d) = *tracks[ti].entries.last().unwrap();
            let tail = &clip.frames[f].detections[d];
            values.extend(dets.iter().map(|det| association_cost(tail, det, params)));
        }
        let costs = CostMatrix::new(active.len(), dets.len(), values).expect("costs are non-negative");
        let assignment = hungarian(&costs);

        let mut owner: Vec<Option<usize>> = vec![None; dets.len()];
        for &(r, c) in &assignment.pairs {
            if costs.get(r, c) <= params.accept_threshold {
                owner[c] = Some(active[r]);
            }
        }
        for (d, slot) in owner.into_iter().enumerate() {
            match slot {
                Some(ti) => tracks[ti].entries.push((t, d)),
                None => tracks.push(Track {
                    track_id: tracks.len() as u32,
                    entries: vec![(t, d)],
                    state: TrackState::Active,
                }),
            }
        }
    }
    let end = clip.frames.len();
    for track in &mut tracks {
        if end - track.last_frame() > params.max_gap + 1 {
            track.state = TrackState::Terminated;
        }
        for &(f, d) in &track.entries {
            clip.frames[f].detections[d].track_id = Some(track.track_id);
        }
    }
    tracks
}

/// Fraction of detections whose track and ground-truth identity are each other's majority match.
///
/// Returns `None` when no detection carries a ground-truth id.
pub fn gt_agreement(clip: &Clip) -> Option<f64> {
    use std::collections::HashMap;
    let pairs: Vec<(u32, u32)> = clip
        .frames
        .iter()
        .flat_map(|f| &f.detections)
        .filter_map(|d| Some((d.track_id?, d.gt_player_id?)))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
    for &p in &pairs {
        *counts.entry(p).or_default() += 1;
    }
    let majority = |key_of: &dyn Fn(&(u32, u32)) -> u32, val_of: &dyn Fn(&(u32, u32)) -> u32| {
        let mut best: HashMap<u32, (usize, u32)> = HashMap::new();
        let mut keys: Vec<_> = counts.iter().collect();
        keys.sort();
        for (p, &n) in keys {
            let e = best.entry(key_of(p)).or_insert((0, val_of(p)));
            if n > e.0 {
                *e = (n, val_of(p));
            }
        }
        best
    };
    let track_major = majority(&|p| p.0, &|p| p.1);
    let gt_major = majority(&|p| p.1, &|p| p.0);
    let good = pairs
        .iter()
        .filter(|(tr, gt)| track_major[tr].1 == *gt && gt_major[gt].1 == *tr)
        .count();
    Some(good as f64 / pairs.len() as f64)
}
