use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{multi_label_map, ClassAp};
use crate::features::{Clip, Label, Timeline, TimelineEvent};
use crate::math::ParamSet;
use crate::model::{forward, ModelConfig};

pub const WINDOW_SECONDS: f64 = 4.0;
pub const STRIDE_SECONDS: f64 = 2.0;
/// A window is positive for a class when it overlaps one of its events by more than this.
pub const MIN_OVERLAP_SECONDS: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionWindow {
    pub start: f64,
    pub duration: f64,
    /// Event-class scores (the background score is dropped).
    pub scores: Vec<f32>,
}

/// Window start times `0, stride, 2 stride, ...` while `start + window <= length`.
pub fn window_starts(length: f64, window: f64, stride: f64) -> Vec<f64> {
    if length < window {
        return Vec::new();
    }
    let count = ((length - window) / stride + 1e-9).floor() as usize + 1;
    (0..count).map(|i| i as f64 * stride).collect()
}

pub fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// Per-class ground truth of the window `[start, start + duration)`.
pub fn window_labels(start: f64, duration: f64, events: &[TimelineEvent], num_classes: usize) -> Vec<bool> {
    let mut out = vec![false; num_classes];
    for e in events {
        if e.class < num_classes && overlap((start, start + duration), (e.start, e.end)) > MIN_OVERLAP_SECONDS {
            out[e.class] = true;
        }
    }
    out
}

/// Cuts `[start, start + duration)` out of a long clip as its own clip.
pub fn window_clip(clip: &Clip, start: f64, duration: f64) -> Clip {
    let a = (start * clip.fps).round() as usize;
    let b = (((start + duration) * clip.fps).round() as usize).min(clip.frames.len());
    let mut frames = clip.frames[a..b].to_vec();
    for (t, f) in frames.iter_mut().enumerate() {
        f.index = t;
    }
    Clip {
        clip_id: format!("{}@{start}", clip.clip_id),
        label: Label::Negative,
        fps: clip.fps,
        frames,
    }
}

/// Scores every 4 s window of the timeline at 2 s stride with a (K+1)-way model.
pub fn sliding_detect(timeline: &Timeline, params: &ParamSet, cfg: &ModelConfig) -> Result<Vec<DetectionWindow>> {
    if !cfg.negative_class {
        return Err(Error::Config(
            "detection needs a model trained with the NEGATIVE class".into(),
        ));
    }
    let length = timeline.duration();
    if length < WINDOW_SECONDS {
        return Err(Error::validation(format!(
            "timeline of {length} s is shorter than one window"
        )));
    }
    let k = cfg.event_classes();
    window_starts(length, WINDOW_SECONDS, STRIDE_SECONDS)
        .into_par_iter()
        .map(|start| {
            let clip = window_clip(&timeline.clip, start, WINDOW_SECONDS);
            let trace = forward(&clip, params, cfg)?;
            Ok(DetectionWindow {
                start,
                duration: WINDOW_SECONDS,
                scores: trace.clip_scores[..k].to_vec(),
            })
        })
        .collect()
}

/// Detection AP per class over all windows of all timelines pooled together.
pub fn detect_eval(windows: &[(Vec<DetectionWindow>, &[TimelineEvent])], num_classes: usize) -> Result<ClassAp> {
    let mut scores = Vec::new();
    let mut positives = Vec::new();
    for (ws, events) in windows {
        for w in ws {
            scores.push(w.scores.clone());
            positives.push(window_labels(w.start, w.duration, events, num_classes));
        }
    }
    multi_label_map(&scores, &positives, num_classes)
}

/// Training windows cut from labeled timelines: windows covering an event by more
/// than the overlap rule take its class (the larger overlap wins), the rest are NEGATIVE.
pub fn windowed_training_set(timeline: &Timeline, num_classes: usize) -> Vec<Clip> {
    window_starts(timeline.duration(), WINDOW_SECONDS, STRIDE_SECONDS)
        .into_iter()
        .map(|start| {
            let mut clip = window_clip(&timeline.clip, start, WINDOW_SECONDS);
            let best = timeline
                .events
                .iter()
                .filter(|e| e.class < num_classes)
                .map(|e| (overlap((start, start + WINDOW_SECONDS), (e.start, e.end)), e.class))
                .filter(|&(o, _)| o > MIN_OVERLAP_SECONDS)
                .max_by(|a, b| a.0.total_cmp(&b.0));
            clip.label = best.map_or(Label::Negative, |(_, k)| Label::Event(k));
            clip
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::eval::ap::tests::brute_force_ap;
    use crate::eval::average_precision;

    fn ev(class: usize, start: f64) -> TimelineEvent {
        TimelineEvent {
            class,
            start,
            end: start + 4.0,
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_starts(60.0, 4.0, 2.0).len(), 29);
        assert_eq!(window_starts(4.0, 4.0, 2.0), vec![0.0]);
        assert!(window_starts(3.9, 4.0, 2.0).is_empty());
        assert_eq!(window_starts(9.0, 4.0, 2.0), vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn overlap_rule() {
        let events = [ev(0, 10.0)];
        assert_eq!(window_labels(10.0, 4.0, &events, 2), vec![true, false]);
        assert_eq!(window_labels(13.5, 4.0, &events, 2), vec![false, false]);
        // exactly 1 s is not more than 1 s
        assert_eq!(window_labels(13.0, 4.0, &events, 2), vec![false, false]);
        assert_eq!(window_labels(12.9, 4.0, &events, 2), vec![true, false]);
    }

    #[test]
    fn random_timelines_against_interval_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let length = rng.random_range(4.0..200.0);
            let starts = window_starts(length, 4.0, 2.0);
            assert_eq!(starts.len(), ((length - 4.0) / 2.0).floor() as usize + 1);
            for (i, s) in starts.iter().enumerate() {
                assert_eq!(*s, 2.0 * i as f64);
                assert!(s + 4.0 <= length);
            }
            assert!(starts.last().unwrap() + 2.0 + 4.0 > length);
            let events: Vec<TimelineEvent> = (0..5)
                .map(|_| ev(rng.random_range(0..3), rng.random_range(0.0..length)))
                .collect();
            for &s in &starts {
                let labels = window_labels(s, 4.0, &events, 3);
                for k in 0..3 {
                    // oracle: sample overlap on a fine grid
                    let steps = 4000;
                    let best = events
                        .iter()
                        .filter(|e| e.class == k)
                        .map(|e| {
                            (0..steps)
                                .filter(|&j| {
                                    let t = s + (j as f64 + 0.5) * 4.0 / steps as f64;
                                    t >= e.start && t < e.end
                                })
                                .count() as f64
                                * 4.0
                                / steps as f64
                        })
                        .fold(0.0, f64::max);
                    if (best - 1.0).abs() > 2e-3 {
                        assert_eq!(labels[k], best > 1.0, "start {s} class {k} overlap {best}");
                    }
                }
            }
        }
    }

    #[test]
    fn oracle_scores_are_perfect() {
        let events = [ev(0, 0.0), ev(1, 8.0)];
        let ws: Vec<DetectionWindow> = window_starts(20.0, 4.0, 2.0)
            .into_iter()
            .map(|s| DetectionWindow {
                start: s,
                duration: 4.0,
                scores: window_labels(s, 4.0, &events, 2)
                    .iter()
                    .map(|&p| if p { 1.0 } else { 0.0 })
                    .collect(),
            })
            .collect();
        assert_eq!(detect_eval(&[(ws, &events[..])], 2).unwrap().map, 1.0);
    }

    #[test]
    fn constant_scores_match_definition() {
        let events = [ev(0, 6.0), ev(0, 30.0)];
        let ws: Vec<DetectionWindow> = window_starts(40.0, 4.0, 2.0)
            .into_iter()
            .map(|s| DetectionWindow {
                start: s,
                duration: 4.0,
                scores: vec![0.3],
            })
            .collect();
        let pos: Vec<bool> = ws.iter().map(|w| window_labels(w.start, 4.0, &events, 1)[0]).collect();
        let got = detect_eval(&[(ws, &events[..])], 1).unwrap();
        assert_eq!(got.map, brute_force_ap(&vec![0.3; pos.len()], &pos));
    }

    #[test]
    fn random_scores_approach_prevalence() {
        let mut labels = vec![false; 1000];
        for i in 0..10 {
            labels[i * 97] = true;
        }
        let mut total = 0.0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scores: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
            total += average_precision(&scores, &labels).unwrap();
        }
        assert!((total / 100.0 - 0.01).abs() < 0.02);
    }

    #[test]
    fn training_windows_take_the_dominant_event() {
        let cfg = crate::features::SynthConfig {
            num_classes: 3,
            d_app: 4,
            d_frame: 4,
            spatial_levels: vec![1],
            seed: 2,
            ..Default::default()
        };
        let tl = crate::features::synth_timeline(&cfg, 40.0, 0.6).unwrap();
        let clips = windowed_training_set(&tl, 3);
        assert_eq!(clips.len(), 19);
        for (i, c) in clips.iter().enumerate() {
            assert_eq!(c.frames.len(), 24);
            let labels = window_labels(2.0 * i as f64, 4.0, &tl.events, 3);
            match c.label {
                Label::Event(k) => assert!(labels[k]),
                Label::Negative => assert!(labels.iter().all(|&p| !p)),
            }
        }
    }
}
