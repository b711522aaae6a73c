use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{average_precision, single_positive_chance};
use crate::features::{Clip, Frame};

/// Index of the detection whose box center is nearest the ball.
pub fn key_player(frame: &Frame) -> Option<usize> {
    let ball = frame.ball?;
    let dist = |i: usize| {
        let c = frame.detections[i].bbox.center();
        (c[0] - f64::from(ball[0])).powi(2) + (c[1] - f64::from(ball[1])).powi(2)
    };
    (0..frame.detections.len()).min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShooterReport {
    /// Mean per-frame AP by class; `None` for classes without annotated frames.
    pub per_class: Vec<Option<f64>>,
    pub map: f64,
    /// Same aggregation with the expected AP of uniformly random weights.
    pub chance_map: f64,
    pub frames: usize,
}

/// Key-player AP: in every frame with a ball and detections, detections are ranked by
/// attention weight with the nearest-to-ball detection as the single positive.
pub fn shooter_eval(attention: &[Vec<Vec<f32>>], clips: &[Clip], num_classes: usize) -> Result<ShooterReport> {
    if attention.len() != clips.len() {
        return Err(Error::Dimension {
            context: "attention traces/clips",
            left: vec![attention.len()],
            right: vec![clips.len()],
        });
    }
    let mut sums = vec![(0.0, 0.0, 0usize); num_classes];
    for (gammas, clip) in attention.iter().zip(clips) {
        let Some(k) = clip.label.event().filter(|&k| k < num_classes) else {
            continue;
        };
        for (t, frame) in clip.frames.iter().enumerate() {
            let Some(key) = key_player(frame) else { continue };
            let gamma = &gammas[t];
            if gamma.len() != frame.detections.len() {
                return Err(Error::validation(format!(
                    "clip {} frame {t}: {} weights for {} detections",
                    clip.clip_id,
                    gamma.len(),
                    frame.detections.len()
                )));
            }
            let scores: Vec<f64> = gamma.iter().map(|&g| f64::from(g)).collect();
            let positives: Vec<bool> = (0..scores.len()).map(|i| i == key).collect();
            let s = &mut sums[k];
            s.0 += average_precision(&scores, &positives)?;
            s.1 += single_positive_chance(scores.len());
            s.2 += 1;
        }
    }
    let per_class: Vec<Option<f64>> = sums.iter().map(|s| (s.2 > 0).then(|| s.0 / s.2 as f64)).collect();
    let chance: Vec<f64> = sums.iter().filter(|s| s.2 > 0).map(|s| s.1 / s.2 as f64).collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedAp("no frame carries a ball annotation".into()));
    }
    Ok(ShooterReport {
        map: defined.iter().sum::<f64>() / defined.len() as f64,
        chance_map: chance.iter().sum::<f64>() / chance.len() as f64,
        per_class,
        frames: sums.iter().map(|s| s.2).sum(),
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::features::{synth_dataset, SynthConfig};

    fn data() -> Vec<Clip> {
        synth_dataset(&SynthConfig {
            num_classes: 3,
            num_clips: 9,
            players_min: 4,
            players_max: 4,
            d_app: 4,
            d_frame: 4,
            spatial_levels: vec![1],
            ..SynthConfig::default()
        })
        .unwrap()
        .clips
    }

    #[test]
    fn ball_holder_is_key() {
        for clip in data() {
            for f in &clip.frames {
                if let (Some(b), Some(i)) = (f.ball, key_player(f)) {
                    let c = f.detections[i].bbox.center();
                    assert!((c[0] as f32 - b[0]).abs() < 1e-6 && (c[1] as f32 - b[1]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn oracle_attention_is_perfect() {
        let clips = data();
        let att: Vec<Vec<Vec<f32>>> = clips
            .iter()
            .map(|c| {
                c.frames
                    .iter()
                    .map(|f| {
                        let key = key_player(f);
                        (0..f.detections.len())
                            .map(|i| if Some(i) == key { 0.9 } else { 0.02 })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let r = shooter_eval(&att, &clips, 3).unwrap();
        assert_eq!(r.map, 1.0);
        assert!((r.chance_map - single_positive_chance(4)).abs() < 1e-12);
    }

    #[test]
    fn random_attention_near_chance() {
        let clips = data();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut total = 0.0;
        let runs = 200;
        for _ in 0..runs {
            let att: Vec<Vec<Vec<f32>>> = clips
                .iter()
                .map(|c| {
                    c.frames
                        .iter()
                        .map(|f| (0..f.detections.len()).map(|_| rng.random()).collect())
                        .collect()
                })
                .collect();
            total += shooter_eval(&att, &clips, 3).unwrap().map;
        }
        assert!((total / runs as f64 - single_positive_chance(4)).abs() < 0.02);
    }

    #[test]
    fn weight_count_must_match() {
        let clips = data();
        let att: Vec<Vec<Vec<f32>>> = clips.iter().map(|c| vec![Vec::new(); c.frames.len()]).collect();
        assert!(matches!(shooter_eval(&att, &clips, 3), Err(Error::Validation(_))));
    }
}
