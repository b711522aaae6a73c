use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Homography;
use crate::features::Clip;

/// Attention mass on a `grid x grid` canonical court per class and clip phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub classes: usize,
    pub phases: usize,
    pub grid: usize,
    /// Indexed `[class][phase][gy][gx]`, flattened.
    pub mass: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Heatmap {
    fn index(&self, k: usize, phase: usize, gx: usize, gy: usize) -> usize {
        ((k * self.phases + phase) * self.grid + gy) * self.grid + gx
    }

    pub fn get(&self, k: usize, phase: usize, gx: usize, gy: usize) -> f64 {
        self.mass[self.index(k, phase, gx, gy)]
    }

    /// Total observations behind one (class, phase) grid.
    pub fn count(&self, k: usize, phase: usize) -> usize {
        self.counts[k * self.phases + phase]
    }

    /// Bin of a court point in `[0, 1]^2`; points outside land in the border bin.
    pub fn bin(&self, p: [f64; 2]) -> (usize, usize) {
        let g = self.grid as f64;
        let cell = |v: f64| ((v * g).floor().max(0.0) as usize).min(self.grid - 1);
        (cell(p[0]), cell(p[1]))
    }

    /// Mass within the 3x3 block of bins around `(gx, gy)`.
    pub fn neighborhood_mass(&self, k: usize, phase: usize, gx: usize, gy: usize) -> f64 {
        let mut total = 0.0;
        for y in gy.saturating_sub(1)..=(gy + 1).min(self.grid - 1) {
            for x in gx.saturating_sub(1)..=(gx + 1).min(self.grid - 1) {
                total += self.get(k, phase, x, y);
            }
        }
        total
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "class,phase,gx,gy,mass")?;
        for k in 0..self.classes {
            for phase in 0..self.phases {
                for gy in 0..self.grid {
                    for gx in 0..self.grid {
                        writeln!(out, "{k},{phase},{gx},{gy},{}", self.get(k, phase, gx, gy))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Projects the bottom center of the most attended detection in every frame onto the court.
///
/// Frame `t` of a `T`-frame clip falls in phase `floor(t * phases / T)`. Each populated
/// (class, phase) grid is normalized to sum to one.
pub fn heatmap(
    attention: &[Vec<Vec<f32>>],
    clips: &[Clip],
    homographies: &[Homography],
    classes: usize,
    grid: usize,
    phases: usize,
) -> Result<Heatmap> {
    if attention.len() != clips.len() || homographies.len() != clips.len() {
        return Err(Error::Dimension {
            context: "attention/clips/homographies",
            left: vec![attention.len(), homographies.len()],
            right: vec![clips.len()],
        });
    }
    if grid == 0 || phases == 0 {
        return Err(Error::Config("grid and phase counts must be positive".into()));
    }
    let mut map = Heatmap {
        classes,
        phases,
        grid,
        mass: vec![0.0; classes * phases * grid * grid],
        counts: vec![0; classes * phases],
    };
    for ((gammas, clip), h) in attention.iter().zip(clips).zip(homographies) {
        let Some(k) = clip.label.event().filter(|&k| k < classes) else {
            continue;
        };
        let frames = clip.frames.len();
        for (t, frame) in clip.frames.iter().enumerate() {
            let gamma = &gammas[t];
            if gamma.is_empty() {
                continue;
            }
            if gamma.len() != frame.detections.len() {
                return Err(Error::validation(format!(
                    "clip {} frame {t}: {} weights for {} detections",
                    clip.clip_id,
                    gamma.len(),
                    frame.detections.len()
                )));
            }
            let best = (0..gamma.len()).fold(0, |b, i| if gamma[i] > gamma[b] { i } else { b });
            let court = h.apply(frame.detections[best].bbox.bottom_center());
            let (gx, gy) = map.bin(court);
            let phase = t * phases / frames;
            let idx = map.index(k, phase, gx, gy);
            map.mass[idx] += 1.0;
            map.counts[k * phases + phase] += 1;
        }
    }
    let cell = grid * grid;
    for (slot, &n) in map.counts.iter().enumerate() {
        if n > 0 {
            for v in &mut map.mass[slot * cell..(slot + 1) * cell] {
                *v /= n as f64;
            }
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{BoundingBox, Detection, Frame, Label};

    fn clip(label: usize, positions: &[[f32; 2]]) -> Clip {
        let frames = positions
            .iter()
            .enumerate()
            .map(|(t, p)| Frame {
                index: t,
                feature: vec![],
                detections: vec![
                    Detection {
                        bbox: BoundingBox::new(p[0] - 0.02, p[1] - 0.1, p[0] + 0.02, p[1]).unwrap(),
                        appearance: vec![],
                        confidence: 1.0,
                        track_id: None,
                        gt_player_id: None,
                    },
                    Detection {
                        bbox: BoundingBox::new(0.45, 0.4, 0.5, 0.5).unwrap(),
                        appearance: vec![],
                        confidence: 1.0,
                        track_id: None,
                        gt_player_id: None,
                    },
                ],
                ball: None,
            })
            .collect();
        Clip {
            clip_id: "c".into(),
            label: Label::Event(label),
            fps: 6.0,
            frames,
        }
    }

    fn attend_first(c: &Clip) -> Vec<Vec<f32>> {
        c.frames.iter().map(|_| vec![0.8, 0.2]).collect()
    }

    #[test]
    fn stationary_player_fills_one_bin_per_phase() {
        let c = clip(0, &[[0.31, 0.52]; 9]);
        let m = heatmap(&[attend_first(&c)], &[c], &[Homography::identity()], 1, 10, 3).unwrap();
        for phase in 0..3 {
            assert_eq!(m.get(0, phase, 3, 5), 1.0);
            assert_eq!(m.count(0, phase), 3);
        }
    }

    #[test]
    fn mirrored_clips_give_symmetric_grids() {
        let a = clip(0, &[[0.23, 0.35], [0.61, 0.75], [0.15, 0.95]]);
        let mirrored: Vec<[f32; 2]> = a
            .frames
            .iter()
            .map(|f| {
                let b = f.detections[0].bbox.bottom_center();
                [1.0 - b[0] as f32, b[1] as f32]
            })
            .collect();
        let b = clip(0, &mirrored);
        let m = heatmap(
            &[attend_first(&a), attend_first(&b)],
            &[a, b],
            &[Homography::identity(); 2],
            1,
            10,
            1,
        )
        .unwrap();
        for gy in 0..10 {
            for gx in 0..10 {
                assert_eq!(m.get(0, 0, gx, gy), m.get(0, 0, 9 - gx, gy));
            }
        }
    }

    #[test]
    fn grids_normalized_and_outside_points_clamped() {
        let c = clip(1, &[[0.2, 0.3], [0.9, 0.9], [0.5, 0.5], [0.7, 0.2]]);
        let shift = Homography {
            m: [[1.0, 0.0, 0.5], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
        let m = heatmap(&[attend_first(&c)], &[c], &[shift], 2, 8, 2).unwrap();
        for phase in 0..2 {
            let total: f64 = (0..64).map(|i| m.get(1, phase, i % 8, i / 8)).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!((0..64).all(|i| m.get(1, phase, i % 8, i / 8) >= 0.0));
        }
        // x = 0.9 + 0.5 leaves the court and is clamped into the last column
        assert!(m.get(1, 0, 7, 7) > 0.0);
        let mut csv = Vec::new();
        m.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 2 * 64);
        assert!(text.starts_with("class,phase,gx,gy,mass\n"));
    }
}
