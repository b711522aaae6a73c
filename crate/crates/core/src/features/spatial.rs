use log::info;

use crate::error::{Error, Result};
use crate::features::{BoundingBox, Detection};
use crate::math::Tensor;

pub const DEFAULT_LEVELS: [usize; 4] = [32, 16, 8, 4];

/// Total width of a pyramid: the sum of `L^2` over levels.
pub fn spatial_dim(levels: &[usize]) -> usize {
    levels.iter().map(|l| l * l).sum()
}

/// Per-axis overlap of `[lo, hi]` with each of `cells` equal bins over `[0, 1]`.
fn axis_overlap(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    let step = 1.0 / cells as f64;
    (0..cells)
        .map(|c| {
            let a = c as f64 * step;
            let b = if c + 1 == cells { 1.0 } else { (c + 1) as f64 * step };
            (hi.min(b) - lo.max(a)).max(0.0)
        })
        .collect()
}

/// Spatial pyramid histogram of a box.
///
/// Each level `L` contributes an `L x L` grid in row-major order (rows top to bottom)
/// whose cells hold `area(box ∩ cell) / area(box)`. Levels are concatenated in the
/// order given.
pub fn spatial_feature(bbox: &BoundingBox, levels: &[usize]) -> Result<Tensor> {
    if levels.is_empty() || levels.contains(&0) {
        return Err(Error::Parameter(format!("invalid pyramid levels {levels:?}")));
    }
    bbox.validate()?;
    let area = bbox.area();
    let (x0, x1) = (f64::from(bbox.x_min), f64::from(bbox.x_max));
    let (y0, y1) = (f64::from(bbox.y_min), f64::from(bbox.y_max));
    let mut out = Vec::with_capacity(spatial_dim(levels));
    for &level in levels {
        let ox = axis_overlap(x0, x1, level);
        let oy = axis_overlap(y0, y1, level);
        for &dy in &oy {
            for &dx in &ox {
                out.push((dx * dy / area) as f32);
            }
        }
    }
    Ok(Tensor::vector(out))
}

/// Appearance followed by the spatial histogram.
pub fn compose_player_feature(det: &Detection, box_feature: &Tensor, d_app: usize, d_sp: usize) -> Result<Tensor> {
    if det.appearance.len() != d_app || box_feature.len() != d_sp {
        return Err(Error::validation(format!(
            "player feature parts are {}+{}, expected {d_app}+{d_sp}",
            det.appearance.len(),
            box_feature.len()
        )));
    }
    let mut out = Vec::with_capacity(d_app + d_sp);
    out.extend_from_slice(&det.appearance);
    out.extend_from_slice(box_feature.data());
    Ok(Tensor::vector(out))
}

/// Appearance width plus pyramid levels; produces the full per-detection input vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLayout {
    pub d_app: usize,
    pub levels: Vec<usize>,
}

impl FeatureLayout {
    pub fn new(d_app: usize, levels: Vec<usize>) -> Self {
        let layout = Self { d_app, levels };
        info!(
            "player feature layout: {} appearance + {} spatial = {}",
            layout.d_app,
            layout.d_sp(),
            layout.width()
        );
        layout
    }

    pub fn d_sp(&self) -> usize {
        spatial_dim(&self.levels)
    }

    pub fn width(&self) -> usize {
        self.d_app + self.d_sp()
    }

    pub fn compose(&self, det: &Detection) -> Result<Tensor> {
        let sp = spatial_feature(&det.bbox, &self.levels)?;
        compose_player_feature(det, &sp, self.d_app, self.d_sp())
    }
}
