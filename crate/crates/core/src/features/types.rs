use crate::error::{Error, Result};

/// Axis-aligned box in normalized frame coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub x_min: f32,
    pub y_min: f32,
    pub x_max: f32,
    pub y_max: f32,
}

impl BoundingBox {
    pub fn new(x_min: f32, y_min: f32, x_max: f32, y_max: f32) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_array(c: [f32; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(self) -> [f32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn validate(&self) -> Result<()> {
        let coords = self.to_array();
        if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::validation(format!("box {coords:?} leaves the unit frame")));
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(Error::validation(format!("box {coords:?} has zero area")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        f64::from(self.x_max) - f64::from(self.x_min)
    }

    pub fn height(&self) -> f64 {
        f64::from(self.y_max) - f64::from(self.y_min)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (f64::from(self.x_min) + f64::from(self.x_max)),
            0.5 * (f64::from(self.y_min) + f64::from(self.y_max)),
        ]
    }

    /// Ground contact point: horizontal center of the bottom edge.
    pub fn bottom_center(&self) -> [f64; 2] {
        [
            0.5 * (f64::from(self.x_min) + f64::from(self.x_max)),
            f64::from(self.y_max),
        ]
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (f64::from(self.x_max.min(other.x_max)) - f64::from(self.x_min.max(other.x_min))).max(0.0);
        let h = (f64::from(self.y_max.min(other.y_max)) - f64::from(self.y_min.max(other.y_min))).max(0.0);
        w * h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub appearance: Vec<f32>,
    pub confidence: f32,
    pub track_id: Option<u32>,
    pub gt_player_id: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub feature: Vec<f32>,
    pub detections: Vec<Detection>,
    pub ball: Option<[f32; 2]>,
}

/// Clip label; `Negative` marks background windows used for detection training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Event(usize),
    Negative,
}

impl Label {
    pub fn from_raw(raw: i64) -> Option<Self> {
        match raw {
            -1 => Some(Label::Negative),
            k if k >= 0 => Some(Label::Event(k as usize)),
            _ => None,
        }
    }

    pub fn to_raw(self) -> i64 {
        match self {
            Label::Event(k) => k as i64,
            Label::Negative => -1,
        }
    }

    pub fn event(self) -> Option<usize> {
        match self {
            Label::Event(k) => Some(k),
            Label::Negative => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub clip_id: String,
    pub label: Label,
    pub fps: f64,
    pub frames: Vec<Frame>,
}

impl Clip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn detection_count(&self) -> usize {
        self.frames.iter().map(|f| f.detections.len()).sum()
    }

    pub fn is_tracked(&self) -> bool {
        self.frames
            .iter()
            .flat_map(|f| &f.detections)
            .all(|d| d.track_id.is_some())
    }
}

/// First line of a dataset file.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub version: u32,
    pub d_frame: usize,
    pub d_app: usize,
    pub d_sp: usize,
    pub k: usize,
    pub fps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub clips: Vec<Clip>,
}

impl Dataset {
    pub fn validate_clip(&self, clip: &Clip) -> Result<()> {
        validate_clip(&self.header, clip)
    }
}

pub(crate) fn validate_clip(header: &DatasetHeader, clip: &Clip) -> Result<()> {
    if let Label::Event(k) = clip.label {
        if k >= header.k {
            return Err(Error::validation(format!(
                "clip {} has label {k} but the dataset declares {} classes",
                clip.clip_id, header.k
            )));
        }
    }
    for (t, frame) in clip.frames.iter().enumerate() {
        if frame.feature.len() != header.d_frame {
            return Err(Error::validation(format!(
                "clip {} frame {t}: frame feature has {} values, header declares {}",
                clip.clip_id,
                frame.feature.len(),
                header.d_frame
            )));
        }
        for (i, det) in frame.detections.iter().enumerate() {
            if det.appearance.len() != header.d_app {
                return Err(Error::validation(format!(
                    "clip {} frame {t} detection {i}: appearance has {} values, header declares {}",
                    clip.clip_id,
                    det.appearance.len(),
                    header.d_app
                )));
            }
            det.bbox.validate()?;
        }
    }
    Ok(())
}
