use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{spatial_dim, DatasetHeader, FeatureLayout, Label, DEFAULT_LEVELS};

/// Which inputs feed the event recurrence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Frame BLSTM only.
    FrameOnly,
    /// Attention over player features, no frame stream.
    OnlyPlayer,
    /// Frame stream plus the unweighted mean of player features.
    AvgPlayer,
    /// Frame stream plus attention over per-frame player features.
    AttnNoTrack,
    /// Frame stream plus attention over track BLSTM states.
    AttnTrack,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::FrameOnly,
        Mode::OnlyPlayer,
        Mode::AvgPlayer,
        Mode::AttnNoTrack,
        Mode::AttnTrack,
    ];

    pub fn has_frame_stream(self) -> bool {
        self != Mode::OnlyPlayer
    }

    pub fn uses_players(self) -> bool {
        self != Mode::FrameOnly
    }

    pub fn attends(self) -> bool {
        matches!(self, Mode::OnlyPlayer | Mode::AttnNoTrack | Mode::AttnTrack)
    }

    pub fn needs_tracks(self) -> bool {
        self == Mode::AttnTrack
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FrameOnly => "frame-only",
            Mode::OnlyPlayer => "only-player",
            Mode::AvgPlayer => "avg-player",
            Mode::AttnNoTrack => "attn-no-track",
            Mode::AttnTrack => "attn-track",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

/// How per-frame class scores collapse to one clip score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipScore {
    Mean,
    Last,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_frame: usize,
    pub d_app: usize,
    pub spatial_levels: Vec<usize>,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Width of the attention scorer's hidden layer.
    pub attn_dim: usize,
    /// Number of outputs, including the background class when `negative_class` is set.
    pub num_classes: usize,
    /// Reserve the last output for `Label::Negative` (sliding-window detection).
    pub negative_class: bool,
    pub tau: f64,
    pub mode: Mode,
    pub clip_score: ClipScore,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_frame: 64,
            d_app: 64,
            spatial_levels: DEFAULT_LEVELS.to_vec(),
            hidden_dim: 256,
            embed_dim: 256,
            attn_dim: 128,
            num_classes: 11,
            negative_class: false,
            tau: 0.25,
            mode: Mode::AttnTrack,
            clip_score: ClipScore::Mean,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 || self.attn_dim == 0 {
            return Err(Error::Config(
                "hidden_dim, embed_dim and attn_dim must be positive".into(),
            ));
        }
        if self.d_frame == 0 || self.d_app == 0 {
            return Err(Error::Config("input widths must be positive".into()));
        }
        if self.spatial_levels.is_empty() || self.spatial_levels.contains(&0) {
            return Err(Error::Config(format!("bad spatial levels {:?}", self.spatial_levels)));
        }
        let min_classes = if self.negative_class { 2 } else { 1 };
        if self.num_classes < min_classes {
            return Err(Error::Config("too few classes".into()));
        }
        Ok(())
    }

    /// Event classes proper, excluding the background output.
    pub fn event_classes(&self) -> usize {
        self.num_classes - usize::from(self.negative_class)
    }

    pub fn d_sp(&self) -> usize {
        spatial_dim(&self.spatial_levels)
    }

    pub fn d_player(&self) -> usize {
        self.d_app + self.d_sp()
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            d_app: self.d_app,
            levels: self.spatial_levels.clone(),
        }
    }

    /// Width of the attended/averaged player representation.
    pub fn repr_dim(&self) -> usize {
        if self.mode == Mode::AttnTrack {
            2 * self.hidden_dim
        } else {
            self.embed_dim
        }
    }

    pub fn event_input_dim(&self) -> usize {
        let frame = if self.mode.has_frame_stream() {
            2 * self.hidden_dim
        } else {
            0
        };
        let player = if self.mode.uses_players() { self.repr_dim() } else { 0 };
        frame + player
    }

    /// Output index trained for `label`.
    pub fn target_index(&self, label: Label) -> Result<usize> {
        match label {
            Label::Event(k) if k < self.event_classes() => Ok(k),
            Label::Event(k) => Err(Error::validation(format!(
                "label {k} outside {} event classes",
                self.event_classes()
            ))),
            Label::Negative if self.negative_class => Ok(self.num_classes - 1),
            Label::Negative => Err(Error::validation(
                "NEGATIVE clip given to a classification model without a background class",
            )),
        }
    }

    /// Checks that a dataset header agrees with the input widths.
    pub fn check_header(&self, header: &DatasetHeader) -> Result<()> {
        if header.d_frame != self.d_frame || header.d_app != self.d_app || header.d_sp != self.d_sp() {
            return Err(Error::validation(format!(
                "dataset widths (frame {}, app {}, spatial {}) disagree with model (frame {}, app {}, spatial {})",
                header.d_frame,
                header.d_app,
                header.d_sp,
                self.d_frame,
                self.d_app,
                self.d_sp()
            )));
        }
        if header.k != self.event_classes() {
            return Err(Error::validation(format!(
                "dataset declares {} classes, model has {}",
                header.k,
                self.event_classes()
            )));
        }
        Ok(())
    }
}
