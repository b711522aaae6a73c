//! Clip data structures, player feature composition, synthetic data and dataset files.

mod io;
mod spatial;
mod synth;
mod types;

pub use io::{parse_dataset, read_dataset, write_dataset, write_dataset_to};
pub use spatial::{compose_player_feature, spatial_dim, spatial_feature, FeatureLayout, DEFAULT_LEVELS};
pub use synth::{
    orthonormal_prototypes, synth_dataset, synth_timeline, KeyAnchor, Prototypes, SynthConfig, Timeline, TimelineEvent,
};
pub use types::{BoundingBox, Clip, Dataset, DatasetHeader, Detection, Frame, Label};
