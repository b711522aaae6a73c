//! Classification, detection and key-player evaluation, plus court heatmaps.

mod ap;
mod classify;
mod detect;
mod heatmap;
mod homography;
mod shooter;

pub use ap::{average_precision, rank_order, single_positive_chance};
pub use classify::{
    class_map, class_name, classify_eval, multi_label_map, score_clips, ClassAp, ClipOutput, EvalReport,
};
pub use detect::{
    detect_eval, overlap, sliding_detect, window_clip, window_labels, window_starts, windowed_training_set,
    DetectionWindow, MIN_OVERLAP_SECONDS, STRIDE_SECONDS, WINDOW_SECONDS,
};
pub use heatmap::{heatmap, Heatmap};
pub use homography::{homography_dlt, Homography};
pub use shooter::{key_player, shooter_eval, ShooterReport};
