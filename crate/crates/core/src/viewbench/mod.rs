//! Two-view benchmark construction: visibility and overlap, overlap-binned
//! pair sampling, view-dependent keypoint selection, marker rendering,
//! question generation and the geometry-only answerer.

mod font;
mod keypoints;
mod markers;
mod pairs;
mod question;
mod visibility;

pub use keypoints::{
    covisible_keypoints, geometry_oracle, is_flip_pair, pick_keypoint, select_keypoint_pair, Keypoint, KeypointPair, Side,
};
pub use markers::{render_markers, Marker, MarkerKind};
pub use pairs::{bin_and_sample_pairs, FramePair, OverlapBin, ViewPairRecord};
pub use question::{gen_question, TaskKind, VqaInstance};
pub use visibility::{overlap_ratio, visible_set, ScenePoints, VisibleSet, DEFAULT_OCCLUSION_TOLERANCE};
