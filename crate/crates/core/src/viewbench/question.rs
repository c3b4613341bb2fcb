use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::keypoints::KeypointPair;
use super::markers::{Marker, MarkerKind};
use super::pairs::OverlapBin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Text,
    Shape,
    Object,
}

pub const OBJECT_QUESTION: &str = "Can you describe the object or feature at the red point?";

const LABEL_SIZE: f64 = 12.0;
const SHAPE_SIZE: f64 = 10.0;
const POINT_SIZE: f64 = 6.0;

/// One instruction/answer example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaInstance {
    pub task: TaskKind,
    pub question: String,
    /// `None` for open-ended object descriptions.
    pub answer: Option<String>,
    /// Answer options in the order they appear in the question.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    /// Markers drawn on the source image.
    pub markers: Vec<Marker>,
    /// The same markers at their target-view positions.
    #[serde(default)]
    pub target_markers: Vec<Marker>,
    pub source_frame: String,
    pub target_frame: String,
    pub overlap_bin: Option<OverlapBin>,
    pub keypoints: KeypointPair,
}

fn marker_pair(pair: &KeypointPair, kinds: [(MarkerKind, [u8; 3]); 2], size: f64) -> (Vec<Marker>, Vec<Marker>) {
    let at = |[x, y]: [f64; 2], (kind, color): (MarkerKind, [u8; 3])| Marker::new(kind, x, y, size, color);
    (
        vec![at(pair.a.source, kinds[0]), at(pair.b.source, kinds[1])],
        vec![at(pair.a.target, kinds[0]), at(pair.b.target, kinds[1])],
    )
}

/// Fill the task template for a keypoint pair. For the object task only
/// keypoint A is used. The left/right option order is drawn from `seed`;
/// the answer comes from the target-view u-coordinates.
pub fn gen_question(pair: &KeypointPair, task: TaskKind, seed: u64) -> VqaInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let options: Vec<String> = if rng.random_bool(0.5) {
        vec!["right".into(), "left".into()]
    } else {
        vec!["left".into(), "right".into()]
    };
    let order = format!("{} or {}", options[0], options[1]);
    let answer = Some(pair.target_side().to_string());
    let (question, (markers, target_markers), answer, options) = match task {
        TaskKind::Text => (
            format!("Is the A point on the {order} of the B point?"),
            marker_pair(
                pair,
                [(MarkerKind::Label('A'), [30, 90, 230]), (MarkerKind::Label('B'), [230, 60, 30])],
                LABEL_SIZE,
            ),
            answer,
            options,
        ),
        TaskKind::Shape => (
            format!("Is the star shape on the {order} of the triangle shape?"),
            marker_pair(
                pair,
                [(MarkerKind::Star, [250, 200, 0]), (MarkerKind::Triangle, [0, 180, 80])],
                SHAPE_SIZE,
            ),
            answer,
            options,
        ),
        TaskKind::Object => {
            let red = |[x, y]: [f64; 2]| Marker::new(MarkerKind::Circle, x, y, POINT_SIZE, [255, 0, 0]);
            (
                OBJECT_QUESTION.to_string(),
                (vec![red(pair.a.source)], vec![red(pair.a.target)]),
                None,
                Vec::new(),
            )
        }
    };
    VqaInstance {
        task,
        question,
        answer,
        options,
        markers,
        target_markers,
        source_frame: String::new(),
        target_frame: String::new(),
        overlap_bin: None,
        keypoints: *pair,
    }
}
