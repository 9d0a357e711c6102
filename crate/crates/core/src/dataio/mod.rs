//! File formats, keypoint conventions, mesh export, dataset packaging and
//! the synthetic sequence generator.

pub mod files;
pub mod obj;
pub mod package;
pub mod synth;

use crate::error::{Error, Result};
use crate::objective::KeypointTrack;

/// A named keypoint layout. `facial` lists the keypoints used by the face
/// confidence filter (empty if the layout has none).
#[derive(Debug, PartialEq, Eq)]
pub struct KeypointConvention {
    pub name: &'static str,
    pub keypoints: &'static [&'static str],
    pub facial: &'static [&'static str],
}

impl KeypointConvention {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.keypoints.iter().position(|k| *k == name)
    }
}

pub const COCO17: KeypointConvention = KeypointConvention {
    name: "coco17",
    keypoints: &[
        "nose",
        "left_eye",
        "right_eye",
        "left_ear",
        "right_ear",
        "left_shoulder",
        "right_shoulder",
        "left_elbow",
        "right_elbow",
        "left_wrist",
        "right_wrist",
        "left_hip",
        "right_hip",
        "left_knee",
        "right_knee",
        "left_ankle",
        "right_ankle",
    ],
    facial: &["nose", "left_eye", "right_eye", "left_ear", "right_ear"],
};

/// Leeds Sports Pose layout; it has no facial keypoints.
pub const LSP14: KeypointConvention = KeypointConvention {
    name: "lsp14",
    keypoints: &[
        "right_ankle",
        "right_knee",
        "right_hip",
        "left_hip",
        "left_knee",
        "left_ankle",
        "right_wrist",
        "right_elbow",
        "right_shoulder",
        "left_shoulder",
        "left_elbow",
        "left_wrist",
        "neck",
        "head_top",
    ],
    facial: &[],
};

pub const CONVENTIONS: [&KeypointConvention; 2] = [&COCO17, &LSP14];

pub fn convention(name: &str) -> Result<&'static KeypointConvention> {
    CONVENTIONS
        .iter()
        .copied()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::UnknownConvention(name.to_string()))
}

/// Detection tracks in a registered keypoint convention.
#[derive(Clone, Debug, PartialEq)]
pub struct Detections {
    pub convention: String,
    pub tracks: Vec<KeypointTrack>,
}

/// Default face-confidence threshold for curating training frames.
pub const FACE_CONFIDENCE_FLOOR: f64 = 0.7;

/// Output of [`filter_by_face_confidence`].
#[derive(Clone, Debug, PartialEq)]
pub struct FaceFiltered {
    pub detections: Detections,
    /// Ids of tracks that lost every frame; they are kept, empty.
    pub emptied: Vec<u32>,
}

/// Drops frames whose mean facial-keypoint confidence is at or below
/// `floor`. Track order and ids are preserved.
pub fn filter_by_face_confidence(det: &Detections, floor: f64) -> Result<FaceFiltered> {
    let conv = convention(&det.convention)?;
    if conv.facial.is_empty() {
        return Err(Error::Config(format!("convention `{}` declares no facial keypoints", conv.name)));
    }
    let facial: Vec<usize> = conv.facial.iter().filter_map(|k| conv.index(k)).collect();
    let mut emptied = Vec::new();
    let tracks = det
        .tracks
        .iter()
        .map(|t| {
            let frames: Vec<_> = t
                .frames
                .iter()
                .filter(|f| {
                    let c = &f.keypoints.confidences;
                    facial.iter().map(|&k| c.get(k).copied().unwrap_or(0.0)).sum::<f64>() / facial.len() as f64 > floor
                })
                .cloned()
                .collect();
            if frames.is_empty() && !t.frames.is_empty() {
                emptied.push(t.id);
            }
            KeypointTrack { id: t.id, frames }
        })
        .collect();
    Ok(FaceFiltered {
        detections: Detections {
            convention: det.convention.clone(),
            tracks,
        },
        emptied,
    })
}
