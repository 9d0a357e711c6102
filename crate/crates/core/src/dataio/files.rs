//! Versioned JSON file formats.
//!
//! Every file carries a `schema` tag as its first field. Arrays are flat and
//! row-major; all reals are float64 and are written with shortest
//! round-trip formatting, so `save(load(save(x)))` reproduces the bytes of
//! `save(x)`.

use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::body_model::{BodyModel, BodyModelData, ShapeParams, UpAxis, NUM_BETAS};
use crate::camera::{CameraIntrinsics, CameraPose, CameraTrack};
use crate::error::{Error, Result};
use crate::fitter::{FitConfig, FitReport, FrameState, PersonState, RejectedTrack, StageReport};
use crate::objective::{JointMap, KeypointFrame, KeypointTrack, TrackFrame};

use super::{convention, Detections};

/// A file type with a fixed schema tag.
pub trait SchemaFile: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;

    fn schema(&self) -> &str;

    /// Structural checks beyond what deserialization enforces.
    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema: String,
}

/// Parses and validates `text`; `origin` names the source in diagnostics.
pub fn from_json<T: SchemaFile>(text: &str, origin: &str) -> Result<T> {
    let parse_err = |e: serde_json::Error| Error::Parse {
        path: origin.to_string(),
        message: format!("line {} column {}: {e}", e.line(), e.column()),
    };
    let probe: SchemaProbe = serde_json::from_str(text).map_err(parse_err)?;
    if probe.schema != T::SCHEMA {
        return Err(Error::UnsupportedVersion {
            found: probe.schema,
            expected: T::SCHEMA.to_string(),
        });
    }
    let value: T = serde_json::from_str(text).map_err(parse_err)?;
    value.validate()?;
    Ok(value)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: SchemaFile>(value: &T) -> Result<String> {
    if value.schema() != T::SCHEMA {
        return Err(Error::UnsupportedVersion {
            found: value.schema().to_string(),
            expected: T::SCHEMA.to_string(),
        });
    }
    value.validate()?;
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Input(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn load<T: SchemaFile>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text, &path.display().to_string())
}

pub fn save<T: SchemaFile>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(value)?).map_err(|e| Error::io(path, e))
}

fn all_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} contains non-finite values")))
    }
}

fn flatten3(v: &[Vector3<f64>]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn unflatten3(v: &[f64], what: &str) -> Result<Vec<Vector3<f64>>> {
    if !v.len().is_multiple_of(3) {
        return Err(Error::Input(format!("{what} length {} is not a multiple of 3", v.len())));
    }
    Ok(v.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect())
}

// ---------------------------------------------------------------- model ---

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: String,
    pub dtype: String,
    /// `"x"`, `"y"` or `"z"`.
    pub up_axis: String,
    pub vertex_count: usize,
    /// Body joints, excluding the root.
    pub joint_count: usize,
    pub joint_names: Vec<String>,
    /// Parent index per joint; `-1` marks the root.
    pub parents: Vec<i64>,
    /// `V × 3`.
    pub adult_template: Vec<f64>,
    /// `V × 3`.
    pub child_template: Vec<f64>,
    /// `V × 3 × 10`.
    pub shape_blendshapes: Vec<f64>,
    /// `V × 3 × 9·K_j`.
    pub pose_blendshapes: Option<Vec<f64>>,
    /// `(K_j + 1) × V`.
    pub joint_regressor: Vec<f64>,
    /// `V × (K_j + 1)`.
    pub skinning_weights: Vec<f64>,
    pub faces: Vec<[usize; 3]>,
}

impl SchemaFile for ModelFile {
    const SCHEMA: &'static str = "aionfit-model/1";

    fn schema(&self) -> &str {
        &self.schema
    }

    fn validate(&self) -> Result<()> {
        if self.dtype != "float64" {
            return Err(Error::Model(format!("unsupported dtype `{}`", self.dtype)));
        }
        let (v, j) = (self.vertex_count, self.joint_count + 1);
        for (name, len, want) in [
            ("adult_template", self.adult_template.len(), v * 3),
            ("child_template", self.child_template.len(), v * 3),
            ("shape_blendshapes", self.shape_blendshapes.len(), v * 3 * NUM_BETAS),
            ("joint_regressor", self.joint_regressor.len(), j * v),
            ("skinning_weights", self.skinning_weights.len(), v * j),
            ("joint_names", self.joint_names.len(), j),
            ("parents", self.parents.len(), j),
        ] {
            if len != want {
                return Err(Error::Model(format!("{name} has {len} entries, expected {want}")));
            }
        }
        if let Some(p) = &self.pose_blendshapes {
            if p.len() != v * 3 * 9 * self.joint_count {
                return Err(Error::Model(format!("pose_blendshapes has {} entries", p.len())));
            }
        }
        all_finite(
            self.adult_template
                .iter()
                .chain(&self.child_template)
                .chain(&self.shape_blendshapes)
                .chain(self.pose_blendshapes.iter().flatten())
                .chain(&self.joint_regressor)
                .chain(&self.skinning_weights),
            "model arrays",
        )
    }
}

impl ModelFile {
    pub fn from_data(d: &BodyModelData) -> Self {
        ModelFile {
            schema: Self::SCHEMA.into(),
            dtype: "float64".into(),
            up_axis: match d.up_axis {
                UpAxis::X => "x",
                UpAxis::Y => "y",
                UpAxis::Z => "z",
            }
            .into(),
            vertex_count: d.adult_template.len(),
            joint_count: d.joint_names.len().saturating_sub(1),
            joint_names: d.joint_names.clone(),
            parents: d.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            adult_template: flatten3(&d.adult_template),
            child_template: flatten3(&d.child_template),
            shape_blendshapes: d.shape_blendshapes.clone(),
            pose_blendshapes: d.pose_blendshapes.clone(),
            joint_regressor: d.joint_regressor.clone(),
            skinning_weights: d.skinning_weights.clone(),
            faces: d.faces.clone(),
        }
    }

    pub fn to_data(&self) -> Result<BodyModelData> {
        self.validate()?;
        let up_axis = match self.up_axis.as_str() {
            "x" => UpAxis::X,
            "y" => UpAxis::Y,
            "z" => UpAxis::Z,
            other => return Err(Error::Model(format!("unknown up axis `{other}`"))),
        };
        let parents = self
            .parents
            .iter()
            .map(|&p| match p {
                -1 => Ok(None),
                p if p >= 0 => Ok(Some(p as usize)),
                p => Err(Error::Model(format!("invalid parent index {p}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BodyModelData {
            joint_names: self.joint_names.clone(),
            parents,
            adult_template: unflatten3(&self.adult_template, "adult_template")?,
            child_template: unflatten3(&self.child_template, "child_template")?,
            shape_blendshapes: self.shape_blendshapes.clone(),
            pose_blendshapes: self.pose_blendshapes.clone(),
            joint_regressor: self.joint_regressor.clone(),
            skinning_weights: self.skinning_weights.clone(),
            faces: self.faces.clone(),
            up_axis,
        })
    }

    pub fn to_model(&self) -> Result<BodyModel> {
        BodyModel::new(self.to_data()?)
    }

    /// SHA-256 (hex) of the compact canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model file serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

pub fn model_hash(model: &BodyModel) -> String {
    ModelFile::from_data(model.data()).hash()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BodyModel> {
    load::<ModelFile>(path)?.to_model()
}

// -------------------------------------------------------------- cameras ---

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraFrame {
    /// World-to-camera rotation, row-major.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamerasFile {
    pub schema: String,
    pub intrinsics: CameraIntrinsics,
    pub scale: f64,
    pub frames: Vec<CameraFrame>,
}

impl SchemaFile for CamerasFile {
    const SCHEMA: &'static str = "aionfit-cameras/1";

    fn schema(&self) -> &str {
        &self.schema
    }

    fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        all_finite(
            [k.fx, k.fy, k.cx, k.cy, self.scale]
                .iter()
                .chain(self.frames.iter().flat_map(|f| f.rotation.iter().chain(&f.translation))),
            "cameras",
        )
    }
}

impl CamerasFile {
    pub fn from_track(track: &CameraTrack) -> Self {
        CamerasFile {
            schema: Self::SCHEMA.into(),
            intrinsics: track.intrinsics,
            scale: track.scale,
            frames: track
                .poses
                .iter()
                .map(|p| CameraFrame {
                    rotation: std::array::from_fn(|i| p.rotation[(i / 3, i % 3)]),
                    translation: p.translation.into(),
                })
                .collect(),
        }
    }

    pub fn to_track(&self) -> Result<CameraTrack> {
        let k = self.intrinsics;
        let intrinsics = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy)?;
        let poses = self
            .frames
            .iter()
            .enumerate()
            .map(|(t, f)| {
                CameraPose::new(Matrix3::from_row_slice(&f.rotation), Vector3::from(f.translation))
                    .map_err(|e| Error::Input(format!("camera frame {t}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        CameraTrack::new(poses, intrinsics, self.scale)
    }
}

// ------------------------------------------------------------- jointmap ---

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointPair {
    pub joint: String,
    pub keypoint: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointMapFile {
    pub schema: String,
    pub convention: String,
    pub pairs: Vec<JointPair>,
}

impl SchemaFile for JointMapFile {
    const SCHEMA: &'static str = "aionfit-jointmap/1";

    fn schema(&self) -> &str {
        &self.schema
    }

    fn validate(&self) -> Result<()> {
        let conv = convention(&self.convention)?;
        if let Some(p) = self.pairs.iter().find(|p| conv.index(&p.keypoint).is_none()) {
            return Err(Error::Input(format!("keypoint `{}` is not in `{}`", p.keypoint, conv.name)));
        }
        Ok(())
    }
}

impl JointMapFile {
    pub fn new<S: AsRef<str>>(convention: &str, pairs: &[(S, S)]) -> Self {
        JointMapFile {
            schema: Self::SCHEMA.into(),
            convention: convention.into(),
            pairs: pairs
                .iter()
                .map(|(j, k)| JointPair {
                    joint: j.as_ref().into(),
                    keypoint: k.as_ref().into(),
                })
                .collect(),
        }
    }

    pub fn resolve(&self, model: &BodyModel) -> Result<JointMap> {
        let conv = convention(&self.convention)?;
        let pairs: Vec<(&str, &str)> = self.pairs.iter().map(|p| (p.joint.as_str(), p.keypoint.as_str())).collect();
        JointMap::from_names(model, conv.keypoints, &pairs)
    }
}

// --------------------------------------------------------------- config ---

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub schema: String,
    pub config: FitConfig,
}

impl SchemaFile for ConfigFile {
    const SCHEMA: &'static str = "aionfit-config/1";

    fn schema(&self) -> &str {
        &self.schema
    }

    fn validate(&self) -> Result<()> {
        self.config.validate()
    }
}

impl ConfigFile {
    pub fn new(config: FitConfig) -> Self {
        ConfigFile {
            schema: Self::SCHEMA.into(),
            config,
        }
    }
}

// ----------------------------------------------------------- detections ---

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub frame: usize,
    /// `[x, y, confidence]` per keypoint of the convention.
    pub keypoints: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionTrack {
    pub id: u32,
    pub frames: Vec<DetectionFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionsFile {
    pub schema: String,
    pub convention: String,
    pub tracks: Vec<DetectionTrack>,
}

impl SchemaFile for DetectionsFile {
    const SCHEMA: &'static str = "aionfit-detections/1";

    fn schema(&self) -> &str {
        &self.schema
    }

    fn validate(&self) -> Result<()> {
        let conv = convention(&self.convention)?;
        for (ti, t) in self.tracks.iter().enumerate() {
            for (fi, f) in t.frames.iter().enumerate() {
                let at = || format!("track record {ti} (id {}), frame record {fi}", t.id);
                if fi > 0 && f.frame <= t.frames[fi - 1].frame {
                    return Err(Error::Input(format!("{}: frame indices must strictly increase", at())));
                }
                if f.keypoints.len() != conv.keypoints.len() {
                    return Err(Error::Input(format!(
                        "{}: {} keypoints, convention `{}` has {}",
                        at(),
                        f.keypoints.len(),
                        conv.name,
                        conv.keypoints.len()
                    )));
                }
                if f.keypoints.iter().any(|k| !k.iter().all(|v| v.is_finite()) || k[2] < 0.0) {
                    return Err(Error::Input(format!("{}: non-finite keypoint or negative confidence", at())));
                }
            }
        }
        Ok(())
    }
}

impl DetectionsFile {
    pub fn from_detections(d: &Detections) -> Self {
        DetectionsFile {
            schema: Self::SCHEMA.into(),
            convention: d.convention.clone(),
            tracks: d
                .tracks
                .iter()
                .map(|t| DetectionTrack {
                    id: t.id,
                    frames: t
                        .frames
                        .iter()
                        .map(|f| DetectionFrame {
                            frame: f.frame,
                            keypoints: f
                                .keypoints
                                .points
                                .iter()
                                .zip(&f.keypoints.confidences)
                                .map(|(p, c)| [p.x, p.y, *c])
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_detections(&self) -> Result<Detections> {
        self.validate()?;
        let tracks = self
            .tracks
            .iter()
            .map(|t| {
                let frames = t
                    .frames
                    .iter()
                    .map(|f| {
                        let points = f.keypoints.iter().map(|k| Vector2::new(k[0], k[1])).collect();
                        let conf = f.keypoints.iter().map(|k| k[2]).collect();
                        Ok(TrackFrame {
                            frame: f.frame,
                            keypoints: KeypointFrame::new(points, conf)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(KeypointTrack { id: t.id, frames })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Detections {
            convention: self.convention.clone(),
            tracks,
        })
    }
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Detections> {
    load::<DetectionsFile>(path)?.to_detections()
}

// -------------------------------------------------------------- results ---

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFrame {
    pub frame: usize,
    pub global_orient: [f64; 3],
    /// One axis-angle triple per body joint.
    pub body_pose: Vec<[f64; 3]>,
    pub translation: [f64; 3],
    /// Mean reprojection error (pixels), when the frame had usable keypoints.
    pub residual_px: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTrack {
    pub id: u32,
    pub beta: [f64; NUM_BETAS],
    pub alpha: f64,
    pub frames: Vec<ResultFrame>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub stages: Vec<StageReport>,
    pub rejected: Vec<RejectedTrack>,
    pub mean_residual_px: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema: String,
    /// Hash of the model file the parameters belong to.
    pub model_hash: String,
    pub camera_scale: f64,
    pub tracks: Vec<ResultTrack>,
    pub diagnostics: Diagnostics,
}

impl SchemaFile for ResultsFile {
    const SCHEMA: &'static str = "aionfit-results/1";

    fn schema(&self) -> &str {
        &self.schema
    }

    fn validate(&self) -> Result<()> {
        for t in &self.tracks {
            if !(0.0..=1.0).contains(&t.alpha) {
                return Err(Error::Input(format!("track {}: alpha {} outside [0, 1]", t.id, t.alpha)));
            }
            if let Some(w) = t.frames.windows(2).find(|w| w[1].frame <= w[0].frame) {
                return Err(Error::Input(format!("track {}: frame {} out of order", t.id, w[1].frame)));
            }
            let joints = t.frames.first().map_or(0, |f| f.body_pose.len());
            if t.frames.iter().any(|f| f.body_pose.len() != joints) {
                return Err(Error::Input(format!("track {}: body pose length varies", t.id)));
            }
        }
        all_finite(
            std::iter::once(&self.camera_scale).chain(self.tracks.iter().flat_map(|t| {
                t.beta.iter().chain(std::iter::once(&t.alpha)).chain(t.frames.iter().flat_map(|f| {
                    f.global_orient
                        .iter()
                        .chain(&f.translation)
                        .chain(f.body_pose.iter().flatten())
                        .chain(&f.residual_px)
                }))
            })),
            "results",
        )
    }
}

fn result_track(id: u32, frames: &[usize], state: &PersonState, residuals: Option<&[Option<f64>]>) -> ResultTrack {
    ResultTrack {
        id,
        beta: state.shape.beta,
        alpha: state.shape.alpha,
        frames: state
            .frames
            .iter()
            .zip(frames)
            .enumerate()
            .map(|(i, (f, &frame))| ResultFrame {
                frame,
                global_orient: f.global_orient.into(),
                body_pose: f.body_pose.iter().map(|v| (*v).into()).collect(),
                translation: f.translation.into(),
                residual_px: residuals.and_then(|r| r[i]),
            })
            .collect(),
    }
}

impl ResultsFile {
    /// A fit report; `tracks` supplies the frame indices of each fitted id.
    pub fn from_fit(report: &FitReport, tracks: &[KeypointTrack], model_hash: &str) -> Result<Self> {
        let out = report
            .tracks
            .iter()
            .map(|ft| {
                let t = tracks
                    .iter()
                    .find(|t| t.id == ft.id)
                    .ok_or_else(|| Error::Input(format!("no detections for fitted track {}", ft.id)))?;
                let frames: Vec<usize> = t.frames.iter().map(|f| f.frame).collect();
                Ok(result_track(ft.id, &frames, &ft.state, Some(&ft.frame_residuals)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = report.mean_reprojection_residual();
        Ok(ResultsFile {
            schema: Self::SCHEMA.into(),
            model_hash: model_hash.into(),
            camera_scale: report.camera_scale,
            tracks: out,
            diagnostics: Diagnostics {
                stages: report.stages.clone(),
                rejected: report.rejected.clone(),
                mean_residual_px: mean.is_finite().then_some(mean),
            },
        })
    }

    /// Ground-truth states, e.g. from the synthetic generator.
    pub fn from_states(
        states: &[PersonState],
        tracks: &[KeypointTrack],
        camera_scale: f64,
        model_hash: &str,
    ) -> Result<Self> {
        if states.len() != tracks.len() {
            return Err(Error::Input(format!("{} states for {} tracks", states.len(), tracks.len())));
        }
        Ok(ResultsFile {
            schema: Self::SCHEMA.into(),
            model_hash: model_hash.into(),
            camera_scale,
            tracks: states
                .iter()
                .zip(tracks)
                .map(|(s, t)| {
                    let frames: Vec<usize> = t.frames.iter().map(|f| f.frame).collect();
                    result_track(t.id, &frames, s, None)
                })
                .collect(),
            diagnostics: Diagnostics::default(),
        })
    }

    /// Per-track states in file order.
    pub fn states(&self) -> Vec<PersonState> {
        self.tracks
            .iter()
            .map(|t| PersonState {
                frames: t
                    .frames
                    .iter()
                    .map(|f| FrameState {
                        global_orient: Vector3::from(f.global_orient),
                        body_pose: f.body_pose.iter().map(|v| Vector3::from(*v)).collect(),
                        translation: Vector3::from(f.translation),
                    })
                    .collect(),
                shape: ShapeParams {
                    beta: t.beta,
                    alpha: t.alpha,
                },
            })
            .collect()
    }

    /// Distinct frame indices across all tracks.
    pub fn frame_count(&self) -> usize {
        let mut frames: Vec<usize> = self.tracks.iter().flat_map(|t| t.frames.iter().map(|f| f.frame)).collect();
        frames.sort_unstable();
        frames.dedup();
        frames.len()
    }

    /// Fails unless the file belongs to `model`.
    pub fn check_model(&self, model: &BodyModel, hash: &str) -> Result<()> {
        if self.model_hash != hash {
            return Err(Error::HashMismatch {
                expected: hash.into(),
                found: self.model_hash.clone(),
            });
        }
        let nb = model.body_joint_count();
        if let Some(t) = self.tracks.iter().find(|t| t.frames.iter().any(|f| f.body_pose.len() != nb)) {
            return Err(Error::Input(format!("track {}: body pose does not match the model's {nb} joints", t.id)));
        }
        Ok(())
    }
}
