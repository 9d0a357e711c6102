//! Seeded synthetic sequences with exact ground truth.
//!
//! People stand in a y-up world facing `+z`; the camera sits near the origin
//! looking down `−z`. Joint angles follow low-frequency sinusoids so the
//! trajectories are smooth by construction.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::body_model::{BodyModel, ShapeParams, NUM_BETAS};
use crate::camera::{project, world_point_to_camera, CameraIntrinsics, CameraPose, CameraTrack};
use crate::error::{Error, Result};
use crate::fitter::{FrameState, PersonState};
use crate::objective::{JointMap, KeypointFrame, KeypointTrack, TrackFrame};
use crate::rotation::axis_angle_to_rotation;

use super::Detections;

/// Minimum camera-frame depth (meters) of any generated joint.
const MIN_SYNTH_DEPTH: f64 = 0.5;
const MAX_ATTEMPTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CameraPath {
    /// Fixed camera; translation zero, so the camera scale is unobservable.
    Static,
    /// Camera slides sideways by one meter while turning to keep the people
    /// in view.
    #[default]
    Pan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub frames: usize,
    /// True interpolation weight, one entry per track.
    pub alphas: Vec<f64>,
    /// Standard deviation of the Gaussian pixel noise.
    pub noise_px: f64,
    pub camera: CameraPath,
    /// Peak joint-angle amplitude (radians).
    pub pose_amplitude: f64,
    /// Peak horizontal root drift (meters).
    pub root_drift: f64,
    /// Standard deviation of the ground-truth shape coefficients.
    pub beta_scale: f64,
    /// Distance from the camera path to the people (meters).
    pub depth: f64,
    pub intrinsics: CameraIntrinsics,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            frames: 30,
            alphas: vec![1.0],
            noise_px: 0.0,
            camera: CameraPath::Pan,
            pose_amplitude: 0.2,
            root_drift: 0.05,
            beta_scale: 0.0,
            depth: 4.5,
            intrinsics: CameraIntrinsics {
                fx: 1000.0,
                fy: 1000.0,
                cx: 640.0,
                cy: 360.0,
            },
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("scenario needs at least one frame".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::Config("scenario needs at least one track".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("track alpha {a} outside [0, 1]")));
        }
        if [self.noise_px, self.pose_amplitude, self.root_drift, self.beta_scale].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("noise, amplitude, drift and beta scale must be non-negative".into()));
        }
        if !(self.depth > MIN_SYNTH_DEPTH) {
            return Err(Error::Config(format!("depth must exceed {MIN_SYNTH_DEPTH} m")));
        }
        Ok(())
    }
}

/// Generated detections together with the cameras and states that produced
/// them.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub detections: Detections,
    pub cameras: CameraTrack,
    pub truth: Vec<PersonState>,
}

/// Head-local offsets of the facial keypoints that have no model joint.
const FACE_OFFSETS: [(&str, [f64; 3]); 4] = [
    ("left_eye", [0.03, 0.03, 0.08]),
    ("right_eye", [-0.03, 0.03, 0.08]),
    ("left_ear", [0.07, 0.0, 0.0]),
    ("right_ear", [-0.07, 0.0, 0.0]),
];

fn rot_x(a: f64) -> Matrix3<f64> {
    axis_angle_to_rotation(&Vector3::new(a, 0.0, 0.0))
}

fn rot_y(a: f64) -> Matrix3<f64> {
    axis_angle_to_rotation(&Vector3::new(0.0, a, 0.0))
}

fn camera_track(s: &Scenario) -> Result<CameraTrack> {
    let poses = (0..s.frames)
        .map(|t| {
            let (center, yaw) = match s.camera {
                CameraPath::Static => (Vector3::zeros(), 0.0),
                CameraPath::Pan => {
                    let u = if s.frames > 1 { t as f64 / (s.frames - 1) as f64 } else { 0.5 };
                    let cx = u - 0.5;
                    (Vector3::new(cx, 0.0, 0.0), cx.atan2(s.depth))
                }
            };
            let cam_to_world = rot_y(yaw) * rot_x(PI);
            let r = cam_to_world.transpose();
            CameraPose::new(r, -(r * center))
        })
        .collect::<Result<Vec<_>>>()?;
    CameraTrack::new(poses, s.intrinsics, 1.0)
}

struct Wave {
    offset: f64,
    amplitude: f64,
    omega: f64,
    phase: f64,
}

impl Wave {
    fn sample(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        Wave {
            offset: 0.5 * amplitude * rng.random_range(-1.0..1.0),
            amplitude: amplitude * rng.random_range(-1.0..1.0),
            omega: 2.0 * PI / rng.random_range(25.0..60.0),
            phase: rng.random_range(0.0..2.0 * PI),
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (self.omega * t + self.phase).sin()
    }
}

fn sample_person(
    model: &BodyModel,
    rng: &mut ChaCha8Rng,
    s: &Scenario,
    alpha: f64,
    lateral: f64,
) -> Result<PersonState> {
    let nb = model.body_joint_count();
    let beta_dist = Normal::new(0.0, s.beta_scale.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let beta: [f64; NUM_BETAS] = std::array::from_fn(|_| {
        let b = beta_dist.sample(rng);
        if s.beta_scale > 0.0 { b } else { 0.0 }
    });
    let shape = ShapeParams::new(beta, alpha);
    let up = model.up_axis().index();
    let root_height = model.rest_joints(&shape)[0][up];

    let yaw = Wave::sample(rng, 0.3);
    let drift = [Wave::sample(rng, s.root_drift), Wave::sample(rng, s.root_drift)];
    let joints: Vec<[Wave; 3]> = (0..nb)
        .map(|_| std::array::from_fn(|c| Wave::sample(rng, if c == 1 { 0.5 } else { 1.0 } * s.pose_amplitude)))
        .collect();

    let frames = (0..s.frames)
        .map(|t| {
            let t = t as f64;
            let mut global_orient = Vector3::zeros();
            global_orient[up] = yaw.at(t);
            let mut translation = Vector3::new(lateral + drift[0].at(t), 0.0, -s.depth + drift[1].at(t));
            translation[up] = -root_height;
            FrameState {
                global_orient,
                body_pose: joints.iter().map(|w| Vector3::new(w[0].at(t), w[1].at(t), w[2].at(t))).collect(),
                translation,
            }
        })
        .collect();
    Ok(PersonState { frames, shape })
}

/// Renders one person's keypoints; `None` if any point is too close to or
/// behind the camera.
fn render(
    model: &BodyModel,
    joint_map: &JointMap,
    face: &[(usize, Vector3<f64>)],
    head: Option<usize>,
    state: &PersonState,
    cams: &CameraTrack,
) -> Result<Option<Vec<Vec<Vector2<f64>>>>> {
    let mut out = Vec::with_capacity(state.frames.len());
    for (t, f) in state.frames.iter().enumerate() {
        let posed = model.pose_joints(&state.shape, &f.pose())?;
        let pose = &cams.poses[t];
        let mut points = vec![Vector2::zeros(); joint_map.keypoint_count()];
        let mut cam_points: Vec<(usize, Vector3<f64>)> = joint_map
            .pairs()
            .iter()
            .map(|&(j, k)| (k, world_point_to_camera(pose, cams.scale, &(posed.positions[j] + f.translation))))
            .collect();
        if let Some(h) = head {
            for (k, off) in face {
                let p = posed.positions[h] + posed.global[h] * off + f.translation;
                cam_points.push((*k, world_point_to_camera(pose, cams.scale, &p)));
            }
        }
        for (k, pc) in cam_points {
            if pc.z < MIN_SYNTH_DEPTH {
                return Ok(None);
            }
            points[k] = project(&cams.intrinsics, &pc)?;
        }
        out.push(points);
    }
    Ok(Some(out))
}

/// Generates a reproducible scenario. Keypoints reached through `joint_map`
/// (plus eyes and ears, when the convention has them and the model has a
/// `head` joint) get confidence 1; all others get confidence 0.
pub fn synth_generate(
    model: &BodyModel,
    joint_map: &JointMap,
    convention: &str,
    scenario: &Scenario,
    seed: u64,
) -> Result<SynthOutput> {
    scenario.validate()?;
    if model.up_axis() != crate::body_model::UpAxis::Y {
        return Err(Error::Config("the synthetic world is y-up; model must declare up axis y".into()));
    }
    let conv = super::convention(convention)?;
    if conv.keypoints.len() != joint_map.keypoint_count() {
        return Err(Error::Config(format!(
            "joint map expects {} keypoints, convention `{}` has {}",
            joint_map.keypoint_count(),
            conv.name,
            conv.keypoints.len()
        )));
    }
    let mapped: Vec<usize> = joint_map.pairs().iter().map(|p| p.1).collect();
    let face: Vec<(usize, Vector3<f64>)> = FACE_OFFSETS
        .iter()
        .filter_map(|(name, off)| conv.index(name).map(|k| (k, Vector3::from(*off))))
        .filter(|(k, _)| !mapped.contains(k))
        .collect();
    let head = model.joint_index("head");
    let mut visible = vec![false; conv.keypoints.len()];
    for &k in &mapped {
        visible[k] = true;
    }
    if head.is_some() {
        for (k, _) in &face {
            visible[*k] = true;
        }
    }

    let cameras = camera_track(scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, scenario.noise_px.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let n = scenario.alphas.len();

    let mut truth = Vec::with_capacity(n);
    let mut tracks = Vec::with_capacity(n);
    for (i, &alpha) in scenario.alphas.iter().enumerate() {
        let lateral = 1.2 * (i as f64 - 0.5 * (n - 1) as f64);
        let mut rendered = None;
        for _ in 0..MAX_ATTEMPTS {
            let person = sample_person(model, &mut rng, scenario, alpha, lateral)?;
            if let Some(points) = render(model, joint_map, &face, head, &person, &cameras)? {
                rendered = Some((person, points));
                break;
            }
        }
        let (person, points) = rendered.ok_or_else(|| {
            Error::Input(format!("track {i}: every sampled trajectory put a joint behind the camera"))
        })?;
        let frames = points
            .into_iter()
            .enumerate()
            .map(|(t, mut pts)| {
                for (p, vis) in pts.iter_mut().zip(&visible) {
                    if *vis && scenario.noise_px > 0.0 {
                        *p += Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                    }
                }
                let conf = visible.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
                Ok(TrackFrame {
                    frame: t,
                    keypoints: KeypointFrame::new(pts, conf)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        tracks.push(KeypointTrack { id: i as u32, frames });
        truth.push(person);
    }
    Ok(SynthOutput {
        detections: Detections {
            convention: conv.name.to_string(),
            tracks,
        },
        cameras,
        truth,
    })
}
