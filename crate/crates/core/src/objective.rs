//! Fitting energies.
//!
//! `total = λ_data·E_data + λ_β·E_β + λ_pose·E_pose + λ_smooth·E_smooth`, with
//! the data term a confidence-weighted Geman-McClure penalty on reprojected
//! joints. [`evaluate`] computes every active term and, on request, the exact
//! gradient with respect to all person parameters and the camera scale.

use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::body_model::{BodyModel, PoseParams, NUM_BETAS};
use crate::camera::{project_with_jacobian, world_point_to_camera, CameraTrack, MIN_DEPTH};
use crate::error::{Error, Result};
use crate::fitter::PersonState;

/// Latent size of the learned pose prior interface.
pub const POSE_LATENT_DIM: usize = 32;

/// Detections below this confidence never enter the data term.
pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.05;

/// 2D detections for one frame of one person.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointFrame {
    pub points: Vec<Vector2<f64>>,
    pub confidences: Vec<f64>,
}

impl KeypointFrame {
    pub fn new(points: Vec<Vector2<f64>>, confidences: Vec<f64>) -> Result<Self> {
        if points.len() != confidences.len() {
            return Err(Error::Input(format!(
                "{} keypoints but {} confidences",
                points.len(),
                confidences.len()
            )));
        }
        if let Some(c) = confidences.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::Input(format!("invalid confidence {c}")));
        }
        Ok(KeypointFrame {
            points,
            confidences,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One frame of a track: the absolute frame index (into the camera track)
/// and its detections.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackFrame {
    pub frame: usize,
    pub keypoints: KeypointFrame,
}

/// Detections of a single identity over time.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointTrack {
    pub id: u32,
    pub frames: Vec<TrackFrame>,
}

/// Pairs of (model joint index, detection keypoint index).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointMap {
    pairs: Vec<(usize, usize)>,
    keypoint_count: usize,
}

impl JointMap {
    pub fn new(pairs: Vec<(usize, usize)>, model_joints: usize, keypoint_count: usize) -> Result<Self> {
        let mut seen = vec![false; keypoint_count];
        for &(j, k) in &pairs {
            if j >= model_joints {
                return Err(Error::Input(format!("model joint index {j} out of range")));
            }
            if k >= keypoint_count {
                return Err(Error::Input(format!("keypoint index {k} out of range")));
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::Input(format!("keypoint {k} mapped twice")));
            }
        }
        Ok(JointMap {
            pairs,
            keypoint_count,
        })
    }

    /// Resolves `(model joint name, keypoint name)` pairs.
    pub fn from_names<S: AsRef<str>>(
        model: &BodyModel,
        keypoint_names: &[S],
        pairs: &[(S, S)],
    ) -> Result<Self> {
        let resolved = pairs
            .iter()
            .map(|(j, k)| {
                let ji = model
                    .joint_index(j.as_ref())
                    .ok_or_else(|| Error::Input(format!("unknown model joint `{}`", j.as_ref())))?;
                let ki = keypoint_names
                    .iter()
                    .position(|n| n.as_ref() == k.as_ref())
                    .ok_or_else(|| Error::Input(format!("unknown keypoint `{}`", k.as_ref())))?;
                Ok((ji, ki))
            })
            .collect::<Result<Vec<_>>>()?;
        JointMap::new(resolved, model.joint_count(), keypoint_names.len())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn keypoint_count(&self) -> usize {
        self.keypoint_count
    }
}

/// How the bounded Geman-McClure value is scaled inside the data term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RobustScale {
    /// `ρ(r) = |r|²/(σ² + |r|²)`, in `[0, 1)`.
    Unit,
    /// `σ²·ρ(r)`: behaves like the squared pixel error for inliers and
    /// saturates at `σ²`.
    #[default]
    PixelSquared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustLossConfig {
    /// Pixels.
    pub sigma: f64,
    #[serde(default)]
    pub scale: RobustScale,
}

impl Default for RobustLossConfig {
    fn default() -> Self {
        RobustLossConfig {
            sigma: 100.0,
            scale: RobustScale::PixelSquared,
        }
    }
}

impl RobustLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("robust sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    fn factor(&self) -> f64 {
        match self.scale {
            RobustScale::Unit => 1.0,
            RobustScale::PixelSquared => self.sigma * self.sigma,
        }
    }

    /// Scaled cost and its derivative with respect to the residual.
    fn cost_and_grad(&self, r: &Vector2<f64>) -> (f64, Vector2<f64>) {
        let s2 = self.sigma * self.sigma;
        let n2 = r.norm_squared();
        let denom = s2 + n2;
        let f = self.factor();
        (f * n2 / denom, r * (2.0 * f * s2 / (denom * denom)))
    }
}

/// `|r|²/(σ² + |r|²)`.
pub fn geman_mcclure(r: &Vector2<f64>, cfg: &RobustLossConfig) -> f64 {
    let n2 = r.norm_squared();
    n2 / (cfg.sigma * cfg.sigma + n2)
}

/// Term weights and iteration budget for one optimization stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageWeights {
    pub lambda_data: f64,
    pub lambda_smooth: f64,
    pub lambda_pose: f64,
    pub lambda_beta: f64,
    pub iterations: usize,
}

impl StageWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda_data, self.lambda_smooth, self.lambda_pose, self.lambda_beta];
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Config(format!("stage weights must be nonnegative: {w:?}")));
        }
        if self.iterations == 0 {
            return Err(Error::Config("stage iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Maps a body pose to a latent code and back-propagates latent adjoints.
pub trait PoseEncoder: Send + Sync {
    fn encode(&self, body_pose: &[Vector3<f64>]) -> Vec<f64>;
    fn encode_vjp(&self, body_pose: &[Vector3<f64>], adj_latent: &[f64]) -> Vec<Vector3<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PosePriorKind {
    /// Isotropic Gaussian on the axis-angle body pose.
    #[default]
    GaussianParameterSpace,
    /// Squared norm of a 32-dimensional latent code from a [`PoseEncoder`].
    ExternalLatent,
}

#[derive(Clone, Default)]
pub struct PosePrior {
    pub kind: PosePriorKind,
    encoder: Option<Arc<dyn PoseEncoder>>,
}

impl std::fmt::Debug for PosePrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PosePrior")
            .field("kind", &self.kind)
            .field("encoder", &self.encoder.is_some())
            .finish()
    }
}

impl PosePrior {
    pub fn gaussian() -> Self {
        PosePrior::default()
    }

    pub fn external(encoder: Option<Arc<dyn PoseEncoder>>) -> Self {
        PosePrior {
            kind: PosePriorKind::ExternalLatent,
            encoder,
        }
    }

    pub fn latent_dim(&self) -> Option<usize> {
        match self.kind {
            PosePriorKind::GaussianParameterSpace => None,
            PosePriorKind::ExternalLatent => Some(POSE_LATENT_DIM),
        }
    }

    fn encoder(&self) -> Result<&dyn PoseEncoder> {
        self.encoder
            .as_deref()
            .ok_or_else(|| Error::Config("external latent pose prior selected but no encoder registered".into()))
    }

    /// Prior value for one body pose, plus its gradient when asked.
    fn cost(&self, body_pose: &[Vector3<f64>], grad: bool) -> Result<(f64, Option<Vec<Vector3<f64>>>)> {
        match self.kind {
            PosePriorKind::GaussianParameterSpace => {
                let c = body_pose.iter().map(|v| v.norm_squared()).sum();
                Ok((c, grad.then(|| body_pose.iter().map(|v| v * 2.0).collect())))
            }
            PosePriorKind::ExternalLatent => {
                let enc = self.encoder()?;
                let z = enc.encode(body_pose);
                if z.len() != POSE_LATENT_DIM {
                    return Err(Error::Config(format!(
                        "pose encoder returned {} latent values, expected {POSE_LATENT_DIM}",
                        z.len()
                    )));
                }
                let c = z.iter().map(|x| x * x).sum();
                let g = grad.then(|| {
                    let adj: Vec<f64> = z.iter().map(|x| 2.0 * x).collect();
                    enc.encode_vjp(body_pose, &adj)
                });
                Ok((c, g))
            }
        }
    }
}

/// Everything the energies need besides the optimized parameters.
#[derive(Clone, Debug)]
pub struct Problem<'a> {
    pub model: &'a BodyModel,
    pub tracks: &'a [KeypointTrack],
    pub joint_map: &'a JointMap,
    pub robust: RobustLossConfig,
    pub confidence_floor: f64,
    pub pose_prior: PosePrior,
}

impl<'a> Problem<'a> {
    pub fn new(model: &'a BodyModel, tracks: &'a [KeypointTrack], joint_map: &'a JointMap) -> Self {
        Problem {
            model,
            tracks,
            joint_map,
            robust: RobustLossConfig::default(),
            confidence_floor: DEFAULT_CONFIDENCE_FLOOR,
            pose_prior: PosePrior::gaussian(),
        }
    }

    /// Checks that states, cameras and detections line up.
    pub fn check(&self, states: &[PersonState], cams: &CameraTrack) -> Result<()> {
        if states.len() != self.tracks.len() {
            return Err(Error::Input(format!(
                "{} person states for {} tracks",
                states.len(),
                self.tracks.len()
            )));
        }
        for (i, (s, t)) in states.iter().zip(self.tracks).enumerate() {
            if s.frames.len() != t.frames.len() {
                return Err(Error::Input(format!(
                    "track {i}: {} state frames but {} detection frames",
                    s.frames.len(),
                    t.frames.len()
                )));
            }
            for f in &t.frames {
                if f.frame >= cams.len() {
                    return Err(Error::Input(format!(
                        "track {i}: frame {} beyond camera track of length {}",
                        f.frame,
                        cams.len()
                    )));
                }
                if f.keypoints.len() != self.joint_map.keypoint_count() {
                    return Err(Error::Input(format!(
                        "track {i}, frame {}: {} keypoints, joint map expects {}",
                        f.frame,
                        f.keypoints.len(),
                        self.joint_map.keypoint_count()
                    )));
                }
            }
            for fs in &s.frames {
                if fs.body_pose.len() != self.model.body_joint_count() {
                    return Err(Error::Input(format!(
                        "track {i}: body pose length {} does not match model",
                        fs.body_pose.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Unweighted term values and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyTerms {
    pub data: f64,
    pub smooth: f64,
    pub pose: f64,
    pub beta: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameGradient {
    pub global_orient: Vector3<f64>,
    pub body_pose: Vec<Vector3<f64>>,
    pub translation: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackGradient {
    pub frames: Vec<FrameGradient>,
    pub beta: [f64; NUM_BETAS],
    pub alpha: f64,
}

/// Gradient of the weighted total with respect to natural parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct StateGradient {
    pub tracks: Vec<TrackGradient>,
    pub camera_scale: f64,
}

/// World joints of every frame of one person.
pub fn person_world_joints(model: &BodyModel, state: &PersonState) -> Result<Vec<Vec<Vector3<f64>>>> {
    state
        .frames
        .iter()
        .map(|f| {
            let chain = model.pose_joints(&state.shape, &f.pose())?;
            Ok(chain.positions.iter().map(|p| p + f.translation).collect())
        })
        .collect()
}

/// Data energy: `Σ ψ·ρ(Π_K(R·J + α_c·T) − x)` over persons, frames and mapped
/// joints. Low-confidence and behind-camera joints contribute nothing.
pub fn e_data(problem: &Problem<'_>, states: &[PersonState], cams: &CameraTrack) -> Result<f64> {
    problem.check(states, cams)?;
    let mut total = 0.0;
    for (state, track) in states.iter().zip(problem.tracks) {
        let joints = person_world_joints(problem.model, state)?;
        for (tf, world) in track.frames.iter().zip(&joints) {
            let pose = &cams.poses[tf.frame];
            for &(j, k) in problem.joint_map.pairs() {
                let psi = tf.keypoints.confidences[k];
                if psi < problem.confidence_floor {
                    continue;
                }
                let pc = world_point_to_camera(pose, cams.scale, &world[j]);
                let Ok((uv, _)) = project_with_jacobian(&cams.intrinsics, &pc) else {
                    continue;
                };
                let (c, _) = problem.robust.cost_and_grad(&(uv - tf.keypoints.points[k]));
                total += psi * c;
            }
        }
    }
    Ok(total)
}

/// `Σ_i Σ_{t<T} |J_t − J_{t+1}|²` over all joints.
pub fn e_smooth(joint_sequences: &[Vec<Vec<Vector3<f64>>>]) -> f64 {
    joint_sequences
        .iter()
        .flat_map(|seq| seq.windows(2))
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b).norm_squared())
                .sum::<f64>()
        })
        .sum()
}

pub fn e_pose(states: &[PersonState], prior: &PosePrior) -> Result<f64> {
    let mut total = 0.0;
    for s in states {
        for f in &s.frames {
            total += prior.cost(&f.body_pose, false)?.0;
        }
    }
    Ok(total)
}

/// `Σ_i |β_i|²`; the interpolation weight is not penalized.
pub fn e_beta(states: &[PersonState]) -> f64 {
    states
        .iter()
        .map(|s| s.shape.beta.iter().map(|b| b * b).sum::<f64>())
        .sum()
}

pub fn total_objective(
    problem: &Problem<'_>,
    states: &[PersonState],
    cams: &CameraTrack,
    weights: &StageWeights,
) -> Result<f64> {
    Ok(evaluate(problem, states, cams, weights, false)?.0.total)
}

/// Evaluates the weighted objective and optionally its gradient. Terms with
/// zero weight are skipped.
pub fn evaluate(
    problem: &Problem<'_>,
    states: &[PersonState],
    cams: &CameraTrack,
    weights: &StageWeights,
    with_gradient: bool,
) -> Result<(EnergyTerms, Option<StateGradient>)> {
    problem.check(states, cams)?;
    let model = problem.model;
    let nb = model.body_joint_count();
    let nj = model.joint_count();
    let use_data = weights.lambda_data != 0.0;
    let use_smooth = weights.lambda_smooth != 0.0;
    let use_pose = weights.lambda_pose != 0.0;
    let use_beta = weights.lambda_beta != 0.0;

    let mut terms = EnergyTerms::default();
    let mut grad_tracks = Vec::new();
    let mut d_scale = 0.0;

    for (state, track) in states.iter().zip(problem.tracks) {
        let nt = state.frames.len();
        let mut tg = TrackGradient {
            frames: vec![
                FrameGradient {
                    global_orient: Vector3::zeros(),
                    body_pose: vec![Vector3::zeros(); nb],
                    translation: Vector3::zeros(),
                };
                nt
            ],
            beta: [0.0; NUM_BETAS],
            alpha: 0.0,
        };

        if use_data || use_smooth {
            let poses: Vec<PoseParams> = state.frames.iter().map(|f| f.pose()).collect();
            let chains = poses
                .iter()
                .map(|p| model.pose_joints(&state.shape, p))
                .collect::<Result<Vec<_>>>()?;
            let world: Vec<Vec<Vector3<f64>>> = chains
                .iter()
                .zip(&state.frames)
                .map(|(c, f)| c.positions.iter().map(|p| p + f.translation).collect())
                .collect();
            let mut adj = vec![vec![Vector3::zeros(); nj]; nt];

            if use_data {
                for (t, tf) in track.frames.iter().enumerate() {
                    let cam = &cams.poses[tf.frame];
                    for &(j, k) in problem.joint_map.pairs() {
                        let psi = tf.keypoints.confidences[k];
                        if psi < problem.confidence_floor {
                            continue;
                        }
                        let pc = world_point_to_camera(cam, cams.scale, &world[t][j]);
                        if pc.z <= MIN_DEPTH {
                            continue;
                        }
                        let (uv, jac) = project_with_jacobian(&cams.intrinsics, &pc)?;
                        let (c, dc) = problem.robust.cost_and_grad(&(uv - tf.keypoints.points[k]));
                        terms.data += psi * c;
                        if with_gradient {
                            let adj_c = jac.transpose() * (dc * (psi * weights.lambda_data));
                            adj[t][j] += cam.rotation.transpose() * adj_c;
                            d_scale += adj_c.dot(&cam.translation);
                        }
                    }
                }
            }

            if use_smooth {
                for t in 0..nt.saturating_sub(1) {
                    for j in 0..nj {
                        let d = world[t][j] - world[t + 1][j];
                        terms.smooth += d.norm_squared();
                        if with_gradient {
                            let g = d * (2.0 * weights.lambda_smooth);
                            adj[t][j] += g;
                            adj[t + 1][j] -= g;
                        }
                    }
                }
            }

            if with_gradient {
                for t in 0..nt {
                    let fg = &mut tg.frames[t];
                    fg.translation = adj[t].iter().sum();
                    let jg = chains[t].backprop(model, &poses[t], &adj[t]);
                    fg.global_orient += jg.global_orient;
                    for (a, b) in fg.body_pose.iter_mut().zip(&jg.body_pose) {
                        *a += b;
                    }
                    tg.alpha += jg.alpha;
                    for (a, b) in tg.beta.iter_mut().zip(&jg.beta) {
                        *a += b;
                    }
                }
            }
        }

        if use_pose {
            for (t, f) in state.frames.iter().enumerate() {
                let (c, g) = problem.pose_prior.cost(&f.body_pose, with_gradient)?;
                terms.pose += c;
                if let Some(g) = g {
                    for (a, b) in tg.frames[t].body_pose.iter_mut().zip(&g) {
                        *a += b * weights.lambda_pose;
                    }
                }
            }
        }

        if use_beta {
            terms.beta += state.shape.beta.iter().map(|b| b * b).sum::<f64>();
            if with_gradient {
                for (a, b) in tg.beta.iter_mut().zip(&state.shape.beta) {
                    *a += 2.0 * weights.lambda_beta * b;
                }
            }
        }

        grad_tracks.push(tg);
    }

    terms.total = weights.lambda_data * terms.data
        + weights.lambda_beta * terms.beta
        + weights.lambda_pose * terms.pose
        + weights.lambda_smooth * terms.smooth;
    let grad = with_gradient.then_some(StateGradient {
        tracks: grad_tracks,
        camera_scale: d_scale,
    });
    Ok((terms, grad))
}

/// Componentwise comparison of an analytic gradient against central finite
/// differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub worst_index: usize,
}

/// Central differences with step `h_rel·max(1, |x_i|)`. The relative error
/// of component `i` is `|a − n| / max(|a|, |n|, abs_floor)`.
pub fn finite_difference_check<F>(mut f: F, x: &[f64], analytic: &[f64], h_rel: f64, abs_floor: f64) -> Result<GradientCheck>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut worst = GradientCheck {
        max_relative_error: 0.0,
        worst_index: 0,
    };
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = h_rel * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(abs_floor);
        if !(err <= worst.max_relative_error) {
            worst = GradientCheck {
                max_relative_error: err,
                worst_index: i,
            };
        }
    }
    Ok(worst)
}
