//! Two-stage fitting of person states to keypoint tracks.
//!
//! Stage 1 moves only root orientation and translation under the data term.
//! Stage 2 frees everything (pose, shape, interpolation weight and camera
//! scale) and adds the smoothness, pose and shape priors.

pub mod layout;
pub mod lbfgs;

use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::body_model::{BodyModel, PoseParams, ShapeParams, UpAxis, NUM_BETAS};
use crate::camera::{init_world_from_camera, project, world_point_to_camera, CameraTrack};
use crate::error::{Error, Result};
use crate::objective::{
    evaluate, finite_difference_check, GradientCheck, JointMap, KeypointTrack, PoseEncoder, PosePrior,
    PosePriorKind, Problem, RobustLossConfig, StageWeights, DEFAULT_CONFIDENCE_FLOOR,
};

use layout::{FreeBlocks, FreeParameterLayout};
use lbfgs::{lbfgs_minimize, LbfgsOptions, Termination};

/// Largest componentwise relative error tolerated by the gradient gate.
pub const GRADIENT_GATE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct FrameState {
    pub global_orient: Vector3<f64>,
    pub body_pose: Vec<Vector3<f64>>,
    /// Root translation (meters, world frame).
    pub translation: Vector3<f64>,
}

impl FrameState {
    pub fn pose(&self) -> PoseParams {
        PoseParams {
            global_orient: self.global_orient,
            body_pose: self.body_pose.clone(),
        }
    }
}

/// One person: per-frame root and pose, one shape for the whole track.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonState {
    pub frames: Vec<FrameState>,
    pub shape: ShapeParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LineSearch {
    #[default]
    StrongWolfe,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsSettings {
    pub step_scale: f64,
    pub history: usize,
    pub line_search: LineSearch,
    pub grad_tol: f64,
    pub max_evals_per_iter: usize,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        LbfgsSettings {
            step_scale: 1.0,
            history: 10,
            line_search: LineSearch::StrongWolfe,
            grad_tol: 1e-7,
            max_evals_per_iter: 20,
        }
    }
}

impl LbfgsSettings {
    fn options(&self, iterations: usize) -> LbfgsOptions {
        LbfgsOptions {
            step_scale: self.step_scale,
            history: self.history,
            grad_tol: self.grad_tol,
            max_evals_per_iter: self.max_evals_per_iter,
            max_iters: iterations,
            ..LbfgsOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub stage1: StageWeights,
    pub stage2: StageWeights,
    pub lbfgs: LbfgsSettings,
    pub alpha_init: f64,
    pub camera_scale_init: f64,
    pub robust: RobustLossConfig,
    pub confidence_floor: f64,
    pub pose_prior: PosePriorKind,
    /// Store translations divided by the relative stature `s(α)` while `α`
    /// is free. Changes the conditioning only, never the objective.
    pub stature_coupling: bool,
    /// Also run stage 1 from both template endpoints (`α = 0` and `α = 1`)
    /// and start each track's stage 2 from whichever start fits its
    /// keypoints best. A single start rarely crosses between the adult and
    /// child basins within the stage-2 budget.
    pub alpha_endpoint_search: bool,
    /// Run the finite-difference gradient check on each stage's exact layout
    /// before optimizing, and fail the stage if it does not pass.
    pub gradient_check: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            stage1: StageWeights {
                lambda_data: 0.001,
                lambda_smooth: 0.0,
                lambda_pose: 0.0,
                lambda_beta: 0.0,
                iterations: 30,
            },
            stage2: StageWeights {
                lambda_data: 0.001,
                lambda_smooth: 5.0,
                lambda_pose: 0.04,
                lambda_beta: 0.05,
                iterations: 60,
            },
            lbfgs: LbfgsSettings::default(),
            alpha_init: 1.0,
            camera_scale_init: 1.0,
            robust: RobustLossConfig::default(),
            confidence_floor: DEFAULT_CONFIDENCE_FLOOR,
            pose_prior: PosePriorKind::GaussianParameterSpace,
            stature_coupling: true,
            alpha_endpoint_search: true,
            gradient_check: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.robust.validate()?;
        let l = &self.lbfgs;
        if !(l.step_scale > 0.0) || l.history == 0 || l.max_evals_per_iter == 0 || !(l.grad_tol >= 0.0) {
            return Err(Error::Config(format!("invalid L-BFGS settings: {l:?}")));
        }
        if !(0.0..=1.0).contains(&self.alpha_init) {
            return Err(Error::Config(format!("alpha_init {} outside [0, 1]", self.alpha_init)));
        }
        if !(self.camera_scale_init > 0.0) {
            return Err(Error::Config("camera_scale_init must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(Error::Config("confidence_floor must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Camera-frame estimates for one frame (e.g. from a per-frame regressor).
#[derive(Clone, Debug, PartialEq)]
pub struct FrameHint {
    pub global_orient: Vector3<f64>,
    pub body_pose: Vec<Vector3<f64>>,
    pub translation: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackHints {
    pub frames: Vec<FrameHint>,
    pub beta: [f64; NUM_BETAS],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectedTrack {
    pub id: u32,
    pub reason: String,
}

/// Result of [`Fitter::init_tracks`]. `accepted[i]` is the index into the
/// input tracks of `states[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Initialization {
    pub states: Vec<PersonState>,
    pub accepted: Vec<usize>,
    pub camera_scale: f64,
    pub rejected: Vec<RejectedTrack>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    /// Objective at the start and after every accepted iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub final_gradient_norm: f64,
    pub gradient_check: Option<f64>,
}

impl StageReport {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::GradientTolerance | Termination::SmallChange)
    }

    /// Line-search failures end a stage early without failing the fit.
    pub fn stopped_early(&self) -> bool {
        self.termination == Termination::LineSearchFailed
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedTrack {
    pub id: u32,
    pub state: PersonState,
    /// Mean reprojection error per frame (pixels); `None` when no keypoint
    /// of that frame entered the data term.
    pub frame_residuals: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub tracks: Vec<FittedTrack>,
    pub camera_scale: f64,
    pub stages: Vec<StageReport>,
    pub rejected: Vec<RejectedTrack>,
}

impl FitReport {
    /// Mean over every (frame, keypoint) residual that entered the data term.
    pub fn mean_reprojection_residual(&self) -> f64 {
        let (sum, n) = self
            .tracks
            .iter()
            .flat_map(|t| t.frame_residuals.iter().flatten())
            .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }
}

/// `z = f_y·h_model / h_bbox`.
pub fn heuristic_depth(fy: f64, model_height: f64, bbox_height: f64) -> f64 {
    fy * model_height / bbox_height
}

/// Camera-frame root orientation that maps the model's up axis onto image up
/// (`−y`) with the model facing the camera.
pub fn upright_orientation(up: UpAxis) -> Vector3<f64> {
    use std::f64::consts::{FRAC_PI_2, PI};
    match up {
        UpAxis::Y => Vector3::new(PI, 0.0, 0.0),
        UpAxis::Z => Vector3::new(FRAC_PI_2, 0.0, 0.0),
        UpAxis::X => Vector3::new(0.0, 0.0, -FRAC_PI_2),
    }
}

/// Per-frame mean reprojection error of each track.
pub fn reprojection_residuals(
    problem: &Problem<'_>,
    states: &[PersonState],
    cams: &CameraTrack,
) -> Result<Vec<Vec<Option<f64>>>> {
    problem.check(states, cams)?;
    states
        .iter()
        .zip(problem.tracks)
        .map(|(s, track)| {
            let joints = crate::objective::person_world_joints(problem.model, s)?;
            Ok(track
                .frames
                .iter()
                .zip(&joints)
                .map(|(tf, world)| {
                    let pose = &cams.poses[tf.frame];
                    let errs: Vec<f64> = problem
                        .joint_map
                        .pairs()
                        .iter()
                        .filter(|(_, k)| tf.keypoints.confidences[*k] >= problem.confidence_floor)
                        .filter_map(|&(j, k)| {
                            let pc = world_point_to_camera(pose, cams.scale, &world[j]);
                            project(&cams.intrinsics, &pc)
                                .ok()
                                .map(|uv| (uv - tf.keypoints.points[k]).norm())
                        })
                        .collect();
                    (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
                })
                .collect())
        })
        .collect()
}

/// Drives initialization and both optimization stages.
pub struct Fitter<'a> {
    model: &'a BodyModel,
    joint_map: &'a JointMap,
    config: FitConfig,
    encoder: Option<Arc<dyn PoseEncoder>>,
}

impl<'a> Fitter<'a> {
    pub fn new(model: &'a BodyModel, joint_map: &'a JointMap, config: FitConfig) -> Result<Self> {
        config.validate()?;
        Ok(Fitter {
            model,
            joint_map,
            config,
            encoder: None,
        })
    }

    /// Registers the encoder used by the external-latent pose prior.
    pub fn with_pose_encoder(mut self, encoder: Arc<dyn PoseEncoder>) -> Self {
        self.encoder = Some(encoder);
        self
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn problem<'t>(&'t self, tracks: &'t [KeypointTrack]) -> Problem<'t> {
        let pose_prior = match self.config.pose_prior {
            PosePriorKind::GaussianParameterSpace => PosePrior::gaussian(),
            PosePriorKind::ExternalLatent => PosePrior::external(self.encoder.clone()),
        };
        Problem {
            model: self.model,
            tracks,
            joint_map: self.joint_map,
            robust: self.config.robust,
            confidence_floor: self.config.confidence_floor,
            pose_prior,
        }
    }

    /// Builds world-frame initial states. With hints, root orientation and
    /// translation come from the camera-frame estimates; without them the
    /// body starts upright in the rest pose at a depth guessed from the
    /// keypoint bounding box. The interpolation weight always starts at
    /// `alpha_init`.
    pub fn init_tracks(
        &self,
        tracks: &[KeypointTrack],
        cams: &CameraTrack,
        hints: Option<&[TrackHints]>,
    ) -> Result<Initialization> {
        if tracks.is_empty() {
            return Err(Error::Input("no detection tracks".into()));
        }
        if let Some(h) = hints {
            if h.len() != tracks.len() {
                return Err(Error::Input(format!("{} hint tracks for {} detection tracks", h.len(), tracks.len())));
            }
        }
        let scale = self.config.camera_scale_init;
        let nb = self.model.body_joint_count();
        let mut out = Initialization {
            states: Vec::new(),
            accepted: Vec::new(),
            camera_scale: scale,
            rejected: Vec::new(),
        };

        for (ti, track) in tracks.iter().enumerate() {
            if let Some(f) = track.frames.iter().find(|f| f.frame >= cams.len()) {
                return Err(Error::Input(format!(
                    "track {}: frame {} beyond camera track of length {}",
                    track.id,
                    f.frame,
                    cams.len()
                )));
            }
            let usable: Vec<Vec<(usize, Vector2<f64>)>> = track
                .frames
                .iter()
                .map(|tf| {
                    self.joint_map
                        .pairs()
                        .iter()
                        .filter(|(_, k)| {
                            tf.keypoints.confidences.get(*k).is_some_and(|c| *c >= self.config.confidence_floor)
                        })
                        .map(|&(j, k)| (j, tf.keypoints.points[k]))
                        .collect()
                })
                .collect();
            if track.frames.is_empty() || usable.iter().all(|u| u.is_empty()) {
                out.rejected.push(RejectedTrack {
                    id: track.id,
                    reason: "no usable keypoints in any frame".into(),
                });
                continue;
            }

            let state = match hints.map(|h| &h[ti]) {
                Some(h) => {
                    if h.frames.len() != track.frames.len() {
                        return Err(Error::Input(format!(
                            "track {}: {} hint frames for {} detection frames",
                            track.id,
                            h.frames.len(),
                            track.frames.len()
                        )));
                    }
                    let frames = h
                        .frames
                        .iter()
                        .zip(&track.frames)
                        .map(|(fh, tf)| {
                            if fh.body_pose.len() != nb {
                                return Err(Error::Input("hint body pose length does not match model".into()));
                            }
                            let (phi, gamma) =
                                init_world_from_camera(&cams.poses[tf.frame], scale, &fh.global_orient, &fh.translation);
                            Ok(FrameState {
                                global_orient: phi,
                                body_pose: fh.body_pose.clone(),
                                translation: gamma,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    PersonState {
                        frames,
                        shape: ShapeParams {
                            beta: h.beta,
                            alpha: self.config.alpha_init,
                        },
                    }
                }
                None => match self.heuristic_init(track, &usable, cams) {
                    Ok(s) => s,
                    Err(reason) => {
                        out.rejected.push(RejectedTrack { id: track.id, reason });
                        continue;
                    }
                },
            };
            out.states.push(state);
            out.accepted.push(ti);
        }
        Ok(out)
    }

    fn heuristic_init(
        &self,
        track: &KeypointTrack,
        usable: &[Vec<(usize, Vector2<f64>)>],
        cams: &CameraTrack,
    ) -> std::result::Result<PersonState, String> {
        let shape = ShapeParams {
            beta: [0.0; NUM_BETAS],
            alpha: self.config.alpha_init,
        };
        let nb = self.model.body_joint_count();
        let phi_c = upright_orientation(self.model.up_axis());
        let upright = PoseParams {
            global_orient: phi_c,
            body_pose: vec![Vector3::zeros(); nb],
        };
        let posed = self
            .model
            .pose_joints(&shape, &upright)
            .map_err(|e| e.to_string())?
            .positions;
        let rest = self.model.rest_joints(&shape);
        let up = self.model.up_axis().index();
        let k = &cams.intrinsics;

        // camera-frame root translation per frame, where it can be estimated
        let estimates: Vec<Option<Vector3<f64>>> = usable
            .iter()
            .map(|kp| {
                if kp.len() < 2 {
                    return None;
                }
                let (vmin, vmax) = kp
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, p)| (a.min(p.y), b.max(p.y)));
                let (hmin, hmax) = kp
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (j, _)| (a.min(rest[*j][up]), b.max(rest[*j][up])));
                let (bbox, model_h) = (vmax - vmin, hmax - hmin);
                if !(bbox >= 1.0) || !(model_h > 0.0) {
                    return None;
                }
                let z = heuristic_depth(k.fy, model_h, bbox);
                let n = kp.len() as f64;
                let centroid = kp.iter().map(|(_, p)| p).sum::<Vector2<f64>>() / n;
                let model_centroid = kp.iter().map(|(j, _)| posed[*j]).sum::<Vector3<f64>>() / n;
                let target = Vector3::new((centroid.x - k.cx) * z / k.fx, (centroid.y - k.cy) * z / k.fy, z);
                Some(target - model_centroid)
            })
            .collect();
        if estimates.iter().all(|e| e.is_none()) {
            return Err("fewer than two usable keypoints with vertical extent in every frame".into());
        }

        // frames without an estimate borrow the nearest estimated frame
        let nearest = |t: usize| -> usize {
            (0..estimates.len())
                .filter(|&i| estimates[i].is_some())
                .min_by_key(|&i| (i as isize - t as isize).unsigned_abs())
                .expect("at least one estimate")
        };
        let frames = track
            .frames
            .iter()
            .enumerate()
            .map(|(t, _)| {
                let src = nearest(t);
                let gamma_c = estimates[src].expect("nearest has an estimate");
                let pose = &cams.poses[track.frames[src].frame];
                let (phi, gamma) = init_world_from_camera(pose, self.config.camera_scale_init, &phi_c, &gamma_c);
                FrameState {
                    global_orient: phi,
                    body_pose: vec![Vector3::zeros(); nb],
                    translation: gamma,
                }
            })
            .collect();
        Ok(PersonState { frames, shape })
    }

    fn run_stage(
        &self,
        name: &str,
        weights: &StageWeights,
        free: FreeBlocks,
        states: &mut [PersonState],
        cams: &mut CameraTrack,
        tracks: &[KeypointTrack],
    ) -> Result<StageReport> {
        let problem = self.problem(tracks);
        problem.check(states, cams)?;
        let mut layout = FreeParameterLayout::new(free, states, self.model.body_joint_count());
        if self.config.stature_coupling {
            let h = |alpha| self.model.neutral_height(&ShapeParams::new([0.0; NUM_BETAS], alpha));
            let (adult, child) = (h(0.0), h(1.0));
            if adult > 0.0 && child > 0.0 {
                layout = layout.with_stature_coupling(child / adult);
            }
        }
        let x0 = layout.flatten(states, cams)?;

        let objective = |x: &[f64], s: &mut Vec<PersonState>, c: &mut CameraTrack| -> Result<(f64, Vec<f64>)> {
            layout.unflatten(x, s, c)?;
            let (terms, grad) = evaluate(&problem, s, c, weights, true)?;
            let g = layout.gather(s, c, &grad.expect("gradient requested"))?;
            Ok((terms.total, g))
        };

        let gradient_check = if self.config.gradient_check {
            let check = gradient_gate(&problem, &layout, weights, states, cams, &x0)?;
            if !(check.max_relative_error < GRADIENT_GATE_TOLERANCE) {
                return Err(Error::Numerical {
                    index: check.worst_index,
                    context: format!(
                        "{name}: gradient check failed at {} (relative error {:.3e})",
                        layout.describe(check.worst_index),
                        check.max_relative_error
                    ),
                });
            }
            Some(check.max_relative_error)
        } else {
            None
        };

        let mut work_states = states.to_vec();
        let mut work_cams = cams.clone();
        let result = lbfgs_minimize(
            |x| objective(x, &mut work_states, &mut work_cams),
            &x0,
            &self.config.lbfgs.options(weights.iterations),
        )?;
        layout.unflatten(&result.x, states, cams)?;
        debug_assert!(states.iter().all(|s| (0.0..=1.0).contains(&s.shape.alpha)));
        debug_assert!(cams.scale > 0.0);

        Ok(StageReport {
            name: name.to_string(),
            trace: result.trace,
            iterations: result.iterations,
            evaluations: result.evaluations,
            termination: result.termination,
            final_gradient_norm: result.gradient.iter().map(|g| g * g).sum::<f64>().sqrt(),
            gradient_check,
        })
    }

    /// Root orientation and translation only, data term only.
    pub fn stage1(
        &self,
        states: &mut [PersonState],
        cams: &mut CameraTrack,
        tracks: &[KeypointTrack],
    ) -> Result<StageReport> {
        let w = self.config.stage1;
        self.run_stage("stage1", &w, FreeBlocks::root_only(), states, cams, tracks)
    }

    /// All parameters free; the camera scale only when the camera moves.
    pub fn stage2(
        &self,
        states: &mut [PersonState],
        cams: &mut CameraTrack,
        tracks: &[KeypointTrack],
    ) -> Result<StageReport> {
        let w = self.config.stage2;
        let free = FreeBlocks::all(cams.scale_observable());
        self.run_stage("stage2", &w, free, states, cams, tracks)
    }

    fn with_alpha_init(&self, alpha: f64) -> Fitter<'a> {
        let mut config = self.config.clone();
        config.alpha_init = alpha;
        Fitter {
            model: self.model,
            joint_map: self.joint_map,
            config,
            encoder: self.encoder.clone(),
        }
    }

    /// Starting values of `α` tried by [`Fitter::fit`], `alpha_init` first.
    pub fn alpha_starts(&self) -> Vec<f64> {
        let mut starts = vec![self.config.alpha_init];
        if self.config.alpha_endpoint_search {
            for a in [1.0, 0.0] {
                if !starts.contains(&a) {
                    starts.push(a);
                }
            }
        }
        starts
    }

    /// Initialization followed by both stages.
    pub fn fit(
        &self,
        tracks: &[KeypointTrack],
        cams: &CameraTrack,
        hints: Option<&[TrackHints]>,
    ) -> Result<FitReport> {
        let starts = self.alpha_starts();
        let mut stages = Vec::new();
        let mut chosen: Option<(Initialization, Vec<PersonState>, Vec<f64>)> = None;
        let mut kept: Vec<KeypointTrack> = Vec::new();
        let mut cams = cams.clone();

        for &alpha in &starts {
            let fitter = self.with_alpha_init(alpha);
            let init = fitter.init_tracks(tracks, &cams, hints)?;
            if init.states.is_empty() {
                let reasons: Vec<String> = init.rejected.iter().map(|r| format!("track {}: {}", r.id, r.reason)).collect();
                return Err(Error::NoTracks(reasons.join("; ")));
            }
            if let Some((first, _, _)) = &chosen {
                if first.accepted != init.accepted {
                    // a start that keeps a different set of tracks is not comparable
                    continue;
                }
            } else {
                kept = init.accepted.iter().map(|&i| tracks[i].clone()).collect();
                cams.scale = init.camera_scale;
            }
            let mut states = init.states.clone();
            let mut stage = fitter.stage1(&mut states, &mut cams, &kept)?;
            if starts.len() > 1 {
                stage.name = format!("stage1 (alpha_init={alpha})");
            }
            stages.push(stage);
            let energies = (0..kept.len())
                .map(|i| {
                    let problem = self.problem(&kept[i..=i]);
                    Ok(evaluate(&problem, &states[i..=i], &cams, &self.config.stage1, false)?.0.total)
                })
                .collect::<Result<Vec<f64>>>()?;
            match &mut chosen {
                None => chosen = Some((init, states, energies)),
                Some((_, best, best_energy)) => {
                    for i in 0..kept.len() {
                        if energies[i] < best_energy[i] {
                            best[i] = states[i].clone();
                            best_energy[i] = energies[i];
                        }
                    }
                }
            }
        }
        let (init, mut states, _) = chosen.expect("at least one start");

        stages.push(self.stage2(&mut states, &mut cams, &kept)?);

        let residuals = reprojection_residuals(&self.problem(&kept), &states, &cams)?;
        let fitted = kept
            .iter()
            .zip(states)
            .zip(residuals)
            .map(|((t, state), frame_residuals)| FittedTrack {
                id: t.id,
                state,
                frame_residuals,
            })
            .collect();
        Ok(FitReport {
            tracks: fitted,
            camera_scale: cams.scale,
            stages,
            rejected: init.rejected,
        })
    }
}

/// Finite-difference check of the analytic gradient on a stage's layout.
pub fn gradient_gate(
    problem: &Problem<'_>,
    layout: &FreeParameterLayout,
    weights: &StageWeights,
    states: &[PersonState],
    cams: &CameraTrack,
    x: &[f64],
) -> Result<GradientCheck> {
    let mut s = states.to_vec();
    let mut c = cams.clone();
    layout.unflatten(x, &mut s, &mut c)?;
    let (_, grad) = evaluate(problem, &s, &c, weights, true)?;
    let analytic = layout.gather(&s, &c, &grad.expect("gradient requested"))?;
    finite_difference_check(
        |xp| {
            layout.unflatten(xp, &mut s, &mut c)?;
            Ok(evaluate(problem, &s, &c, weights, false)?.0.total)
        },
        x,
        &analytic,
        1e-5,
        1e-8,
    )
}
