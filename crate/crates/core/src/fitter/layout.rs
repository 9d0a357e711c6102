//! Flattening of person states and the camera scale into the optimizer's
//! parameter vector.
//!
//! Order: for each track, for each frame `[Φ, Γ, Θ]`, then the track's
//! `[β, a]`; the camera scale slot comes last. Only blocks marked free are
//! present. The interpolation weight is stored as `a = logit(α)` and the
//! camera scale as `log α_c`, which keeps `α ∈ [0, 1]` and `α_c > 0` for any
//! parameter vector.
//!
//! With stature coupling enabled (and both `α` and `Γ` free), translations
//! are stored divided by the relative stature `s(α) = 1 + α(κ − 1)`, where
//! `κ` is the child-to-adult height ratio. Moving `a` alone then rescales a
//! person about the world origin, which leaves the image nearly unchanged;
//! without it, every change of `α` is also a change of apparent size.

use crate::body_model::NUM_BETAS;
use crate::camera::CameraTrack;
use crate::error::{Error, Result};
use crate::objective::StateGradient;

use super::PersonState;

/// `α` is kept this far inside `(0, 1)` when mapped to the logit scale so the
/// sigmoid never starts fully saturated.
pub const ALPHA_MARGIN: f64 = 1e-3;

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

pub fn logit(alpha: f64) -> f64 {
    let p = alpha.clamp(ALPHA_MARGIN, 1.0 - ALPHA_MARGIN);
    (p / (1.0 - p)).ln()
}

/// Which parameter blocks are optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct FreeBlocks {
    pub global_orient: bool,
    pub translation: bool,
    pub body_pose: bool,
    pub beta: bool,
    pub alpha: bool,
    pub camera_scale: bool,
}

impl FreeBlocks {
    /// Root orientation and translation only.
    pub fn root_only() -> Self {
        FreeBlocks {
            global_orient: true,
            translation: true,
            ..Default::default()
        }
    }

    pub fn all(camera_scale: bool) -> Self {
        FreeBlocks {
            global_orient: true,
            translation: true,
            body_pose: true,
            beta: true,
            alpha: true,
            camera_scale,
        }
    }
}

/// Parameter block kinds, in the order they appear within a track.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamBlock {
    GlobalOrient,
    Translation,
    BodyPose,
    Beta,
    Alpha,
    CameraScale,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeParameterLayout {
    pub free: FreeBlocks,
    frames_per_track: Vec<usize>,
    body_joints: usize,
    stature_ratio: Option<f64>,
}

impl FreeParameterLayout {
    pub fn new(free: FreeBlocks, states: &[PersonState], body_joints: usize) -> Self {
        FreeParameterLayout {
            free,
            frames_per_track: states.iter().map(|s| s.frames.len()).collect(),
            body_joints,
            stature_ratio: None,
        }
    }

    /// Enables stature coupling with child-to-adult height ratio `kappa`.
    pub fn with_stature_coupling(mut self, kappa: f64) -> Self {
        assert!(kappa > 0.0, "height ratio must be positive");
        self.stature_ratio = Some(kappa);
        self
    }

    fn coupling(&self) -> Option<f64> {
        self.stature_ratio.filter(|_| self.free.alpha && self.free.translation)
    }

    fn stature(&self, alpha: f64) -> f64 {
        self.coupling().map_or(1.0, |k| 1.0 + alpha * (k - 1.0))
    }

    fn encode_alpha(&self, alpha: f64) -> f64 {
        logit(alpha)
    }

    fn decode_alpha(&self, a: f64) -> f64 {
        sigmoid(a)
    }

    fn per_frame(&self) -> usize {
        3 * (self.free.global_orient as usize + self.free.translation as usize)
            + if self.free.body_pose { 3 * self.body_joints } else { 0 }
    }

    fn per_track(&self) -> usize {
        (if self.free.beta { NUM_BETAS } else { 0 }) + self.free.alpha as usize
    }

    pub fn len(&self) -> usize {
        self.frames_per_track
            .iter()
            .map(|n| n * self.per_frame() + self.per_track())
            .sum::<usize>()
            + self.free.camera_scale as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, states: &[PersonState]) -> Result<()> {
        let shape_ok = states.len() == self.frames_per_track.len()
            && states
                .iter()
                .zip(&self.frames_per_track)
                .all(|(s, n)| s.frames.len() == *n && s.frames.iter().all(|f| f.body_pose.len() == self.body_joints));
        if shape_ok {
            Ok(())
        } else {
            Err(Error::Input("person states do not match the parameter layout".into()))
        }
    }

    pub fn flatten(&self, states: &[PersonState], cams: &CameraTrack) -> Result<Vec<f64>> {
        self.check(states)?;
        let mut x = Vec::with_capacity(self.len());
        for s in states {
            // the stature divisor uses the α that unflatten will reproduce
            let st = self.stature(self.decode_alpha(self.encode_alpha(s.shape.alpha)));
            for f in &s.frames {
                if self.free.global_orient {
                    x.extend(f.global_orient.iter());
                }
                if self.free.translation {
                    x.extend((f.translation / st).iter());
                }
                if self.free.body_pose {
                    x.extend(f.body_pose.iter().flat_map(|v| v.iter()));
                }
            }
            if self.free.beta {
                x.extend(s.shape.beta);
            }
            if self.free.alpha {
                x.push(self.encode_alpha(s.shape.alpha));
            }
        }
        if self.free.camera_scale {
            x.push(cams.scale.ln());
        }
        Ok(x)
    }

    /// Writes the free entries of `x` back; frozen parameters are untouched.
    pub fn unflatten(&self, x: &[f64], states: &mut [PersonState], cams: &mut CameraTrack) -> Result<()> {
        self.check(states)?;
        if x.len() != self.len() {
            return Err(Error::Input(format!(
                "parameter vector has {} entries, layout expects {}",
                x.len(),
                self.len()
            )));
        }
        let mut it = x.iter().copied();
        let next3 = |it: &mut dyn Iterator<Item = f64>| {
            nalgebra::Vector3::new(it.next().unwrap(), it.next().unwrap(), it.next().unwrap())
        };
        let mut start = 0;
        for s in states.iter_mut() {
            let block = s.frames.len() * self.per_frame() + self.per_track();
            // α sits at the end of the track block but scales its translations
            let alpha = self.free.alpha.then(|| self.decode_alpha(x[start + block - 1]));
            let st = alpha.map_or(1.0, |a| self.stature(a));
            start += block;
            for f in &mut s.frames {
                if self.free.global_orient {
                    f.global_orient = next3(&mut it);
                }
                if self.free.translation {
                    f.translation = next3(&mut it) * st;
                }
                if self.free.body_pose {
                    for v in &mut f.body_pose {
                        *v = next3(&mut it);
                    }
                }
            }
            if self.free.beta {
                for b in &mut s.shape.beta {
                    *b = it.next().unwrap();
                }
            }
            if let Some(a) = alpha {
                it.next();
                s.shape.alpha = a;
            }
        }
        if self.free.camera_scale {
            cams.scale = it.next().unwrap().exp();
        }
        Ok(())
    }

    /// Gathers the free components of a natural-parameter gradient, applying
    /// the chain rule for the reparameterized entries.
    pub fn gather(&self, states: &[PersonState], cams: &CameraTrack, grad: &StateGradient) -> Result<Vec<f64>> {
        self.check(states)?;
        let mut g = Vec::with_capacity(self.len());
        for (s, tg) in states.iter().zip(&grad.tracks) {
            let st = self.stature(s.shape.alpha);
            for f in &tg.frames {
                if self.free.global_orient {
                    g.extend(f.global_orient.iter());
                }
                if self.free.translation {
                    g.extend((f.translation * st).iter());
                }
                if self.free.body_pose {
                    g.extend(f.body_pose.iter().flat_map(|v| v.iter()));
                }
            }
            if self.free.beta {
                g.extend(tg.beta);
            }
            if self.free.alpha {
                let a = s.shape.alpha;
                // translations depend on α through the stature factor
                let through_translation = self.coupling().map_or(0.0, |k| {
                    (k - 1.0) / st
                        * s.frames
                            .iter()
                            .zip(&tg.frames)
                            .map(|(f, gf)| gf.translation.dot(&f.translation))
                            .sum::<f64>()
                });
                g.push((tg.alpha + through_translation) * a * (1.0 - a));
            }
        }
        if self.free.camera_scale {
            g.push(grad.camera_scale * cams.scale);
        }
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                index,
                context: self.describe(index),
            });
        }
        Ok(g)
    }

    /// The block each flat index belongs to.
    pub fn kinds(&self) -> Vec<ParamBlock> {
        let mut k = Vec::with_capacity(self.len());
        for &frames in &self.frames_per_track {
            for _ in 0..frames {
                if self.free.global_orient {
                    k.extend([ParamBlock::GlobalOrient; 3]);
                }
                if self.free.translation {
                    k.extend([ParamBlock::Translation; 3]);
                }
                if self.free.body_pose {
                    k.extend(std::iter::repeat_n(ParamBlock::BodyPose, 3 * self.body_joints));
                }
            }
            if self.free.beta {
                k.extend([ParamBlock::Beta; NUM_BETAS]);
            }
            if self.free.alpha {
                k.push(ParamBlock::Alpha);
            }
        }
        if self.free.camera_scale {
            k.push(ParamBlock::CameraScale);
        }
        k
    }

    /// Human-readable name of a flat index.
    pub fn describe(&self, mut index: usize) -> String {
        let pf = self.per_frame();
        for (track, &frames) in self.frames_per_track.iter().enumerate() {
            let block = frames * pf;
            if index < block {
                let (frame, mut within) = (index / pf, index % pf);
                for (on, name, n) in [
                    (self.free.global_orient, "global_orient", 3),
                    (self.free.translation, "translation", 3),
                    (self.free.body_pose, "body_pose", 3 * self.body_joints),
                ] {
                    if on {
                        if within < n {
                            return format!("track {track} frame {frame} {name}[{within}]");
                        }
                        within -= n;
                    }
                }
            }
            index -= block;
            let pt = self.per_track();
            if index < pt {
                return if self.free.beta && index < NUM_BETAS {
                    format!("track {track} beta[{index}]")
                } else {
                    format!("track {track} alpha")
                };
            }
            index -= pt;
        }
        "camera scale".into()
    }
}
