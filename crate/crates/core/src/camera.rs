//! Pinhole projection and world/camera rigid transforms.
//!
//! Camera frames follow the usual computer-vision convention: x right, y down,
//! z forward. Camera poses map world points into the camera frame, with the
//! translation scaled by the track's camera scale.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::rotation::{axis_angle_to_rotation, rotation_to_axis_angle};

/// Points at or closer than this depth (meters) are treated as behind the
/// camera.
pub const MIN_DEPTH: f64 = 1e-6;

const ROTATION_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::Input(format!(
                "focal lengths must be positive and finite (fx={fx}, fy={fy})"
            )));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy })
    }

    /// The `2×3` matrix `[[fx, 0, cx], [0, fy, cy]]`.
    pub fn matrix(&self) -> Matrix2x3<f64> {
        Matrix2x3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy)
    }
}

/// World-to-camera rigid transform for one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(orth <= ROTATION_TOLERANCE) || !((det - 1.0).abs() <= ROTATION_TOLERANCE) {
            return Err(Error::Input(format!(
                "camera rotation is not proper (orthogonality error {orth:.2e}, det {det})"
            )));
        }
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::Input("non-finite camera translation".into()));
        }
        Ok(CameraPose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        CameraPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraTrack {
    pub poses: Vec<CameraPose>,
    pub intrinsics: CameraIntrinsics,
    /// Multiplies every camera translation (`α_c`).
    pub scale: f64,
}

impl CameraTrack {
    pub fn new(poses: Vec<CameraPose>, intrinsics: CameraIntrinsics, scale: f64) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::Input("camera track has no frames".into()));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Input(format!("camera scale must be positive, got {scale}")));
        }
        Ok(CameraTrack {
            poses,
            intrinsics,
            scale,
        })
    }

    /// Static identity cameras with unit scale, used when there is no camera
    /// trajectory (single images or fixed cameras).
    pub fn static_identity(intrinsics: CameraIntrinsics, frames: usize) -> Self {
        CameraTrack {
            poses: vec![CameraPose::identity(); frames.max(1)],
            intrinsics,
            scale: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Whether the camera scale has any effect: it needs a moving camera.
    pub fn scale_observable(&self) -> bool {
        self.poses.len() >= 2 && self.poses.iter().any(|p| p.translation != Vector3::zeros())
    }
}

/// `Π_K(p) = (fx·x/z + cx, fy·y/z + cy)`.
pub fn project(k: &CameraIntrinsics, p: &Vector3<f64>) -> Result<Vector2<f64>> {
    if !(p.z > MIN_DEPTH) {
        return Err(Error::BehindCamera { depth: p.z });
    }
    Ok(Vector2::new(
        k.fx * p.x / p.z + k.cx,
        k.fy * p.y / p.z + k.cy,
    ))
}

/// Projection together with its `2×3` Jacobian with respect to `p`.
pub fn project_with_jacobian(
    k: &CameraIntrinsics,
    p: &Vector3<f64>,
) -> Result<(Vector2<f64>, Matrix2x3<f64>)> {
    let uv = project(k, p)?;
    let iz = 1.0 / p.z;
    let jac = Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * p.x * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * p.y * iz * iz,
    );
    Ok((uv, jac))
}

/// `R·p_w + scale·T`.
pub fn world_point_to_camera(pose: &CameraPose, scale: f64, p_w: &Vector3<f64>) -> Vector3<f64> {
    pose.rotation * p_w + pose.translation * scale
}

/// Inverse of [`world_point_to_camera`]: `Rᵀ·(p_c − scale·T)`.
pub fn camera_point_to_world(pose: &CameraPose, scale: f64, p_c: &Vector3<f64>) -> Vector3<f64> {
    pose.rotation.transpose() * (p_c - pose.translation * scale)
}

/// Converts a camera-frame root orientation and translation into the world
/// frame: `Φ_w = log(Rᵀ·R(Φ_c))` and `Γ_w = Rᵀ·Γ_c − scale·Rᵀ·T`.
pub fn init_world_from_camera(
    pose: &CameraPose,
    scale: f64,
    phi_c: &Vector3<f64>,
    gamma_c: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let rt = pose.rotation.transpose();
    let phi_w = rotation_to_axis_angle(&(rt * axis_angle_to_rotation(phi_c)));
    let gamma_w = rt * gamma_c - rt * pose.translation * scale;
    (phi_w, gamma_w)
}
