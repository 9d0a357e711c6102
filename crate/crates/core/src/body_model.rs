//! Age-interpolated parametric body model.
//!
//! The rest mesh is `α·T_C + (1 − α)·T_A + Σ_k β_k·S_k` (plus optional pose
//! blendshapes). Rest joints are regressed from the shaped mesh without pose
//! correctives, posed along the kinematic tree and used to drive linear blend
//! skinning.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::rotation::{axis_angle_to_rotation, rotation_vjp};

/// Number of shape coefficients in the shape space (the interpolation weight
/// is carried separately).
pub const NUM_BETAS: usize = 10;

const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UpAxis {
    X,
    #[default]
    Y,
    Z,
}

impl UpAxis {
    pub fn index(self) -> usize {
        match self {
            UpAxis::X => 0,
            UpAxis::Y => 1,
            UpAxis::Z => 2,
        }
    }
}

/// Raw model arrays. Validate with [`BodyModel::new`] before use.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyModelData {
    /// One name per joint, root first.
    pub joint_names: Vec<String>,
    /// `parents[0]` must be `None`; every other joint names its parent.
    pub parents: Vec<Option<usize>>,
    pub adult_template: Vec<Vector3<f64>>,
    pub child_template: Vec<Vector3<f64>>,
    /// Row-major `V × 3 × NUM_BETAS`.
    pub shape_blendshapes: Vec<f64>,
    /// Row-major `V × 3 × 9·K_j`, where `K_j` excludes the root.
    pub pose_blendshapes: Option<Vec<f64>>,
    /// Row-major `(K_j + 1) × V`.
    pub joint_regressor: Vec<f64>,
    /// Row-major `V × (K_j + 1)`.
    pub skinning_weights: Vec<f64>,
    pub faces: Vec<[usize; 3]>,
    pub up_axis: UpAxis,
}

/// Shape coefficients plus the template interpolation weight
/// (0 = adult template, 1 = child template).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeParams {
    pub beta: [f64; NUM_BETAS],
    pub alpha: f64,
}

impl ShapeParams {
    /// Clamps `alpha` into `[0, 1]`.
    pub fn new(beta: [f64; NUM_BETAS], alpha: f64) -> Self {
        ShapeParams {
            beta,
            alpha: alpha.clamp(0.0, 1.0),
        }
    }

    pub fn adult() -> Self {
        Self::new([0.0; NUM_BETAS], 0.0)
    }

    pub fn child() -> Self {
        Self::new([0.0; NUM_BETAS], 1.0)
    }
}

/// Root orientation and per-joint rotations, all axis-angle.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseParams {
    pub global_orient: Vector3<f64>,
    pub body_pose: Vec<Vector3<f64>>,
}

impl PoseParams {
    pub fn zero(body_joints: usize) -> Self {
        PoseParams {
            global_orient: Vector3::zeros(),
            body_pose: vec![Vector3::zeros(); body_joints],
        }
    }
}

/// Posed vertices and joints in the body-local frame (before root
/// translation).
#[derive(Clone, Debug, PartialEq)]
pub struct MeshResult {
    pub vertices: Vec<Vector3<f64>>,
    pub joints: Vec<Vector3<f64>>,
}

/// Adds the root translation to every joint.
pub fn world_joints(mesh: &MeshResult, gamma: &Vector3<f64>) -> Vec<Vector3<f64>> {
    mesh.joints.iter().map(|j| j + gamma).collect()
}

/// Validated body model with precomputed joint regressions.
#[derive(Clone, Debug)]
pub struct BodyModel {
    data: BodyModelData,
    parents: Vec<usize>,
    /// Parents before children.
    order: Vec<usize>,
    adult_joints: Vec<Vector3<f64>>,
    /// `J_reg·(T_C − T_A)`.
    alpha_joint_dir: Vec<Vector3<f64>>,
    /// `J_reg·S_k` for each shape coefficient.
    shape_joint_dirs: Vec<[Vector3<f64>; NUM_BETAS]>,
}

impl BodyModel {
    pub fn new(data: BodyModelData) -> Result<Self> {
        let v = data.adult_template.len();
        let nj = data.parents.len();
        if v == 0 {
            return Err(Error::Model("empty template".into()));
        }
        if nj == 0 {
            return Err(Error::Model("no joints".into()));
        }
        if data.child_template.len() != v {
            return Err(Error::Model(format!(
                "child template has {} vertices, adult template has {v}",
                data.child_template.len()
            )));
        }
        if data.joint_names.len() != nj {
            return Err(Error::Model(format!(
                "{} joint names for {nj} joints",
                data.joint_names.len()
            )));
        }
        if data.shape_blendshapes.len() != v * 3 * NUM_BETAS {
            return Err(Error::Model(format!(
                "shape blendshapes: expected {} values, found {}",
                v * 3 * NUM_BETAS,
                data.shape_blendshapes.len()
            )));
        }
        if let Some(pb) = &data.pose_blendshapes {
            if pb.len() != v * 3 * 9 * (nj - 1) {
                return Err(Error::Model(format!(
                    "pose blendshapes: expected {} values, found {}",
                    v * 3 * 9 * (nj - 1),
                    pb.len()
                )));
            }
        }
        if data.joint_regressor.len() != nj * v {
            return Err(Error::Model("joint regressor shape mismatch".into()));
        }
        if data.skinning_weights.len() != v * nj {
            return Err(Error::Model("skinning weight shape mismatch".into()));
        }
        let all_finite = data
            .adult_template
            .iter()
            .chain(&data.child_template)
            .all(|p| p.iter().all(|x| x.is_finite()))
            && data.shape_blendshapes.iter().all(|x| x.is_finite())
            && data
                .pose_blendshapes
                .iter()
                .flatten()
                .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::Model("non-finite model array entry".into()));
        }
        for (j, row) in data.joint_regressor.chunks(v).enumerate() {
            if row.iter().any(|&w| !(w >= 0.0)) {
                return Err(Error::Model(format!("negative regressor weight for joint {j}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::Model(format!(
                    "regressor row {j} sums to {s}, expected 1"
                )));
            }
        }
        for (i, row) in data.skinning_weights.chunks(nj).enumerate() {
            if row.iter().any(|&w| !(w >= 0.0)) {
                return Err(Error::Model(format!("negative skinning weight at vertex {i}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::Model(format!(
                    "skinning weights of vertex {i} sum to {s}, expected 1"
                )));
            }
        }
        if let Some(f) = data.faces.iter().flatten().find(|&&i| i >= v) {
            return Err(Error::Model(format!("face index {f} out of range")));
        }

        let parents = tree_parents(&data.parents)?;
        let order = topological_order(&parents);

        let regress = |points: &dyn Fn(usize) -> Vector3<f64>| -> Vec<Vector3<f64>> {
            data.joint_regressor
                .chunks(v)
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, &w)| w != 0.0)
                        .fold(Vector3::zeros(), |acc, (i, &w)| acc + points(i) * w)
                })
                .collect()
        };
        let adult_joints = regress(&|i| data.adult_template[i]);
        let alpha_joint_dir = regress(&|i| data.child_template[i] - data.adult_template[i]);
        let mut shape_joint_dirs = vec![[Vector3::zeros(); NUM_BETAS]; nj];
        for k in 0..NUM_BETAS {
            let dir = regress(&|i| shape_direction(&data.shape_blendshapes, i, k));
            for (j, d) in dir.into_iter().enumerate() {
                shape_joint_dirs[j][k] = d;
            }
        }

        Ok(BodyModel {
            data,
            parents,
            order,
            adult_joints,
            alpha_joint_dir,
            shape_joint_dirs,
        })
    }

    pub fn data(&self) -> &BodyModelData {
        &self.data
    }

    pub fn vertex_count(&self) -> usize {
        self.data.adult_template.len()
    }

    /// Joints including the root.
    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    /// Articulated joints, i.e. the length of the body pose.
    pub fn body_joint_count(&self) -> usize {
        self.parents.len() - 1
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.data.faces
    }

    pub fn joint_names(&self) -> &[String] {
        &self.data.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.data.joint_names.iter().position(|n| n == name)
    }

    /// Parent of each joint; the root maps to itself.
    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    /// `α·T_C + (1 − α)·T_A`.
    pub fn interpolate_template(&self, alpha: f64) -> Result<Vec<Vector3<f64>>> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!(
                "interpolation weight {alpha} outside [0, 1]"
            )));
        }
        Ok(self.template_unchecked(alpha))
    }

    fn template_unchecked(&self, alpha: f64) -> Vec<Vector3<f64>> {
        // stored arrays verbatim at the endpoints
        if alpha == 0.0 {
            return self.data.adult_template.clone();
        }
        if alpha == 1.0 {
            return self.data.child_template.clone();
        }
        self.data
            .adult_template
            .iter()
            .zip(&self.data.child_template)
            .map(|(a, c)| c * alpha + a * (1.0 - alpha))
            .collect()
    }

    /// `Σ_k β_k·S[:, :, k]`.
    pub fn shape_offset(&self, beta: &[f64; NUM_BETAS]) -> Vec<Vector3<f64>> {
        self.data
            .shape_blendshapes
            .chunks(3 * NUM_BETAS)
            .map(|s| {
                Vector3::from_fn(|c, _| {
                    s[c * NUM_BETAS..(c + 1) * NUM_BETAS]
                        .iter()
                        .zip(beta)
                        .map(|(a, b)| a * b)
                        .sum()
                })
            })
            .collect()
    }

    /// Regressed rest joints for a shape (no pose correctives).
    pub fn rest_joints(&self, shape: &ShapeParams) -> Vec<Vector3<f64>> {
        (0..self.joint_count())
            .map(|j| {
                let mut p = self.adult_joints[j] + self.alpha_joint_dir[j] * shape.alpha;
                for (k, b) in shape.beta.iter().enumerate() {
                    p += self.shape_joint_dirs[j][k] * *b;
                }
                p
            })
            .collect()
    }

    fn check_pose(&self, pose: &PoseParams) -> Result<()> {
        if pose.body_pose.len() != self.body_joint_count() {
            return Err(Error::Model(format!(
                "body pose has {} joints, model has {}",
                pose.body_pose.len(),
                self.body_joint_count()
            )));
        }
        Ok(())
    }

    /// Forward kinematics of the joint tree only. Retains everything needed
    /// to back-propagate joint adjoints into the parameters.
    pub fn pose_joints(&self, shape: &ShapeParams, pose: &PoseParams) -> Result<PosedJoints> {
        self.check_pose(pose)?;
        let rest = self.rest_joints(shape);
        let nj = self.joint_count();
        let mut local = Vec::with_capacity(nj);
        local.push(axis_angle_to_rotation(&pose.global_orient));
        local.extend(pose.body_pose.iter().map(axis_angle_to_rotation));
        let mut global = vec![Matrix3::identity(); nj];
        let mut positions = vec![Vector3::zeros(); nj];
        for &j in &self.order {
            if j == 0 {
                global[0] = local[0];
                positions[0] = rest[0];
            } else {
                let p = self.parents[j];
                global[j] = global[p] * local[j];
                positions[j] = positions[p] + global[p] * (rest[j] - rest[p]);
            }
        }
        Ok(PosedJoints {
            rest,
            local,
            global,
            positions,
        })
    }

    /// Full mesh evaluation.
    pub fn forward(&self, shape: &ShapeParams, pose: &PoseParams) -> Result<MeshResult> {
        let chain = self.pose_joints(shape, pose)?;
        let template = self.template_unchecked(shape.alpha.clamp(0.0, 1.0));
        let offsets = self.shape_offset(&shape.beta);
        let mut rest_vertices: Vec<Vector3<f64>> =
            template.iter().zip(&offsets).map(|(t, o)| t + o).collect();

        if let Some(pb) = &self.data.pose_blendshapes {
            let features: Vec<f64> = chain.local[1..]
                .iter()
                .flat_map(|r| {
                    let d = r - Matrix3::identity();
                    // row-major flattening
                    (0..9).map(move |i| d[(i / 3, i % 3)])
                })
                .collect();
            let nf = features.len();
            for (v, rows) in rest_vertices.iter_mut().zip(pb.chunks(3 * nf)) {
                for c in 0..3 {
                    v[c] += rows[c * nf..(c + 1) * nf]
                        .iter()
                        .zip(&features)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                }
            }
        }

        let nj = self.joint_count();
        let skin: Vec<(Matrix3<f64>, Vector3<f64>)> = (0..nj)
            .map(|j| {
                let r = chain.global[j];
                (r, chain.positions[j] - r * chain.rest[j])
            })
            .collect();
        let vertices = rest_vertices
            .iter()
            .zip(self.data.skinning_weights.chunks(nj))
            .map(|(v, w)| {
                let mut out = Vector3::zeros();
                for (j, &wj) in w.iter().enumerate() {
                    if wj != 0.0 {
                        out += (skin[j].0 * v + skin[j].1) * wj;
                    }
                }
                out
            })
            .collect();

        Ok(MeshResult {
            vertices,
            joints: chain.positions,
        })
    }

    /// Extent along the up axis of the zero-pose mesh.
    pub fn neutral_height(&self, shape: &ShapeParams) -> f64 {
        let mesh = self
            .forward(shape, &PoseParams::zero(self.body_joint_count()))
            .expect("zero pose always matches the model");
        let axis = self.data.up_axis.index();
        let (lo, hi) = mesh
            .vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v[axis]), hi.max(v[axis]))
            });
        hi - lo
    }

    pub fn up_axis(&self) -> UpAxis {
        self.data.up_axis
    }
}

fn shape_direction(blend: &[f64], vertex: usize, k: usize) -> Vector3<f64> {
    let base = vertex * 3 * NUM_BETAS;
    Vector3::new(
        blend[base + k],
        blend[base + NUM_BETAS + k],
        blend[base + 2 * NUM_BETAS + k],
    )
}

fn tree_parents(parents: &[Option<usize>]) -> Result<Vec<usize>> {
    let n = parents.len();
    if parents[0].is_some() {
        return Err(Error::Model("joint 0 must be the root".into()));
    }
    let mut out = vec![0; n];
    for (j, p) in parents.iter().enumerate().skip(1) {
        match p {
            None => return Err(Error::Model(format!("joint {j} has no parent"))),
            Some(p) if *p >= n || *p == j => {
                return Err(Error::Model(format!("joint {j} has invalid parent {p}")))
            }
            Some(p) => out[j] = *p,
        }
    }
    // every joint must reach the root in fewer than n steps
    for j in 1..n {
        let mut cur = j;
        let mut steps = 0;
        while cur != 0 {
            cur = out[cur];
            steps += 1;
            if steps > n {
                return Err(Error::Model(format!("joint {j} is part of a cycle")));
            }
        }
    }
    Ok(out)
}

fn topological_order(parents: &[usize]) -> Vec<usize> {
    let n = parents.len();
    let mut children = vec![Vec::new(); n];
    for j in 1..n {
        children[parents[j]].push(j);
    }
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(j) = queue.pop_front() {
        order.push(j);
        queue.extend(children[j].iter().copied());
    }
    order
}

/// Joint-tree evaluation retained for reverse-mode differentiation.
#[derive(Clone, Debug)]
pub struct PosedJoints {
    pub rest: Vec<Vector3<f64>>,
    pub local: Vec<Matrix3<f64>>,
    pub global: Vec<Matrix3<f64>>,
    pub positions: Vec<Vector3<f64>>,
}

/// Parameter adjoints produced by [`PosedJoints::backprop`].
#[derive(Clone, Debug, PartialEq)]
pub struct JointGradient {
    pub global_orient: Vector3<f64>,
    pub body_pose: Vec<Vector3<f64>>,
    pub alpha: f64,
    pub beta: [f64; NUM_BETAS],
}

impl PosedJoints {
    /// Pulls an adjoint on the posed joint positions back onto the pose and
    /// shape parameters.
    pub fn backprop(
        &self,
        model: &BodyModel,
        pose: &PoseParams,
        adj_positions: &[Vector3<f64>],
    ) -> JointGradient {
        let nj = model.joint_count();
        let mut adj_p = adj_positions.to_vec();
        let mut adj_global = vec![Matrix3::zeros(); nj];
        let mut adj_rest = vec![Vector3::zeros(); nj];
        let mut adj_local = vec![Matrix3::zeros(); nj];

        for &j in model.order.iter().rev() {
            if j == 0 {
                adj_rest[0] += adj_p[0];
                adj_local[0] = adj_global[0];
                continue;
            }
            let p = model.parents[j];
            let bone = self.rest[j] - self.rest[p];
            let gp = self.global[p];
            let a = adj_p[j];
            adj_p[p] += a;
            adj_global[p] += a * bone.transpose();
            let rb = gp.transpose() * a;
            adj_rest[j] += rb;
            adj_rest[p] -= rb;
            let ag = adj_global[j];
            adj_global[p] += ag * self.local[j].transpose();
            adj_local[j] = gp.transpose() * ag;
        }

        let global_orient = rotation_vjp(&pose.global_orient, &adj_local[0]);
        let body_pose = pose
            .body_pose
            .iter()
            .zip(&adj_local[1..])
            .map(|(aa, adj)| rotation_vjp(aa, adj))
            .collect();
        let alpha = adj_rest
            .iter()
            .zip(&model.alpha_joint_dir)
            .map(|(a, d)| a.dot(d))
            .sum();
        let beta = std::array::from_fn(|k| {
            adj_rest
                .iter()
                .zip(&model.shape_joint_dirs)
                .map(|(a, d)| a.dot(&d[k]))
                .sum()
        });
        JointGradient {
            global_orient,
            body_pose,
            alpha,
            beta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy;
    use std::f64::consts::FRAC_PI_2;

    fn column_model(adult_h: f64, child_h: f64) -> BodyModel {
        // two vertices on the y axis, one joint
        let data = BodyModelData {
            joint_names: vec!["root".into()],
            parents: vec![None],
            adult_template: vec![Vector3::zeros(), Vector3::new(0.0, adult_h, 0.0)],
            child_template: vec![Vector3::zeros(), Vector3::new(0.0, child_h, 0.0)],
            shape_blendshapes: vec![0.0; 2 * 3 * NUM_BETAS],
            pose_blendshapes: None,
            joint_regressor: vec![0.5, 0.5],
            skinning_weights: vec![1.0, 1.0],
            faces: vec![],
            up_axis: UpAxis::Y,
        };
        BodyModel::new(data).unwrap()
    }

    #[test]
    fn template_endpoints_are_exact() {
        let m = toy::random_model(7, 30, 3, true);
        assert_eq!(m.interpolate_template(0.0).unwrap(), m.data().adult_template);
        assert_eq!(m.interpolate_template(1.0).unwrap(), m.data().child_template);
    }

    #[test]
    fn template_midpoint() {
        let m = column_model(1.7, 0.5);
        let t = m.interpolate_template(0.5).unwrap();
        assert!((t[1] - Vector3::new(0.0, 1.1, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn template_rejects_out_of_range_alpha() {
        let m = column_model(1.7, 0.5);
        assert!(matches!(m.interpolate_template(1.2), Err(Error::Domain(_))));
        assert!(matches!(m.interpolate_template(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn shape_offset_basis() {
        let m = toy::random_model(3, 20, 2, false);
        assert!(m
            .shape_offset(&[0.0; NUM_BETAS])
            .iter()
            .all(|v| *v == Vector3::zeros()));
        let mut e1 = [0.0; NUM_BETAS];
        e1[0] = 1.0;
        let off = m.shape_offset(&e1);
        for (i, o) in off.iter().enumerate() {
            assert_eq!(*o, shape_direction(&m.data().shape_blendshapes, i, 0));
        }
    }

    #[test]
    fn shape_offset_matches_loop() {
        let m = toy::random_model(11, 25, 3, false);
        let beta: [f64; NUM_BETAS] = std::array::from_fn(|k| (k as f64 * 0.37).sin());
        let off = m.shape_offset(&beta);
        let s = &m.data().shape_blendshapes;
        for v in 0..m.vertex_count() {
            for c in 0..3 {
                let mut acc = 0.0;
                for k in 0..NUM_BETAS {
                    acc += beta[k] * s[v * 3 * NUM_BETAS + c * NUM_BETAS + k];
                }
                assert!((off[v][c] - acc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_pose_reproduces_adult_template() {
        let m = toy::random_model(5, 40, 4, true);
        let mesh = m
            .forward(&ShapeParams::adult(), &PoseParams::zero(m.body_joint_count()))
            .unwrap();
        for (a, b) in mesh.vertices.iter().zip(&m.data().adult_template) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn child_joint_rotates_about_parent() {
        let m = toy::two_joint_chain();
        let mut pose = PoseParams::zero(1);
        pose.body_pose[0] = Vector3::new(0.0, 0.0, FRAC_PI_2);
        let mesh = m.forward(&ShapeParams::adult(), &pose).unwrap();
        // child joint sits at (1,0,0); its vertex at (2,0,0) swings to (1,1,0)
        assert!((mesh.vertices[2] - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
        // root-weighted vertex stays put
        assert!((mesh.vertices[0] - Vector3::zeros()).norm() < 1e-12);
        assert!((mesh.joints[1] - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn root_only_weights_give_rigid_motion() {
        let m = toy::rigid_model(9, 30, 3);
        let mut pose = PoseParams::zero(m.body_joint_count());
        pose.global_orient = Vector3::new(0.3, -0.8, 0.5);
        for (j, aa) in pose.body_pose.iter_mut().enumerate() {
            *aa = Vector3::new(0.1 * j as f64, 0.2, -0.3);
        }
        let shape = ShapeParams::new([0.1; NUM_BETAS], 0.4);
        let mesh = m.forward(&shape, &pose).unwrap();
        let rest: Vec<_> = m
            .forward(&shape, &PoseParams::zero(m.body_joint_count()))
            .unwrap()
            .vertices;
        let r = axis_angle_to_rotation(&pose.global_orient);
        let root = m.rest_joints(&shape)[0];
        for (p, q) in mesh.vertices.iter().zip(&rest) {
            assert!((p - (r * (q - root) + root)).norm() < 1e-10);
        }
    }

    #[test]
    fn world_joints_translate() {
        let mesh = MeshResult {
            vertices: vec![],
            joints: vec![Vector3::new(1.0, 2.0, 3.0), Vector3::zeros()],
        };
        assert_eq!(world_joints(&mesh, &Vector3::zeros()), mesh.joints);
        let w = world_joints(&mesh, &Vector3::new(0.0, 0.0, 2.0));
        assert_eq!(w[0], Vector3::new(1.0, 2.0, 5.0));
        assert_eq!(w[1], Vector3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn neutral_height_examples() {
        let m = column_model(1.7, 0.5);
        assert!((m.neutral_height(&ShapeParams::adult()) - 1.7).abs() < 1e-15);
        assert!((m.neutral_height(&ShapeParams::child()) - 0.5).abs() < 1e-15);
        let mid = ShapeParams::new([0.0; NUM_BETAS], 0.5);
        assert!((m.neutral_height(&mid) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn neutral_height_decreases_with_alpha() {
        let m = toy::humanoid();
        let heights: Vec<f64> = (0..=10)
            .map(|i| m.neutral_height(&ShapeParams::new([0.0; NUM_BETAS], i as f64 / 10.0)))
            .collect();
        assert!(heights.windows(2).all(|w| w[1] < w[0]), "{heights:?}");
    }

    #[test]
    fn rejects_bad_trees() {
        let mut data = toy::two_joint_chain().data().clone();
        data.parents = vec![None, Some(1)];
        assert!(matches!(BodyModel::new(data.clone()), Err(Error::Model(_))));
        data.parents = vec![Some(1), Some(0)];
        assert!(matches!(BodyModel::new(data), Err(Error::Model(_))));
    }

    #[test]
    fn rejects_unnormalized_weights() {
        let mut data = toy::two_joint_chain().data().clone();
        data.skinning_weights[0] = 0.7;
        assert!(matches!(BodyModel::new(data.clone()), Err(Error::Model(_))));
        let mut data = toy::two_joint_chain().data().clone();
        data.joint_regressor[0] = 0.9;
        assert!(matches!(BodyModel::new(data), Err(Error::Model(_))));
    }

    #[test]
    fn rejects_wrong_pose_length() {
        let m = toy::two_joint_chain();
        assert!(m.forward(&ShapeParams::adult(), &PoseParams::zero(3)).is_err());
    }

    #[test]
    fn pose_blendshapes_vanish_at_identity() {
        let m = toy::random_model(21, 30, 3, true);
        let shape = ShapeParams::new([0.2; NUM_BETAS], 0.3);
        let with = m.forward(&shape, &PoseParams::zero(3)).unwrap();
        let mut data = m.data().clone();
        data.pose_blendshapes = None;
        let without = BodyModel::new(data)
            .unwrap()
            .forward(&shape, &PoseParams::zero(3))
            .unwrap();
        assert_eq!(with.vertices, without.vertices);
    }

    #[test]
    fn joint_backprop_matches_finite_differences() {
        let m = toy::random_model(4, 30, 4, false);
        let shape = ShapeParams::new(std::array::from_fn(|k| 0.1 * k as f64 - 0.3), 0.35);
        let pose = PoseParams {
            global_orient: Vector3::new(0.2, -0.4, 0.9),
            body_pose: (0..4)
                .map(|j| Vector3::new(0.3, -0.1 * j as f64, 0.25))
                .collect(),
        };
        let weights: Vec<Vector3<f64>> = (0..5)
            .map(|j| Vector3::new(1.0, -0.5 * j as f64, 0.3))
            .collect();
        let f = |shape: &ShapeParams, pose: &PoseParams| -> f64 {
            m.pose_joints(shape, pose)
                .unwrap()
                .positions
                .iter()
                .zip(&weights)
                .map(|(p, w)| p.dot(w))
                .sum()
        };
        let grad = m.pose_joints(&shape, &pose).unwrap().backprop(&m, &pose, &weights);
        let h = 1e-6;
        for i in 0..3 {
            let mut a = pose.clone();
            let mut b = pose.clone();
            a.global_orient[i] += h;
            b.global_orient[i] -= h;
            let fd = (f(&shape, &a) - f(&shape, &b)) / (2.0 * h);
            assert!((fd - grad.global_orient[i]).abs() < 1e-7);
        }
        for j in 0..4 {
            for i in 0..3 {
                let mut a = pose.clone();
                let mut b = pose.clone();
                a.body_pose[j][i] += h;
                b.body_pose[j][i] -= h;
                let fd = (f(&shape, &a) - f(&shape, &b)) / (2.0 * h);
                assert!((fd - grad.body_pose[j][i]).abs() < 1e-7);
            }
        }
        let mut a = shape;
        let mut b = shape;
        a.alpha += h;
        b.alpha -= h;
        assert!(((f(&a, &pose) - f(&b, &pose)) / (2.0 * h) - grad.alpha).abs() < 1e-7);
        for k in 0..NUM_BETAS {
            let mut a = shape;
            let mut b = shape;
            a.beta[k] += h;
            b.beta[k] -= h;
            let fd = (f(&a, &pose) - f(&b, &pose)) / (2.0 * h);
            assert!((fd - grad.beta[k]).abs() < 1e-7);
        }
    }
}
