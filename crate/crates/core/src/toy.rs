//! Synthetic body models.
//!
//! Licensed body-model assets cannot ship with the crate, so tests, examples
//! and the CLI's `toy-model` command use these procedurally built models. The
//! [`humanoid`] has distinct adult and child proportions (the child has a
//! larger head and shorter limbs relative to stature), which is what makes the
//! interpolation weight observable from 2D keypoints.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::body_model::{BodyModel, BodyModelData, UpAxis, NUM_BETAS};
use crate::error::Result;
use crate::objective::JointMap;

/// Two joints on the x axis: root at the origin, child at `(1, 0, 0)`.
/// Vertices: `(0,0,0)` on the root, `(1,0,0)` and `(2,0,0)` on the child.
pub fn two_joint_chain() -> BodyModel {
    let verts = vec![
        Vector3::zeros(),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(2.0, 0.0, 0.0),
    ];
    let data = BodyModelData {
        joint_names: vec!["root".into(), "tip".into()],
        parents: vec![None, Some(0)],
        adult_template: verts.clone(),
        child_template: verts.iter().map(|v| v * 0.5).collect(),
        shape_blendshapes: vec![0.0; 3 * 3 * NUM_BETAS],
        pose_blendshapes: None,
        joint_regressor: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        skinning_weights: vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        faces: vec![[0, 1, 2]],
        up_axis: UpAxis::Y,
    };
    BodyModel::new(data).expect("valid toy model")
}

/// Random small model with a random tree over `body_joints + 1` joints.
pub fn random_model(seed: u64, vertices: usize, body_joints: usize, pose_blend: bool) -> BodyModel {
    BodyModel::new(random_data(seed, vertices, body_joints, pose_blend)).expect("valid toy model")
}

/// Random model whose skinning weights all sit on the root joint.
pub fn rigid_model(seed: u64, vertices: usize, body_joints: usize) -> BodyModel {
    let mut data = random_data(seed, vertices, body_joints, false);
    let nj = body_joints + 1;
    data.skinning_weights = (0..vertices * nj)
        .map(|i| if i % nj == 0 { 1.0 } else { 0.0 })
        .collect();
    BodyModel::new(data).expect("valid toy model")
}

fn random_data(seed: u64, vertices: usize, body_joints: usize, pose_blend: bool) -> BodyModelData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nj = body_joints + 1;
    let mut parents = vec![None];
    parents.extend((1..nj).map(|j| Some(rng.random_range(0..j))));

    let adult: Vec<Vector3<f64>> = (0..vertices)
        .map(|_| {
            Vector3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(0.0..1.7),
                rng.random_range(-0.2..0.2),
            )
        })
        .collect();
    let child: Vec<Vector3<f64>> = adult
        .iter()
        .map(|p| {
            p * 0.55 + Vector3::new(
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
            )
        })
        .collect();
    let shape_blendshapes = (0..vertices * 3 * NUM_BETAS)
        .map(|_| rng.random_range(-0.05..0.05))
        .collect();
    let pose_blendshapes = pose_blend.then(|| {
        (0..vertices * 3 * 9 * body_joints)
            .map(|_| rng.random_range(-0.01..0.01))
            .collect()
    });

    let mut joint_regressor = vec![0.0; nj * vertices];
    for row in joint_regressor.chunks_mut(vertices) {
        let picks = rng.random_range(1..=vertices.min(4));
        for _ in 0..picks {
            row[rng.random_range(0..vertices)] += rng.random_range(0.1..1.0);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= s);
    }
    let mut skinning_weights = vec![0.0; vertices * nj];
    for row in skinning_weights.chunks_mut(nj) {
        let main = rng.random_range(0..nj);
        row[main] = 1.0;
        if rng.random_bool(0.5) {
            let other = rng.random_range(0..nj);
            row[other] += rng.random_range(0.0..1.0);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= s);
    }
    let faces = (0..vertices / 3)
        .map(|f| [3 * f, 3 * f + 1, 3 * f + 2])
        .collect();

    BodyModelData {
        joint_names: (0..nj).map(|j| format!("joint{j}")).collect(),
        parents,
        adult_template: adult,
        child_template: child,
        shape_blendshapes,
        pose_blendshapes,
        joint_regressor,
        skinning_weights,
        faces,
        up_axis: UpAxis::Y,
    }
}

struct JointSpec {
    name: &'static str,
    parent: Option<usize>,
    adult: [f64; 3],
    adult_radius: f64,
    child: [f64; 3],
    child_radius: f64,
}

const fn joint(
    name: &'static str,
    parent: Option<usize>,
    adult: [f64; 3],
    adult_radius: f64,
    child: [f64; 3],
    child_radius: f64,
) -> JointSpec {
    JointSpec {
        name,
        parent,
        adult,
        adult_radius,
        child,
        child_radius,
    }
}

/// Sixteen-joint stick humanoid, y-up, facing +z, feet on `y = 0`.
/// Adult stature 1.70 m, child stature 1.00 m. The child has toddler
/// proportions (large head, short legs and arms), so the two templates are
/// not scaled copies of each other.
#[rustfmt::skip]
const HUMANOID: [JointSpec; 16] = [
    joint("pelvis",         None,     [0.0, 0.95, 0.0],     0.12,  [0.0, 0.42, 0.0],     0.08),
    joint("left_hip",       Some(0),  [0.09, 0.90, 0.0],    0.08,  [0.06, 0.40, 0.0],    0.05),
    joint("left_knee",      Some(1),  [0.10, 0.50, 0.01],   0.06,  [0.065, 0.23, 0.01],  0.04),
    joint("left_ankle",     Some(2),  [0.10, 0.08, -0.02],  0.08,  [0.065, 0.05, -0.01], 0.05),
    joint("right_hip",      Some(0),  [-0.09, 0.90, 0.0],   0.08,  [-0.06, 0.40, 0.0],   0.05),
    joint("right_knee",     Some(4),  [-0.10, 0.50, 0.01],  0.06,  [-0.065, 0.23, 0.01], 0.04),
    joint("right_ankle",    Some(5),  [-0.10, 0.08, -0.02], 0.08,  [-0.065, 0.05, -0.01],0.05),
    joint("spine",          Some(0),  [0.0, 1.20, -0.01],   0.13,  [0.0, 0.56, -0.01],   0.08),
    joint("neck",           Some(7),  [0.0, 1.45, -0.01],   0.06,  [0.0, 0.70, -0.01],   0.045),
    joint("head",           Some(8),  [0.0, 1.60, 0.02],    0.10,  [0.0, 0.84, 0.02],    0.16),
    joint("left_shoulder",  Some(8),  [0.18, 1.42, -0.01],  0.06,  [0.11, 0.68, -0.01],  0.04),
    joint("left_elbow",     Some(10), [0.30, 1.16, -0.02],  0.05,  [0.15, 0.55, -0.02],  0.035),
    joint("left_wrist",     Some(11), [0.36, 0.92, 0.02],   0.045, [0.17, 0.43, 0.02],   0.03),
    joint("right_shoulder", Some(8),  [-0.18, 1.42, -0.01], 0.06,  [-0.11, 0.68, -0.01], 0.04),
    joint("right_elbow",    Some(13), [-0.30, 1.16, -0.02], 0.05,  [-0.15, 0.55, -0.02], 0.035),
    joint("right_wrist",    Some(14), [-0.36, 0.92, 0.02],  0.045, [-0.17, 0.43, 0.02],  0.03),
];

/// Pairs of (humanoid joint, COCO-17 keypoint) used by the synthetic
/// generator and the CLI defaults.
pub const HUMANOID_COCO_MAP: [(&str, &str); 13] = [
    ("head", "nose"),
    ("left_shoulder", "left_shoulder"),
    ("right_shoulder", "right_shoulder"),
    ("left_elbow", "left_elbow"),
    ("right_elbow", "right_elbow"),
    ("left_wrist", "left_wrist"),
    ("right_wrist", "right_wrist"),
    ("left_hip", "left_hip"),
    ("right_hip", "right_hip"),
    ("left_knee", "left_knee"),
    ("right_knee", "right_knee"),
    ("left_ankle", "left_ankle"),
    ("right_ankle", "right_ankle"),
];

/// [`HUMANOID_COCO_MAP`] resolved against `model` (normally [`humanoid`]).
pub fn humanoid_coco_joint_map(model: &BodyModel) -> Result<JointMap> {
    JointMap::from_names(model, crate::dataio::COCO17.keypoints, &HUMANOID_COCO_MAP)
}

const OCTAHEDRON_FACES: [[usize; 3]; 8] = [
    [0, 2, 4],
    [2, 1, 4],
    [1, 3, 4],
    [3, 0, 4],
    [2, 0, 5],
    [1, 2, 5],
    [3, 1, 5],
    [0, 3, 5],
];

fn octahedron(center: Vector3<f64>, r: f64) -> [Vector3<f64>; 6] {
    [
        center + Vector3::new(r, 0.0, 0.0),
        center - Vector3::new(r, 0.0, 0.0),
        center + Vector3::new(0.0, r, 0.0),
        center - Vector3::new(0.0, r, 0.0),
        center + Vector3::new(0.0, 0.0, r),
        center - Vector3::new(0.0, 0.0, r),
    ]
}

fn ring(from: Vector3<f64>, to: Vector3<f64>, r: f64) -> [Vector3<f64>; 4] {
    let mid = (from + to) * 0.5;
    let d = (to - from).normalize();
    let helper = if d.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = d.cross(&helper).normalize();
    let w = d.cross(&u);
    [mid + u * r, mid + w * r, mid - u * r, mid - w * r]
}

/// Per-joint displacement of each shape direction, evaluated on the adult
/// joint layout. Direction 0 is stature; the rest change widths and depths
/// only, so no combination of them reproduces child proportions.
fn shape_joint_displacement(k: usize, spec: &JointSpec) -> Vector3<f64> {
    let [x, y, _] = spec.adult;
    let side = x.signum();
    let n = spec.name;
    let arm = n.contains("shoulder") || n.contains("elbow") || n.contains("wrist");
    let leg = n.contains("hip") || n.contains("knee") || n.contains("ankle");
    let upper = y > 1.0;
    match k {
        0 => Vector3::new(0.0, 0.1 * y, 0.0),
        1 if arm => Vector3::new(0.03 * side, 0.0, 0.0),
        2 if leg => Vector3::new(0.02 * side, 0.0, 0.0),
        3 if upper && !arm => Vector3::new(0.0, 0.0, 0.02),
        4 if arm => Vector3::new(0.0, 0.0, 0.02),
        5 if n.contains("knee") => Vector3::new(0.015 * side, 0.0, 0.0),
        8 if n == "head" || n == "neck" => Vector3::new(0.0, 0.0, 0.02),
        9 if upper => Vector3::new(0.0, 0.0, 0.03 * (y - 0.95)),
        _ => Vector3::zeros(),
    }
}

/// Per-vertex displacement that moves vertices relative to their owning
/// joint (no effect on regressed joints).
fn shape_local_displacement(k: usize, joint_name: &str, offset: Vector3<f64>) -> Vector3<f64> {
    match k {
        6 if joint_name == "head" => offset * 0.2,
        7 => Vector3::new(offset.x * 0.2, 0.0, offset.z * 0.2),
        _ => Vector3::zeros(),
    }
}

/// Procedural 16-joint humanoid with 156 vertices.
pub fn humanoid() -> BodyModel {
    let nj = HUMANOID.len();
    let v3 = |a: [f64; 3]| Vector3::new(a[0], a[1], a[2]);

    let mut adult = Vec::new();
    let mut child = Vec::new();
    let mut owner = Vec::new(); // skinning joint per vertex
    let mut shape_rows: Vec<[Vector3<f64>; NUM_BETAS]> = Vec::new();
    let mut faces = Vec::new();

    for (j, spec) in HUMANOID.iter().enumerate() {
        let base = adult.len();
        let a = octahedron(v3(spec.adult), spec.adult_radius);
        adult.extend(a);
        child.extend(octahedron(v3(spec.child), spec.child_radius));
        for va in a {
            owner.push(j);
            shape_rows.push(std::array::from_fn(|k| {
                shape_joint_displacement(k, spec)
                    + shape_local_displacement(k, spec.name, va - v3(spec.adult))
            }));
        }
        faces.extend(OCTAHEDRON_FACES.iter().map(|f| f.map(|i| base + i)));
    }
    for (_, spec) in HUMANOID.iter().enumerate().skip(1) {
        let p = spec.parent.expect("non-root joint");
        let parent = &HUMANOID[p];
        let base = adult.len();
        let ra = 0.4 * (parent.adult_radius + spec.adult_radius);
        let rc = 0.4 * (parent.child_radius + spec.child_radius);
        let a = ring(v3(parent.adult), v3(spec.adult), ra);
        adult.extend(a);
        child.extend(ring(v3(parent.child), v3(spec.child), rc));
        let mid = (v3(parent.adult) + v3(spec.adult)) * 0.5;
        for va in a {
            owner.push(p);
            shape_rows.push(std::array::from_fn(|k| {
                (shape_joint_displacement(k, parent) + shape_joint_displacement(k, spec)) * 0.5
                    + shape_local_displacement(k, "", va - mid)
            }));
        }
        faces.push([base, base + 1, base + 2]);
        faces.push([base, base + 2, base + 3]);
    }

    let v = adult.len();
    let mut shape_blendshapes = vec![0.0; v * 3 * NUM_BETAS];
    for (i, row) in shape_rows.iter().enumerate() {
        for (k, d) in row.iter().enumerate() {
            for c in 0..3 {
                shape_blendshapes[i * 3 * NUM_BETAS + c * NUM_BETAS + k] = d[c];
            }
        }
    }
    let mut joint_regressor = vec![0.0; nj * v];
    for j in 0..nj {
        for i in 0..6 {
            joint_regressor[j * v + 6 * j + i] = 1.0 / 6.0;
        }
    }
    let mut skinning_weights = vec![0.0; v * nj];
    for (i, &j) in owner.iter().enumerate() {
        skinning_weights[i * nj + j] = 1.0;
    }

    let data = BodyModelData {
        joint_names: HUMANOID.iter().map(|s| s.name.to_string()).collect(),
        parents: HUMANOID.iter().map(|s| s.parent).collect(),
        adult_template: adult,
        child_template: child,
        shape_blendshapes,
        pose_blendshapes: None,
        joint_regressor,
        skinning_weights,
        faces,
        up_axis: UpAxis::Y,
    };
    BodyModel::new(data).expect("valid humanoid")
}
