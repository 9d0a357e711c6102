//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use aionfit::body_model::{BodyModel, BodyModelData, ShapeParams, NUM_BETAS};
use aionfit::camera::{project, world_point_to_camera, CameraIntrinsics, CameraPose, CameraTrack};
use aionfit::fitter::{FrameState, PersonState};
use aionfit::objective::{JointMap, KeypointFrame, KeypointTrack, TrackFrame};
use aionfit::rotation::axis_angle_to_rotation;
use aionfit::toy;
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type M4 = [[f64; 4]; 4];

fn rodrigues(w: [f64; 3]) -> [[f64; 3]; 3] {
    let t = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    if t == 0.0 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let k = [w[0] / t, w[1] / t, w[2] / t];
    let (s, c) = t.sin_cos();
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (1.0 - c) * k[i] * k[j];
        }
        r[i][i] += c;
    }
    r[0][1] -= s * k[2];
    r[0][2] += s * k[1];
    r[1][0] += s * k[2];
    r[1][2] -= s * k[0];
    r[2][0] -= s * k[1];
    r[2][1] += s * k[0];
    r
}

fn mul4(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Textbook evaluation with explicit loops and 4×4 homogeneous transforms:
/// template interpolation, shape and pose blendshapes, joint regression on
/// the shaped rest mesh, forward kinematics down the tree, and linear blend
/// skinning. Returns (vertices, joints).
pub fn forward_oracle(d: &BodyModelData, beta: &[f64; NUM_BETAS], alpha: f64, pose: &[[f64; 3]]) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let nv = d.adult_template.len();
    let nj = d.joint_names.len();
    let mut rest = vec![[0.0; 3]; nv];
    for v in 0..nv {
        for c in 0..3 {
            rest[v][c] = alpha * d.child_template[v][c] + (1.0 - alpha) * d.adult_template[v][c];
            for k in 0..NUM_BETAS {
                rest[v][c] += d.shape_blendshapes[(v * 3 + c) * NUM_BETAS + k] * beta[k];
            }
        }
    }
    let mut joints = vec![[0.0; 3]; nj];
    for j in 0..nj {
        for v in 0..nv {
            for c in 0..3 {
                joints[j][c] += d.joint_regressor[j * nv + v] * rest[v][c];
            }
        }
    }
    let rots: Vec<[[f64; 3]; 3]> = pose.iter().map(|w| rodrigues(*w)).collect();
    if let Some(pb) = &d.pose_blendshapes {
        let mut feat = Vec::new();
        for r in &rots[1..] {
            for i in 0..3 {
                for j in 0..3 {
                    feat.push(r[i][j] - if i == j { 1.0 } else { 0.0 });
                }
            }
        }
        let nf = feat.len();
        for v in 0..nv {
            for c in 0..3 {
                for (f, x) in feat.iter().enumerate() {
                    rest[v][c] += pb[(v * 3 + c) * nf + f] * x;
                }
            }
        }
    }
    let mut global: Vec<M4> = vec![[[0.0; 4]; 4]; nj];
    let mut done = vec![false; nj];
    while done.iter().any(|d| !d) {
        for j in 0..nj {
            if done[j] {
                continue;
            }
            let parent = d.parents[j];
            if parent.is_some_and(|p| !done[p]) {
                continue;
            }
            let mut local = [[0.0; 4]; 4];
            for i in 0..3 {
                for k in 0..3 {
                    local[i][k] = rots[j][i][k];
                }
                local[i][3] = joints[j][i] - parent.map_or(0.0, |p| joints[p][i]);
            }
            local[3][3] = 1.0;
            global[j] = match parent {
                None => local,
                Some(p) => mul4(&global[p], &local),
            };
            done[j] = true;
        }
    }
    let posed_joints: Vec<[f64; 3]> = global.iter().map(|g| [g[0][3], g[1][3], g[2][3]]).collect();
    let mut verts = vec![[0.0; 3]; nv];
    for v in 0..nv {
        for j in 0..nj {
            let w = d.skinning_weights[v * nj + j];
            let g = &global[j];
            let local = [rest[v][0] - joints[j][0], rest[v][1] - joints[j][1], rest[v][2] - joints[j][2]];
            for i in 0..3 {
                verts[v][i] += w * (g[i][0] * local[0] + g[i][1] * local[1] + g[i][2] * local[2] + g[i][3]);
            }
        }
    }
    (verts, posed_joints)
}

/// A random small fitting problem: model, joint map, tracks, states near
/// the detections, and a moving camera.
pub struct ToyProblem {
    pub model: BodyModel,
    pub joint_map: JointMap,
    pub tracks: Vec<KeypointTrack>,
    pub states: Vec<PersonState>,
    pub cams: CameraTrack,
}

fn v3(rng: &mut ChaCha8Rng, a: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-a..a), rng.random_range(-a..a), rng.random_range(-a..a))
}

/// Sizes stay within V ≤ 50, K_j ≤ 4, T ≤ 5, N ≤ 2.
pub fn toy_problem(seed: u64) -> ToyProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = rng.random_range(12..=50);
    let kj = rng.random_range(1..=4);
    let frames = rng.random_range(2..=5);
    let people = rng.random_range(1..=2);
    let model = toy::random_model(seed, nv, kj, true);
    let nk = kj + 1;
    let joint_map = JointMap::new((0..nk).map(|j| (j, j)).collect(), nk, nk).unwrap();

    let k = CameraIntrinsics::new(500.0, 520.0, 320.0, 240.0).unwrap();
    let poses = (0..frames)
        .map(|t| CameraPose::new(axis_angle_to_rotation(&v3(&mut rng, 0.1)), Vector3::new(0.1 * t as f64, 0.0, 0.0) + v3(&mut rng, 0.05)).unwrap())
        .collect();
    let cams = CameraTrack::new(poses, k, rng.random_range(0.7..1.4)).unwrap();

    let mut states = Vec::new();
    let mut tracks = Vec::new();
    for i in 0..people {
        let shape = ShapeParams::new(std::array::from_fn(|_| rng.random_range(-0.5..0.5)), rng.random_range(0.2..0.8));
        let st = PersonState {
            frames: (0..frames)
                .map(|_| FrameState {
                    global_orient: v3(&mut rng, 0.4),
                    body_pose: (0..kj).map(|_| v3(&mut rng, 0.5)).collect(),
                    translation: Vector3::new(i as f64 - 0.5, -0.8, 4.0) + v3(&mut rng, 0.2),
                })
                .collect(),
            shape,
        };
        let tf = st
            .frames
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let mesh = model.forward(&st.shape, &f.pose()).unwrap();
                let points: Vec<Vector2<f64>> = mesh
                    .joints
                    .iter()
                    .map(|j| {
                        let pc = world_point_to_camera(&cams.poses[t], cams.scale, &(j + f.translation));
                        project(&cams.intrinsics, &pc).unwrap() + Vector2::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0))
                    })
                    .collect();
                let conf = (0..nk).map(|_| rng.random_range(0.3..1.0)).collect();
                TrackFrame {
                    frame: t,
                    keypoints: KeypointFrame::new(points, conf).unwrap(),
                }
            })
            .collect();
        tracks.push(KeypointTrack { id: i as u32, frames: tf });
        states.push(st);
    }
    ToyProblem {
        model,
        joint_map,
        tracks,
        states,
        cams,
    }
}

/// Mean over frames of root-aligned MPJPE in millimeters.
pub fn sequence_mpjpe_mm(model: &BodyModel, pred: &PersonState, truth: &PersonState) -> f64 {
    let p = aionfit::objective::person_world_joints(model, pred).unwrap();
    let t = aionfit::objective::person_world_joints(model, truth).unwrap();
    let mut sum = 0.0;
    for (a, b) in p.iter().zip(&t) {
        let mut s = 0.0;
        for j in 0..a.len() {
            s += ((a[j] - a[0]) - (b[j] - b[0])).norm();
        }
        sum += 1000.0 * s / a.len() as f64;
    }
    sum / p.len() as f64
}

/// Worked metric cases with hand-computed answers. Returns the names of any
/// that fail.
pub fn metric_example_failures() -> Vec<&'static str> {
    use aionfit::metrics::*;
    let mut failed = Vec::new();
    let mut check = |name, ok: bool| {
        if !ok {
            failed.push(name);
        }
    };
    let close = |r: aionfit::Result<f64>, want: f64, tol: f64| r.is_ok_and(|v| (v - want).abs() <= tol);

    let j: Vec<Vector3<f64>> = (0..10).map(|i| Vector3::new(i as f64, (i * i) as f64, -(i as f64))).collect();
    check("mpjpe identical", close(mpjpe(&j, &j), 0.0, 0.0));
    let mut off = j.clone();
    off[6] += Vector3::new(3.0, 4.0, 0.0);
    check("mpjpe single (3,4,0) offset", close(mpjpe(&off, &j), 0.5, 1e-12));
    check("mpjpe mismatch", mpjpe(&j[..9], &j).is_err());

    let r: Vec<Vector2<f64>> = vec![Vector2::new(0.0, 0.0), Vector2::new(200.0, 0.0), Vector2::new(0.0, 100.0), Vector2::new(200.0, 100.0)];
    check("pck identical", close(pck(&r, &r, 0.05), 1.0, 0.0));
    let far: Vec<_> = r.iter().map(|p| p + Vector2::new(11.0, 0.0)).collect();
    check("pck all outside", close(pck(&far, &r, 0.05), 0.0, 0.0));
    // threshold 0.05·200 = 10 px
    let half = vec![r[0] + Vector2::new(9.0, 0.0), r[1] + Vector2::new(0.0, 10.0), r[2] + Vector2::new(10.5, 0.0), r[3] + Vector2::new(30.0, 0.0)];
    check("pck half", close(pck(&half, &r, 0.05), 0.5, 0.0));
    let point = vec![Vector2::new(3.0, 3.0); 3];
    check("pck degenerate box", matches!(pck(&point, &point, 0.1), Err(aionfit::Error::UndefinedMetric(_))));

    let h = |a, b| HeightPair::new(a, b);
    check("ahd equal", close(ahd(&[h(1.2, 1.2), h(0.9, 0.9)]), 0.0, 0.0));
    check("ahd single", close(ahd(&[h(1.33, 1.46)]), -0.13, 1e-12));
    check("ahd symmetric", close(ahd(&[h(1.0, 1.1), h(1.0, 0.9)]), 0.0, 1e-12));
    check("ahd empty", ahd(&[]).is_err());
    check("aphd equal", close(aphd(&[h(1.33, 1.33)]), 0.0, 0.0));
    check("aphd single", close(aphd(&[h(1.33, 1.46)]), -9.774, 1e-3));
    check("aphd half", close(aphd(&[h(1.4, 0.7)]), 50.0, 1e-12));
    check("aphd nonpositive reference", aphd(&[h(0.0, 1.0)]).is_err());

    check("param_l2 identical", close(param_l2(&[0.1, 0.2], &[0.3; 6], &[0.1, 0.2], &[0.3; 6]), 0.0, 0.0));
    check("param_l2 unit theta", close(param_l2(&[0.0; 2], &[0.6, 0.8, 0.0], &[0.0; 2], &[0.0; 3]), 1.0, 1e-15));
    check("param_l2 mismatch", param_l2(&[0.0; 2], &[0.0; 3], &[0.0; 2], &[0.0; 4]).is_err());
    let mut j2 = j.clone();
    check("kp_l1_3d identical", close(kp_l1_3d(&j, &j), 0.0, 0.0));
    j2[3].y += 0.2;
    check("kp_l1_3d one coordinate", close(kp_l1_3d(&j2, &j), 0.2, 1e-12));
    let vis = vec![true; 4];
    check("kp_l1_2d exact", close(kp_l1_2d(&r, &r, &vis), 0.0, 0.0));
    let mut r2 = r.clone();
    r2[1] += Vector2::new(1.0, 2.0);
    check("kp_l1_2d single", close(kp_l1_2d(&r2, &r, &vis), 3.0, 1e-12));
    check("kp_l1_2d mismatch", kp_l1_2d(&r2[..3], &r, &vis).is_err());
    failed
}

/// A float spread over many magnitudes, with awkward mantissas.
pub fn wild_f64(rng: &mut ChaCha8Rng) -> f64 {
    let mag = 10f64.powi(rng.random_range(-12..12));
    let v = rng.random::<f64>() * mag;
    if rng.random_bool(0.5) {
        -v
    } else {
        v
    }
}

fn check_roundtrip<T>(name: &'static str, value: &T, failed: &mut Vec<String>)
where
    T: aionfit::dataio::files::SchemaFile + PartialEq + std::fmt::Debug,
{
    use aionfit::dataio::files::{from_json, to_json};
    let result = (|| {
        let text = to_json(value)?;
        let back: T = from_json(&text, name)?;
        let again = to_json(&back)?;
        Ok::<_, aionfit::Error>(back == *value && again == text)
    })();
    match result {
        Ok(true) => {}
        Ok(false) => failed.push(format!("{name}: changed on round trip")),
        Err(e) => failed.push(format!("{name}: {e}")),
    }
}

/// Random instances of every file schema, serialized, parsed and
/// serialized again. Returns a description of each instance that did not
/// come back equal with identical bytes.
pub fn schema_roundtrip_failures(seed: u64) -> Vec<String> {
    use aionfit::dataio::files::*;
    use aionfit::fitter::lbfgs::Termination;
    use aionfit::fitter::{FitConfig, RejectedTrack, StageReport};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failed = Vec::new();

    let model = toy::random_model(seed, rng.random_range(3..30), rng.random_range(1..5), rng.random_bool(0.5));
    let mut mf = ModelFile::from_data(model.data());
    mf.adult_template.iter_mut().for_each(|v| *v = wild_f64(&mut rng));
    mf.shape_blendshapes.iter_mut().for_each(|v| *v = wild_f64(&mut rng));
    check_roundtrip("model", &mf, &mut failed);

    let frames = rng.random_range(0..8);
    let cams = CamerasFile {
        schema: CamerasFile::SCHEMA.into(),
        intrinsics: CameraIntrinsics::new(wild_f64(&mut rng).abs() + 1.0, 900.0 + wild_f64(&mut rng).abs(), wild_f64(&mut rng), wild_f64(&mut rng)).unwrap(),
        scale: rng.random_range(0.1..10.0),
        frames: (0..frames)
            .map(|_| {
                let r = axis_angle_to_rotation(&v3(&mut rng, 3.0));
                CameraFrame {
                    rotation: std::array::from_fn(|i| r[(i / 3, i % 3)]),
                    translation: std::array::from_fn(|_| wild_f64(&mut rng)),
                }
            })
            .collect(),
    };
    check_roundtrip("cameras", &cams, &mut failed);

    let coco = aionfit::dataio::COCO17.keypoints;
    let pairs: Vec<(String, String)> = (0..rng.random_range(0..6))
        .map(|i| (format!("j{i}_{}", rng.random::<u16>()), coco[rng.random_range(0..coco.len())].to_string()))
        .collect();
    check_roundtrip("joint map", &JointMapFile::new("coco17", &pairs), &mut failed);

    let mut config = FitConfig::default();
    config.stage2.lambda_smooth = wild_f64(&mut rng).abs();
    config.stage1.iterations = rng.random_range(0..1000);
    config.alpha_init = rng.random();
    config.robust.sigma = wild_f64(&mut rng).abs() + 1e-3;
    config.stature_coupling = rng.random_bool(0.5);
    check_roundtrip("config", &ConfigFile::new(config), &mut failed);

    let det = DetectionsFile {
        schema: DetectionsFile::SCHEMA.into(),
        convention: "coco17".into(),
        tracks: (0..rng.random_range(0..4))
            .map(|id| {
                let mut frame = 0;
                DetectionTrack {
                    id,
                    frames: (0..rng.random_range(0..10))
                        .map(|_| {
                            frame += rng.random_range(1..4);
                            DetectionFrame {
                                frame,
                                keypoints: (0..17).map(|_| [wild_f64(&mut rng), wild_f64(&mut rng), rng.random::<f64>()]).collect(),
                            }
                        })
                        .collect(),
                }
            })
            .collect(),
    };
    check_roundtrip("detections", &det, &mut failed);

    let nb = rng.random_range(0..5);
    let results = ResultsFile {
        schema: ResultsFile::SCHEMA.into(),
        model_hash: format!("{:064x}", rng.random::<u128>()),
        camera_scale: wild_f64(&mut rng),
        tracks: (0..rng.random_range(0..3))
            .map(|id| ResultTrack {
                id,
                beta: std::array::from_fn(|_| wild_f64(&mut rng)),
                alpha: rng.random(),
                frames: (0..rng.random_range(0..6))
                    .map(|frame| ResultFrame {
                        frame,
                        global_orient: std::array::from_fn(|_| wild_f64(&mut rng)),
                        body_pose: (0..nb).map(|_| std::array::from_fn(|_| wild_f64(&mut rng))).collect(),
                        translation: std::array::from_fn(|_| wild_f64(&mut rng)),
                        residual_px: rng.random_bool(0.7).then(|| wild_f64(&mut rng).abs()),
                    })
                    .collect(),
            })
            .collect(),
        diagnostics: Diagnostics {
            stages: vec![StageReport {
                name: "stage2".into(),
                trace: (0..rng.random_range(1..20)).map(|_| wild_f64(&mut rng)).collect(),
                iterations: rng.random_range(0..100),
                evaluations: rng.random_range(0..100),
                termination: Termination::SmallChange,
                final_gradient_norm: wild_f64(&mut rng).abs(),
                gradient_check: rng.random_bool(0.5).then(|| wild_f64(&mut rng).abs()),
            }],
            rejected: vec![RejectedTrack {
                id: 3,
                reason: "no usable keypoints \"quoted\" ✓".into(),
            }],
            mean_residual_px: Some(wild_f64(&mut rng).abs()),
        },
    };
    check_roundtrip("results", &results, &mut failed);
    failed
}

/// Runs the installed binary with `AIONFIT_MODEL` cleared.
pub fn aionfit(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_aionfit"))
        .args(args)
        .env_remove("AIONFIT_MODEL")
        .output()
        .expect("spawn aionfit")
}

pub fn aionfit_ok(args: &[&str]) -> String {
    let o = aionfit(args);
    assert!(o.status.success(), "aionfit {args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

/// toy-model → synth → fit → metrics through the binary in `dir`. Returns
/// the metrics by name.
pub fn cli_pipeline(dir: &std::path::Path, seed: u64) -> std::collections::HashMap<String, f64> {
    let p = |name: &str| dir.join(name).display().to_string();
    aionfit_ok(&["toy-model", "--out-model", &p("model.json"), "--out-joint-map", &p("map.json")]);
    let seed = seed.to_string();
    aionfit_ok(&[
        "synth", "--model", &p("model.json"), "--joint-map", &p("map.json"), "--out-dir", &p("seq"),
        "--seed", &seed, "--pose-amplitude", "0.05",
    ]);
    aionfit_ok(&[
        "fit", "--model", &p("model.json"), "--joint-map", &p("map.json"),
        "--detections", &p("seq/detections.json"), "--cameras", &p("seq/cameras.json"), "--out", &p("fit.json"),
    ]);
    let json = aionfit_ok(&["metrics", "--model", &p("model.json"), "--pred", &p("fit.json"), "--reference", &p("seq/truth.json"), "--json"]);
    let entries: Vec<aionfit::metrics::MetricEntry> = serde_json::from_str(&json).unwrap();
    entries.into_iter().map(|e| (e.name, e.value)).collect()
}
