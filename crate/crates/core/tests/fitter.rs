mod common;

use aionfit::dataio::synth::{synth_generate, Scenario};
use aionfit::fitter::layout::{FreeBlocks, FreeParameterLayout};
use aionfit::fitter::lbfgs::{lbfgs_minimize, LbfgsOptions};
use aionfit::fitter::{gradient_gate, FitConfig, Fitter, GRADIENT_GATE_TOLERANCE};
use aionfit::objective::{KeypointFrame, KeypointTrack, Problem, TrackFrame};
use aionfit::{toy, Error};
use nalgebra::Vector2;

fn scenario(alphas: Vec<f64>) -> Scenario {
    Scenario {
        alphas,
        pose_amplitude: 0.05,
        ..Scenario::default()
    }
}

#[test]
fn stage_layouts_pass_the_gradient_gate() {
    let weights = FitConfig::default().stage2;
    for seed in 0..10 {
        let p = common::toy_problem(seed);
        let problem = Problem::new(&p.model, &p.tracks, &p.joint_map);
        for free in [FreeBlocks::root_only(), FreeBlocks::all(true)] {
            for kappa in [None, Some(0.55)] {
                let mut layout = FreeParameterLayout::new(free, &p.states, p.model.body_joint_count());
                if let Some(k) = kappa {
                    layout = layout.with_stature_coupling(k);
                }
                let x = layout.flatten(&p.states, &p.cams).unwrap();
                let check = gradient_gate(&problem, &layout, &weights, &p.states, &p.cams, &x).unwrap();
                assert!(check.max_relative_error < GRADIENT_GATE_TOLERANCE, "seed {seed}: {check:?}");
            }
        }
    }
}

#[test]
fn noiseless_fit_recovers_pose_and_template() {
    let model = toy::humanoid();
    let map = toy::humanoid_coco_joint_map(&model).unwrap();
    for (seed, alpha) in [(1, 0.0), (2, 1.0)] {
        let s = synth_generate(&model, &map, "coco17", &scenario(vec![alpha]), seed).unwrap();
        let fitter = Fitter::new(&model, &map, FitConfig::default()).unwrap();
        let report = fitter.fit(&s.detections.tracks, &s.cameras, None).unwrap();
        assert!(report.mean_reprojection_residual() < 0.5, "{}", report.mean_reprojection_residual());
        let fitted = &report.tracks[0].state;
        assert!(common::sequence_mpjpe_mm(&model, fitted, &s.truth[0]) < 10.0);
        assert!((fitted.shape.alpha - alpha).abs() < 0.15, "alpha {}", fitted.shape.alpha);
        for stage in &report.stages {
            assert!(stage.trace.windows(2).all(|w| w[1] <= w[0]), "{}", stage.name);
        }
    }
}

#[test]
fn every_start_is_reported_as_its_own_stage() {
    let model = toy::humanoid();
    let map = toy::humanoid_coco_joint_map(&model).unwrap();
    let fitter = Fitter::new(&model, &map, FitConfig::default()).unwrap();
    assert_eq!(fitter.alpha_starts(), vec![1.0, 0.0]);
    let single = FitConfig {
        alpha_endpoint_search: false,
        ..FitConfig::default()
    };
    assert_eq!(Fitter::new(&model, &map, single).unwrap().alpha_starts(), vec![1.0]);
    let mid = FitConfig {
        alpha_init: 0.5,
        ..FitConfig::default()
    };
    assert_eq!(Fitter::new(&model, &map, mid).unwrap().alpha_starts(), vec![0.5, 1.0, 0.0]);

    let s = synth_generate(&model, &map, "coco17", &scenario(vec![1.0]), 3).unwrap();
    let report = fitter.fit(&s.detections.tracks, &s.cameras, None).unwrap();
    let names: Vec<&str> = report.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["stage1 (alpha_init=1)", "stage1 (alpha_init=0)", "stage2"]);
}

#[test]
fn tracks_without_usable_keypoints_are_rejected() {
    let model = toy::humanoid();
    let map = toy::humanoid_coco_joint_map(&model).unwrap();
    let s = synth_generate(&model, &map, "coco17", &scenario(vec![1.0]), 5).unwrap();
    let dark = |id| KeypointTrack {
        id,
        frames: vec![TrackFrame {
            frame: 0,
            keypoints: KeypointFrame::new(vec![Vector2::new(1.0, 1.0); 17], vec![0.0; 17]).unwrap(),
        }],
    };
    let fitter = Fitter::new(&model, &map, FitConfig::default()).unwrap();

    let err = fitter.fit(&[dark(4)], &s.cameras, None).unwrap_err();
    assert!(matches!(err, Error::NoTracks(_)), "{err}");

    let mut tracks = s.detections.tracks.clone();
    tracks.push(dark(9));
    let report = fitter.fit(&tracks, &s.cameras, None).unwrap();
    assert_eq!(report.tracks.len(), 1);
    assert_eq!(report.rejected.len(), 1);
    assert_eq!(report.rejected[0].id, 9);
}

#[test]
fn invalid_configs_are_refused() {
    let model = toy::humanoid();
    let map = toy::humanoid_coco_joint_map(&model).unwrap();
    let c = FitConfig {
        alpha_init: 1.5,
        ..FitConfig::default()
    };
    assert!(Fitter::new(&model, &map, c).is_err());
    let mut c = FitConfig::default();
    c.lbfgs.step_scale = 0.0;
    assert!(Fitter::new(&model, &map, c).is_err());
}

#[test]
fn lbfgs_minimizes_rosenbrock_monotonically() {
    let rosen = |x: &[f64]| {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    };
    let opts = LbfgsOptions {
        max_iters: 200,
        ..LbfgsOptions::default()
    };
    let r = lbfgs_minimize(rosen, &[-1.2, 1.0], &opts).unwrap();
    assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
}
