mod common;

use aionfit::body_model::{PoseParams, ShapeParams, NUM_BETAS};
use aionfit::toy;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_diff(a: &[Vector3<f64>], b: &[[f64; 3]]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn forward_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..40 {
        let kj = 1 + seed as usize % 4;
        let model = toy::random_model(seed, 10 + seed as usize, kj, seed % 2 == 0);
        let beta: [f64; NUM_BETAS] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let alpha = rng.random_range(0.0..1.0);
        let pose: Vec<[f64; 3]> = (0..=kj).map(|_| std::array::from_fn(|_| rng.random_range(-1.5..1.5))).collect();
        let params = PoseParams {
            global_orient: Vector3::from(pose[0]),
            body_pose: pose[1..].iter().map(|w| Vector3::from(*w)).collect(),
        };
        let mesh = model.forward(&ShapeParams::new(beta, alpha), &params).unwrap();
        let (v, j) = common::forward_oracle(model.data(), &beta, alpha, &pose);
        assert!(max_diff(&mesh.vertices, &v) < 1e-10, "seed {seed}");
        assert!(max_diff(&mesh.joints, &j) < 1e-10, "seed {seed}");
    }
}

#[test]
fn template_endpoints_are_stored_arrays() {
    let model = toy::random_model(5, 30, 3, true);
    assert_eq!(model.interpolate_template(0.0).unwrap(), model.data().adult_template);
    assert_eq!(model.interpolate_template(1.0).unwrap(), model.data().child_template);
    assert!(model.interpolate_template(1.2).is_err());
    assert!(model.interpolate_template(-0.1).is_err());
}

#[test]
fn zero_pose_leaves_shaped_template_in_place() {
    let model = toy::random_model(8, 20, 2, true);
    let shape = ShapeParams::new([0.0; NUM_BETAS], 0.3);
    let mesh = model.forward(&shape, &PoseParams::zero(2)).unwrap();
    let rest = model.interpolate_template(0.3).unwrap();
    for (a, b) in mesh.vertices.iter().zip(&rest) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn humanoid_height_falls_linearly_with_alpha() {
    let model = toy::humanoid();
    let h = |a| model.neutral_height(&ShapeParams::new([0.0; NUM_BETAS], a));
    assert!((h(0.0) - 1.70).abs() < 1e-9);
    assert!((h(1.0) - 1.00).abs() < 1e-9);
    let mut prev = f64::INFINITY;
    for i in 0..=10 {
        let v = h(i as f64 / 10.0);
        assert!(v < prev);
        prev = v;
    }
}

#[test]
fn wrong_pose_length_is_rejected() {
    let model = toy::humanoid();
    assert!(model.forward(&ShapeParams::adult(), &PoseParams::zero(3)).is_err());
}
