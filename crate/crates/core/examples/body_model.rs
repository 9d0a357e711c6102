//! Poses the toy humanoid along the adult-to-child axis and reports stature.
//!
//! cargo run --example body_model

use aionfit::body_model::{PoseParams, ShapeParams};
use aionfit::toy;
use nalgebra::Vector3;

fn main() -> aionfit::Result<()> {
    let model = toy::humanoid();
    println!("{} vertices, {} joints", model.vertex_count(), model.joint_count());

    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let shape = ShapeParams::new([0.0; 10], alpha);
        println!("alpha {alpha:.2}: neutral height {:.3} m", model.neutral_height(&shape));
    }

    // raise the left elbow a quarter turn and look at where the wrist goes
    let mut pose = PoseParams::zero(model.body_joint_count());
    let shoulder = model.joint_index("left_shoulder").expect("humanoid has a left shoulder");
    pose.body_pose[shoulder - 1] = Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
    let wrist = model.joint_index("left_wrist").expect("humanoid has a left wrist");
    for (name, shape) in [("adult", ShapeParams::adult()), ("child", ShapeParams::child())] {
        let mesh = model.forward(&shape, &pose)?;
        let w = mesh.joints[wrist];
        println!("{name} left wrist with raised arm: ({:.3}, {:.3}, {:.3})", w.x, w.y, w.z);
    }
    Ok(())
}
