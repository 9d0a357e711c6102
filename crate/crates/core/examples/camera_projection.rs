//! World-to-image projection with a scaled camera trajectory.
//!
//! cargo run --example camera_projection

use aionfit::camera::{camera_point_to_world, project, world_point_to_camera, CameraIntrinsics, CameraPose};
use aionfit::rotation::axis_angle_to_rotation;
use nalgebra::Vector3;

fn main() -> aionfit::Result<()> {
    let k = CameraIntrinsics::new(1000.0, 1000.0, 640.0, 360.0)?;
    // camera turned 10 degrees about y, one meter to the side
    let pose = CameraPose::new(
        axis_angle_to_rotation(&Vector3::new(0.0, 10f64.to_radians(), 0.0)),
        Vector3::new(-1.0, 0.0, 0.0),
    )?;
    let p_w = Vector3::new(0.2, -0.5, 4.0);

    for scale in [0.5, 1.0, 2.0] {
        let p_c = world_point_to_camera(&pose, scale, &p_w);
        let uv = project(&k, &p_c)?;
        let back = camera_point_to_world(&pose, scale, &p_c);
        println!(
            "scale {scale}: camera ({:.3}, {:.3}, {:.3}) -> pixel ({:.1}, {:.1}); round trip error {:.1e}",
            p_c.x,
            p_c.y,
            p_c.z,
            uv.x,
            uv.y,
            (back - p_w).norm()
        );
    }

    match project(&k, &Vector3::new(0.0, 0.0, -1.0)) {
        Err(e) => println!("behind the camera: {e}"),
        Ok(uv) => println!("unexpected projection {uv:?}"),
    }
    Ok(())
}
