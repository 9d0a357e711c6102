//! Exports the toy humanoid's adult and child meshes as OBJ files.
//!
//! cargo run --example export_obj [OUT_DIR]

use std::path::PathBuf;

use aionfit::body_model::{PoseParams, ShapeParams};
use aionfit::dataio::obj::export_obj;
use aionfit::toy;
use nalgebra::Vector3;

fn main() -> aionfit::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let model = toy::humanoid();
    let pose = PoseParams::zero(model.body_joint_count());
    for (name, shape, x) in [("adult", ShapeParams::adult(), -0.5), ("child", ShapeParams::child(), 0.5)] {
        let mesh = model.forward(&shape, &pose)?;
        let path = dir.join(format!("humanoid_{name}.obj"));
        // place the two side by side in world coordinates
        export_obj(&mesh, &Vector3::new(x, 0.0, 0.0), model.faces(), &path)?;
        println!("wrote {} ({} vertices, {} faces)", path.display(), mesh.vertices.len(), model.faces().len());
    }
    Ok(())
}
