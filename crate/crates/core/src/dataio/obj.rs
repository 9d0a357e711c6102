//! Wavefront OBJ mesh export.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::body_model::MeshResult;
use crate::error::{Error, Result};

/// OBJ text for `mesh` translated by `gamma`: one `v` line per vertex with
/// six decimals, then one 1-indexed `f` line per triangle. Joints are not
/// written.
pub fn obj_string(mesh: &MeshResult, gamma: &Vector3<f64>, faces: &[[usize; 3]]) -> Result<String> {
    let n = mesh.vertices.len();
    if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
        return Err(Error::Input(format!("face {f:?} references a vertex beyond {n}")));
    }
    let mut s = String::with_capacity(40 * n + 20 * faces.len());
    for v in &mesh.vertices {
        let p = v + gamma;
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::Input("non-finite vertex".into()));
        }
        writeln!(s, "v {:.6} {:.6} {:.6}", p.x, p.y, p.z).expect("write to string");
    }
    for f in faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("write to string");
    }
    Ok(s)
}

pub fn export_obj(mesh: &MeshResult, gamma: &Vector3<f64>, faces: &[[usize; 3]], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, obj_string(mesh, gamma, faces)?).map_err(|e| Error::io(path, e))
}
