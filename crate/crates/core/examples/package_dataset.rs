//! Packages two synthetic sequences with meshes, then shows the privacy
//! check rejecting a stray image.
//!
//! cargo run --example package_dataset

use aionfit::dataio::files::{model_hash, ResultsFile};
use aionfit::dataio::package::{package_dataset, verify_package, PackageOptions};
use aionfit::dataio::synth::{synth_generate, Scenario};
use aionfit::toy;

fn main() -> aionfit::Result<()> {
    let model = toy::humanoid();
    let map = toy::humanoid_coco_joint_map(&model)?;
    let hash = model_hash(&model);
    let results = [(0.0, "walk_adult"), (1.0, "walk_child")]
        .iter()
        .enumerate()
        .map(|(seed, (alpha, id))| {
            let scenario = Scenario {
                frames: 5,
                alphas: vec![*alpha],
                ..Scenario::default()
            };
            let s = synth_generate(&model, &map, "coco17", &scenario, seed as u64)?;
            Ok((id.to_string(), ResultsFile::from_states(&s.truth, &s.detections.tracks, 1.0, &hash)?))
        })
        .collect::<aionfit::Result<Vec<_>>>()?;

    let dir = std::env::temp_dir().join("aionfit-package-example");
    let _ = std::fs::remove_dir_all(&dir);
    let options = PackageOptions {
        meshes: Some(&model),
        ..PackageOptions::default()
    };
    let pkg = package_dataset(&results, &hash, &dir, &options)?;
    for s in &pkg.manifest.sequences {
        println!("{}: {} frames, {} meshes", s.id, s.frame_count, s.mesh_count);
    }

    std::fs::write(dir.join("meshes").join("frame.png"), b"\x89PNG\r\n\x1a\n....")
        .map_err(|e| aionfit::Error::Input(e.to_string()))?;
    match verify_package(&dir) {
        Err(e) => println!("verification after adding a PNG: {e}"),
        Ok(_) => println!("image was not detected"),
    }
    Ok(())
}
