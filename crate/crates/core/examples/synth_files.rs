//! Writes a synthetic sequence as detection, camera and ground-truth files
//! and reads them back.
//!
//! cargo run --example synth_files [OUT_DIR]

use std::path::PathBuf;

use aionfit::dataio::files::{load, load_detections, model_hash, save, CamerasFile, DetectionsFile, ResultsFile};
use aionfit::dataio::synth::{synth_generate, Scenario};
use aionfit::toy;

fn main() -> aionfit::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("aionfit-synth"));
    std::fs::create_dir_all(&dir).map_err(|e| aionfit::Error::Input(e.to_string()))?;

    let model = toy::humanoid();
    let map = toy::humanoid_coco_joint_map(&model)?;
    let scenario = Scenario {
        alphas: vec![0.0, 1.0],
        noise_px: 1.0,
        ..Scenario::default()
    };
    let s = synth_generate(&model, &map, "coco17", &scenario, 42)?;

    save(&DetectionsFile::from_detections(&s.detections), dir.join("detections.json"))?;
    save(&CamerasFile::from_track(&s.cameras), dir.join("cameras.json"))?;
    let truth = ResultsFile::from_states(&s.truth, &s.detections.tracks, s.cameras.scale, &model_hash(&model))?;
    save(&truth, dir.join("truth.json"))?;

    let det = load_detections(dir.join("detections.json"))?;
    let cams = load::<CamerasFile>(dir.join("cameras.json"))?.to_track()?;
    assert_eq!(det, s.detections);
    assert_eq!(cams, s.cameras);
    println!("{} tracks, {} frames written to {}", det.tracks.len(), cams.len(), dir.display());
    Ok(())
}
