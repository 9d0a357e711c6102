//! Drops frames with unreliable facial keypoints.
//!
//! cargo run --example face_filter

use aionfit::dataio::synth::{synth_generate, Scenario};
use aionfit::dataio::{filter_by_face_confidence, COCO17, FACE_CONFIDENCE_FLOOR};
use aionfit::toy;

fn main() -> aionfit::Result<()> {
    let model = toy::humanoid();
    let map = toy::humanoid_coco_joint_map(&model)?;
    let scenario = Scenario {
        frames: 10,
        alphas: vec![1.0, 0.0],
        ..Scenario::default()
    };
    let mut det = synth_generate(&model, &map, "coco17", &scenario, 5)?.detections;

    // pretend the detector lost the first person's face on odd frames and
    // the second person's face everywhere
    let facial: Vec<usize> = COCO17.facial.iter().filter_map(|k| COCO17.index(k)).collect();
    for (i, track) in det.tracks.iter_mut().enumerate() {
        for f in &mut track.frames {
            if i == 1 || f.frame % 2 == 1 {
                for &k in &facial {
                    f.keypoints.confidences[k] = 0.3;
                }
            }
        }
    }

    let out = filter_by_face_confidence(&det, FACE_CONFIDENCE_FLOOR)?;
    for t in &out.detections.tracks {
        let kept: Vec<usize> = t.frames.iter().map(|f| f.frame).collect();
        println!("track {}: kept frames {kept:?}", t.id);
    }
    println!("emptied tracks: {:?}", out.emptied);
    Ok(())
}
