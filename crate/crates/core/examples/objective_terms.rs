//! Energy terms of a synthetic sequence at its ground truth and after a
//! perturbation of the shape.
//!
//! cargo run --example objective_terms

use aionfit::dataio::synth::{synth_generate, Scenario};
use aionfit::fitter::FitConfig;
use aionfit::objective::{evaluate, Problem};
use aionfit::toy;

fn main() -> aionfit::Result<()> {
    let model = toy::humanoid();
    let map = toy::humanoid_coco_joint_map(&model)?;
    let s = synth_generate(&model, &map, "coco17", &Scenario::default(), 3)?;
    let problem = Problem::new(&model, &s.detections.tracks, &map);
    let weights = FitConfig::default().stage2;

    let (truth, _) = evaluate(&problem, &s.truth, &s.cameras, &weights, false)?;
    println!("ground truth: {truth:?}");

    let mut shifted = s.truth.clone();
    shifted[0].shape.alpha = 0.6;
    let (off, _) = evaluate(&problem, &shifted, &s.cameras, &weights, false)?;
    println!("alpha 1.0 -> 0.6: {off:?}");
    Ok(())
}
