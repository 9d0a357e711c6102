//! Fits synthetic adult and child sequences and compares with the truth.
//!
//! cargo run --release --example fit_synthetic

use aionfit::dataio::synth::{synth_generate, Scenario};
use aionfit::fitter::{FitConfig, Fitter};
use aionfit::metrics::sequence_report;
use aionfit::toy;

fn main() -> aionfit::Result<()> {
    let model = toy::humanoid();
    let map = toy::humanoid_coco_joint_map(&model)?;
    let fitter = Fitter::new(&model, &map, FitConfig::default())?;

    for (label, alpha) in [("adult", 0.0), ("child", 1.0)] {
        let scenario = Scenario {
            alphas: vec![alpha],
            pose_amplitude: 0.05,
            ..Scenario::default()
        };
        let s = synth_generate(&model, &map, "coco17", &scenario, 11)?;
        let report = fitter.fit(&s.detections.tracks, &s.cameras, None)?;
        println!("{label}: true alpha {alpha}");
        for stage in &report.stages {
            println!(
                "  {:<26} {:>3} iterations, objective {:.4} -> {:.4} ({:?})",
                stage.name,
                stage.iterations,
                stage.trace.first().unwrap_or(&f64::NAN),
                stage.trace.last().unwrap_or(&f64::NAN),
                stage.termination
            );
        }
        let fitted: Vec<_> = report.tracks.iter().map(|t| t.state.clone()).collect();
        println!(
            "  fitted alpha {:.3}, camera scale {:.3}, residual {:.3} px",
            fitted[0].shape.alpha,
            report.camera_scale,
            report.mean_reprojection_residual()
        );
        for m in sequence_report(&model, &fitted, &s.truth)? {
            println!("  {:<16} {:>10.4} {}", m.name, m.value, m.units);
        }
    }
    Ok(())
}
