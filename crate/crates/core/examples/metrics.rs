//! Height and joint metrics on hand-made inputs.
//!
//! cargo run --example metrics

use aionfit::metrics::{ahd, aphd, mpjpe, pa_mpjpe, pck, HeightPair};
use nalgebra::{Vector2, Vector3};

fn main() -> aionfit::Result<()> {
    // a child measured at 1.33 m but predicted at 1.46 m
    let pairs = [HeightPair::new(1.33, 1.46)];
    println!("AHD  {:+.3} m", ahd(&pairs)?);
    println!("APHD {:+.3} %", aphd(&pairs)?);

    let reference: Vec<Vector3<f64>> = (0..5).map(|i| Vector3::new(100.0 * i as f64, 0.0, 0.0)).collect();
    let pred: Vec<Vector3<f64>> = reference.iter().map(|p| 1.1 * p + Vector3::new(0.0, 20.0, 0.0)).collect();
    println!("MPJPE    {:.2} mm", mpjpe(&pred, &reference)?);
    println!("PA-MPJPE {:.2} mm", pa_mpjpe(&pred, &reference)?);

    let kp: Vec<Vector2<f64>> = vec![[0.0, 0.0], [200.0, 0.0], [0.0, 100.0], [200.0, 100.0]]
        .into_iter()
        .map(Vector2::from)
        .collect();
    let noisy: Vec<_> = kp.iter().enumerate().map(|(i, p)| p + Vector2::new(4.0 * i as f64, 0.0)).collect();
    for t in [0.01, 0.05, 0.1] {
        println!("PCK@{t}: {:.2}", pck(&noisy, &kp, t)?);
    }
    Ok(())
}
