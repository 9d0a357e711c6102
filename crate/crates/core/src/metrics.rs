//! Evaluation metrics and annotation-quality losses.
//!
//! Units: 3D joints in millimeters, 2D keypoints in pixels, heights in meters.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Input(format!("{what}: {a} predicted vs {b} reference entries")));
    }
    Ok(())
}

/// Root-aligned mean per-joint position error. Joint 0 is the root.
pub fn mpjpe(pred: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<f64> {
    same_len(pred.len(), reference.len(), "mpjpe")?;
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("mpjpe of zero joints".into()));
    }
    let (rp, rr) = (pred[0], reference[0]);
    let sum: f64 = pred.iter().zip(reference).map(|(p, r)| ((p - rp) - (r - rr)).norm()).sum();
    Ok(sum / pred.len() as f64)
}

/// MPJPE after a similarity (rotation, translation, scale) Procrustes fit of
/// the prediction onto the reference.
pub fn pa_mpjpe(pred: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<f64> {
    same_len(pred.len(), reference.len(), "pa_mpjpe")?;
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("pa_mpjpe of zero joints".into()));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<Vector3<f64>>() / n;
    let mr = reference.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_p = 0.0;
    for (p, r) in pred.iter().zip(reference) {
        let (dp, dr) = (p - mp, r - mr);
        cov += dr * dp.transpose();
        var_p += dp.norm_squared();
    }
    if var_p == 0.0 {
        return Err(Error::UndefinedMetric("pa_mpjpe: prediction has no spread".into()));
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rot = u * d * vt;
    let scale = (svd.singular_values.component_mul(&d.diagonal())).sum() / var_p;
    let sum: f64 = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (scale * rot * (p - mp) + mr - r).norm())
        .sum();
    Ok(sum / n)
}

/// Fraction of keypoints within `threshold_fraction` times the longest side
/// of the reference bounding box.
pub fn pck(pred: &[Vector2<f64>], reference: &[Vector2<f64>], threshold_fraction: f64) -> Result<f64> {
    same_len(pred.len(), reference.len(), "pck")?;
    if !(threshold_fraction > 0.0) {
        return Err(Error::Domain(format!("pck threshold fraction {threshold_fraction} must be positive")));
    }
    if reference.is_empty() {
        return Err(Error::UndefinedMetric("pck of zero keypoints".into()));
    }
    let (lo, hi) = reference.iter().fold(
        (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let norm = (hi - lo).max();
    if !(norm > 0.0) {
        return Err(Error::UndefinedMetric("pck: reference bounding box has zero size".into()));
    }
    let thr = threshold_fraction * norm;
    let hits = pred.iter().zip(reference).filter(|(p, r)| (*p - *r).norm() <= thr).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// One subject's reference and predicted height in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightPair {
    pub reference: f64,
    pub predicted: f64,
}

impl HeightPair {
    pub fn new(reference: f64, predicted: f64) -> Self {
        HeightPair { reference, predicted }
    }
}

/// Average signed height difference `mean(H* − H)` in meters.
pub fn ahd(pairs: &[HeightPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("ahd of zero subjects".into()));
    }
    Ok(pairs.iter().map(|p| p.reference - p.predicted).sum::<f64>() / pairs.len() as f64)
}

/// Average signed percentage height difference `(100/N)·Σ(H* − H)/H*`.
/// Negative values mean the heights are over-predicted.
pub fn aphd(pairs: &[HeightPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("aphd of zero subjects".into()));
    }
    if let Some(p) = pairs.iter().find(|p| !(p.reference > 0.0)) {
        return Err(Error::Domain(format!("reference height {} must be positive", p.reference)));
    }
    Ok(100.0 * pairs.iter().map(|p| (p.reference - p.predicted) / p.reference).sum::<f64>() / pairs.len() as f64)
}

/// `‖θ − θ*‖² + ‖β − β*‖²` over flattened parameter vectors.
pub fn param_l2(pred_beta: &[f64], pred_theta: &[f64], ref_beta: &[f64], ref_theta: &[f64]) -> Result<f64> {
    same_len(pred_beta.len(), ref_beta.len(), "param_l2 beta")?;
    same_len(pred_theta.len(), ref_theta.len(), "param_l2 theta")?;
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    Ok(sq(pred_theta, ref_theta) + sq(pred_beta, ref_beta))
}

/// Elementwise L1 distance between 3D keypoint sets.
pub fn kp_l1_3d(pred: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<f64> {
    same_len(pred.len(), reference.len(), "kp_l1_3d")?;
    Ok(pred.iter().zip(reference).map(|(p, r)| (p - r).abs().sum()).sum())
}

/// Elementwise L1 distance between projected and target 2D keypoints,
/// counting only entries marked visible.
pub fn kp_l1_2d(projected: &[Vector2<f64>], target: &[Vector2<f64>], visible: &[bool]) -> Result<f64> {
    same_len(projected.len(), target.len(), "kp_l1_2d")?;
    same_len(visible.len(), target.len(), "kp_l1_2d visibility")?;
    Ok(projected
        .iter()
        .zip(target)
        .zip(visible)
        .filter(|(_, v)| **v)
        .map(|((p, t), _)| (p - t).abs().sum())
        .sum())
}

/// One line of a metrics report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub name: String,
    pub value: f64,
    pub units: String,
}

impl MetricEntry {
    pub fn new(name: impl Into<String>, value: f64, units: impl Into<String>) -> Self {
        MetricEntry {
            name: name.into(),
            value,
            units: units.into(),
        }
    }
}

/// Sequence-level comparison of fitted and reference states (matched
/// track by track, frame by frame): MPJPE and PA-MPJPE over every frame,
/// height differences over tracks, and parameter errors.
pub fn sequence_report(
    model: &crate::body_model::BodyModel,
    pred: &[crate::fitter::PersonState],
    reference: &[crate::fitter::PersonState],
) -> Result<Vec<MetricEntry>> {
    same_len(pred.len(), reference.len(), "tracks")?;
    let (mut mp, mut pa, mut l2, mut frames) = (0.0, 0.0, 0.0, 0usize);
    let mut heights = Vec::with_capacity(pred.len());
    let mut alpha_err = 0.0;
    for (p, r) in pred.iter().zip(reference) {
        same_len(p.frames.len(), r.frames.len(), "frames")?;
        let pj = crate::objective::person_world_joints(model, p)?;
        let rj = crate::objective::person_world_joints(model, r)?;
        for ((a, b), (fp, fr)) in pj.iter().zip(&rj).zip(p.frames.iter().zip(&r.frames)) {
            let mm = |v: &[Vector3<f64>]| v.iter().map(|x| x * 1000.0).collect::<Vec<_>>();
            let (a, b) = (mm(a), mm(b));
            mp += mpjpe(&a, &b)?;
            pa += pa_mpjpe(&a, &b)?;
            let flat = |f: &crate::fitter::FrameState| f.body_pose.iter().flat_map(|v| v.iter().copied()).collect::<Vec<_>>();
            l2 += param_l2(&p.shape.beta, &flat(fp), &r.shape.beta, &flat(fr))?;
            frames += 1;
        }
        heights.push(HeightPair::new(model.neutral_height(&r.shape), model.neutral_height(&p.shape)));
        alpha_err += (p.shape.alpha - r.shape.alpha).abs();
    }
    if frames == 0 {
        return Err(Error::UndefinedMetric("no frames to compare".into()));
    }
    let n = frames as f64;
    Ok(vec![
        MetricEntry::new("mpjpe", mp / n, "mm"),
        MetricEntry::new("pa_mpjpe", pa / n, "mm"),
        MetricEntry::new("ahd", ahd(&heights)?, "m"),
        MetricEntry::new("aphd", aphd(&heights)?, "%"),
        MetricEntry::new("alpha_abs_error", alpha_err / pred.len() as f64, "1"),
        MetricEntry::new("param_l2", l2 / n, "1"),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v3(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn mpjpe_single_offset() {
        let reference: Vec<_> = (0..10).map(|i| v3(i as f64, 2.0 * i as f64, 0.0)).collect();
        let mut pred = reference.clone();
        pred[4] += v3(3.0, 4.0, 0.0);
        assert!((mpjpe(&pred, &reference).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(mpjpe(&reference, &reference).unwrap(), 0.0);
        assert!(mpjpe(&pred[..3], &reference).is_err());
    }

    #[test]
    fn pa_mpjpe_removes_similarity() {
        let reference = vec![v3(0.0, 0.0, 0.0), v3(100.0, 0.0, 0.0), v3(0.0, 200.0, 0.0), v3(10.0, 20.0, 300.0)];
        let rot = crate::rotation::axis_angle_to_rotation(&v3(0.3, -0.2, 0.9));
        let pred: Vec<_> = reference.iter().map(|p| 1.7 * rot * p + v3(5.0, -3.0, 8.0)).collect();
        assert!(pa_mpjpe(&pred, &reference).unwrap() < 1e-9);
    }

    #[test]
    fn pck_cases() {
        let reference = vec![Vector2::new(0.0, 0.0), Vector2::new(100.0, 0.0), Vector2::new(0.0, 50.0), Vector2::new(100.0, 50.0)];
        assert_eq!(pck(&reference, &reference, 0.05).unwrap(), 1.0);
        // threshold = 0.05 · 100 = 5 px
        let off = |d: f64| Vector2::new(d, 0.0);
        let pred = vec![reference[0] + off(4.0), reference[1] + off(5.0), reference[2] + off(6.0), reference[3] + off(50.0)];
        assert_eq!(pck(&pred, &reference, 0.05).unwrap(), 0.5);
        let far: Vec<_> = reference.iter().map(|p| p + off(10.0)).collect();
        assert_eq!(pck(&far, &reference, 0.05).unwrap(), 0.0);
        let point = vec![Vector2::new(1.0, 1.0); 3];
        assert!(matches!(pck(&point, &point, 0.05), Err(Error::UndefinedMetric(_))));
        assert!(pck(&reference, &reference, 0.0).is_err());
    }

    #[test]
    fn height_metrics() {
        assert!((ahd(&[HeightPair::new(1.33, 1.46)]).unwrap() + 0.13).abs() < 1e-12);
        assert!(ahd(&[HeightPair::new(1.0, 1.1), HeightPair::new(1.0, 0.9)]).unwrap().abs() < 1e-12);
        assert!((aphd(&[HeightPair::new(1.33, 1.46)]).unwrap() + 9.774).abs() < 1e-3);
        assert!((aphd(&[HeightPair::new(1.2, 0.6)]).unwrap() - 50.0).abs() < 1e-12);
        assert_eq!(aphd(&[HeightPair::new(1.2, 1.2)]).unwrap(), 0.0);
        assert!(aphd(&[HeightPair::new(0.0, 1.0)]).is_err());
        assert!(ahd(&[]).is_err());
    }

    #[test]
    fn losses() {
        assert_eq!(param_l2(&[0.1; 10], &[0.2; 6], &[0.1; 10], &[0.2; 6]).unwrap(), 0.0);
        assert!((param_l2(&[0.0; 10], &[1.0, 0.0, 0.0], &[0.0; 10], &[0.0; 3]).unwrap() - 1.0).abs() < 1e-15);
        let a = vec![v3(1.0, 2.0, 3.0); 2];
        let mut b = a.clone();
        b[1].y += 0.2;
        assert!((kp_l1_3d(&a, &b).unwrap() - 0.2).abs() < 1e-12);
        let p = vec![Vector2::new(10.0, 10.0), Vector2::new(3.0, 4.0)];
        let t = vec![Vector2::new(11.0, 12.0), Vector2::new(0.0, 0.0)];
        assert_eq!(kp_l1_2d(&p, &t, &[true, false]).unwrap(), 3.0);
        assert_eq!(kp_l1_2d(&p, &p, &[true, true]).unwrap(), 0.0);
    }
}
