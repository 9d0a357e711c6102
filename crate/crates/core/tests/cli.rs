mod common;

use common::{aionfit, aionfit_ok};

#[test]
fn every_subcommand_has_help() {
    for sub in ["fit", "metrics", "synth", "export-mesh", "package", "filter-faces", "toy-model"] {
        let o = aionfit(&[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn missing_model_flag_exits_with_usage_error() {
    let o = aionfit(&["fit", "--joint-map", "m.json", "--detections", "d.json", "--cameras", "c.json", "--out", "o.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--model"));
    let o = aionfit(&["synth", "--joint-map", "m.json", "--out-dir", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--model"));
}

#[test]
fn runtime_errors_exit_one_with_a_category() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json").display().to_string();
    let o = aionfit(&["filter-faces", "--detections", &missing, "--out", &missing]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error [io]"));
}

#[test]
fn synth_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    aionfit_ok(&["toy-model", "--out-model", &p("model.json"), "--out-joint-map", &p("map.json")]);
    for out in ["a", "b"] {
        aionfit_ok(&["synth", "--model", &p("model.json"), "--joint-map", &p("map.json"), "--out-dir", &p(out), "--seed", "7"]);
    }
    for file in ["detections.json", "cameras.json", "truth.json"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn pipeline_fits_and_packages() {
    let dir = tempfile::tempdir().unwrap();
    let m = common::cli_pipeline(dir.path(), 3);
    assert!(m["mpjpe"] < 10.0, "{m:?}");
    assert!(m["reprojection_residual"] < 0.5, "{m:?}");

    let p = |name: &str| dir.path().join(name).display().to_string();
    let out = aionfit_ok(&["export-mesh", "--model", &p("model.json"), "--results", &p("fit.json"), "--out-dir", &p("meshes")]);
    assert!(out.contains("wrote 30 mesh(es)"), "{out}");
    assert!(dir.path().join("meshes/t0_f00029.obj").is_file());

    let out = aionfit_ok(&["package", "--results", &p("fit.json"), "--out", &p("pkg"), "--model", &p("model.json")]);
    assert!(out.contains("packaged 1 sequence(s)"), "{out}");
    assert!(dir.path().join("pkg/sequences/fit.json").is_file());

    let out = aionfit_ok(&["filter-faces", "--detections", &p("seq/detections.json"), "--out", &p("faces.json")]);
    assert!(out.is_empty(), "synthetic faces are fully confident: {out}");
}
