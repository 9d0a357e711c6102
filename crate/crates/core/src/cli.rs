//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 2 for usage errors, 1 for runtime failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::body_model::BodyModel;
use crate::dataio::files::{
    load, load_detections, load_model, model_hash, save, CamerasFile, ConfigFile, DetectionsFile, JointMapFile,
    ModelFile, ResultsFile,
};
use crate::dataio::obj::export_obj;
use crate::dataio::package::{package_dataset, PackageOptions, DEFAULT_LICENSE_NOTE};
use crate::dataio::synth::{synth_generate, CameraPath, Scenario};
use crate::dataio::{filter_by_face_confidence, FACE_CONFIDENCE_FLOOR};
use crate::error::{Error, Result};
use crate::fitter::{FitConfig, Fitter};
use crate::metrics::{sequence_report, MetricEntry};
use crate::objective::{PosePriorKind, RobustScale};

/// Environment variable consulted when `--model` is not given.
pub const MODEL_ENV: &str = "AIONFIT_MODEL";

#[derive(Parser, Debug)]
#[command(name = "aionfit", version, about = "Fit an adult/child body model to 2D keypoint tracks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

// parsed once per process; boxing the large variant buys nothing
#[allow(clippy::large_enum_variant)]
#[derive(Subcommand, Debug)]
enum Command {
    /// Fit detections and cameras; write a results file.
    Fit(FitArgs),
    /// Compare a results file against a reference results file.
    Metrics(MetricsArgs),
    /// Generate a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Write one OBJ mesh per track and frame of a results file.
    ExportMesh(ExportMeshArgs),
    /// Bundle results files into a dataset package.
    Package(PackageArgs),
    /// Drop frames whose facial keypoints are not confidently detected.
    FilterFaces(FilterFacesArgs),
    /// Write the built-in toy humanoid model and its joint map.
    ToyModel(ToyModelArgs),
}

#[derive(Args, Debug)]
struct ModelArg {
    /// Model file (aionfit-model/1).
    #[arg(long, env = MODEL_ENV, required = true)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Joint map file (aionfit-jointmap/1).
    #[arg(long)]
    joint_map: PathBuf,
    /// Detections file (aionfit-detections/1).
    #[arg(long)]
    detections: PathBuf,
    /// Cameras file (aionfit-cameras/1).
    #[arg(long)]
    cameras: PathBuf,
    /// Output results file.
    #[arg(long)]
    out: PathBuf,
    /// Base configuration (aionfit-config/1); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RobustScaleArg {
    Unit,
    PixelSquared,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PosePriorArg {
    GaussianParameterSpace,
    ExternalLatent,
}

/// One flag per configuration field.
#[derive(Args, Debug, Default)]
struct ConfigOverrides {
    #[arg(long)]
    stage1_lambda_data: Option<f64>,
    #[arg(long)]
    stage1_lambda_smooth: Option<f64>,
    #[arg(long)]
    stage1_lambda_pose: Option<f64>,
    #[arg(long)]
    stage1_lambda_beta: Option<f64>,
    #[arg(long)]
    stage1_iterations: Option<usize>,
    #[arg(long)]
    stage2_lambda_data: Option<f64>,
    #[arg(long)]
    stage2_lambda_smooth: Option<f64>,
    #[arg(long)]
    stage2_lambda_pose: Option<f64>,
    #[arg(long)]
    stage2_lambda_beta: Option<f64>,
    #[arg(long)]
    stage2_iterations: Option<usize>,
    #[arg(long)]
    lbfgs_step_scale: Option<f64>,
    #[arg(long)]
    lbfgs_history: Option<usize>,
    #[arg(long)]
    lbfgs_grad_tol: Option<f64>,
    #[arg(long)]
    lbfgs_max_evals_per_iter: Option<usize>,
    #[arg(long)]
    alpha_init: Option<f64>,
    #[arg(long)]
    camera_scale_init: Option<f64>,
    /// Geman-McClure scale in pixels.
    #[arg(long)]
    robust_sigma: Option<f64>,
    #[arg(long, value_enum)]
    robust_scale: Option<RobustScaleArg>,
    #[arg(long)]
    confidence_floor: Option<f64>,
    #[arg(long, value_enum)]
    pose_prior: Option<PosePriorArg>,
    #[arg(long)]
    stature_coupling: Option<bool>,
    #[arg(long)]
    alpha_endpoint_search: Option<bool>,
    #[arg(long)]
    gradient_check: Option<bool>,
}

impl ConfigOverrides {
    fn apply(&self, c: &mut FitConfig) {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v.into(); })*
            };
        }
        set!(
            stage1_lambda_data => stage1.lambda_data,
            stage1_lambda_smooth => stage1.lambda_smooth,
            stage1_lambda_pose => stage1.lambda_pose,
            stage1_lambda_beta => stage1.lambda_beta,
            stage1_iterations => stage1.iterations,
            stage2_lambda_data => stage2.lambda_data,
            stage2_lambda_smooth => stage2.lambda_smooth,
            stage2_lambda_pose => stage2.lambda_pose,
            stage2_lambda_beta => stage2.lambda_beta,
            stage2_iterations => stage2.iterations,
            lbfgs_step_scale => lbfgs.step_scale,
            lbfgs_history => lbfgs.history,
            lbfgs_grad_tol => lbfgs.grad_tol,
            lbfgs_max_evals_per_iter => lbfgs.max_evals_per_iter,
            alpha_init => alpha_init,
            camera_scale_init => camera_scale_init,
            robust_sigma => robust.sigma,
            confidence_floor => confidence_floor,
            stature_coupling => stature_coupling,
            alpha_endpoint_search => alpha_endpoint_search,
            gradient_check => gradient_check,
        );
        if let Some(s) = self.robust_scale {
            c.robust.scale = match s {
                RobustScaleArg::Unit => RobustScale::Unit,
                RobustScaleArg::PixelSquared => RobustScale::PixelSquared,
            };
        }
        if let Some(p) = self.pose_prior {
            c.pose_prior = match p {
                PosePriorArg::GaussianParameterSpace => PosePriorKind::GaussianParameterSpace,
                PosePriorArg::ExternalLatent => PosePriorKind::ExternalLatent,
            };
        }
    }
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Fitted results file.
    #[arg(long)]
    pred: PathBuf,
    /// Reference results file (e.g. synthetic ground truth).
    #[arg(long)]
    reference: PathBuf,
    /// Print JSON instead of aligned text.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CameraPathArg {
    Static,
    Pan,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    joint_map: PathBuf,
    /// Directory receiving detections.json, cameras.json and truth.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = Scenario::default().frames)]
    frames: usize,
    /// True interpolation weight of each track (repeat for several tracks).
    #[arg(long = "alpha", default_values_t = Scenario::default().alphas)]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = Scenario::default().noise_px)]
    noise_px: f64,
    #[arg(long, value_enum, default_value_t = CameraPathArg::Pan)]
    camera: CameraPathArg,
    /// Peak joint-angle amplitude (radians).
    #[arg(long, default_value_t = Scenario::default().pose_amplitude)]
    pose_amplitude: f64,
    /// Peak horizontal root drift (meters).
    #[arg(long, default_value_t = Scenario::default().root_drift)]
    root_drift: f64,
    #[arg(long, default_value_t = Scenario::default().beta_scale)]
    beta_scale: f64,
    /// Distance to the people (meters).
    #[arg(long, default_value_t = Scenario::default().depth)]
    depth: f64,
}

#[derive(Args, Debug)]
struct ExportMeshArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct PackageArgs {
    /// Results files; each file's stem becomes its sequence id.
    #[arg(long = "results", required = true, num_args = 1..)]
    results: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also export meshes with this model (its hash must match).
    #[arg(long, env = MODEL_ENV)]
    model: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_LICENSE_NOTE)]
    license_note: String,
}

#[derive(Args, Debug)]
struct FilterFacesArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = FACE_CONFIDENCE_FLOOR)]
    floor: f64,
}

#[derive(Args, Debug)]
struct ToyModelArgs {
    #[arg(long)]
    out_model: PathBuf,
    #[arg(long)]
    out_joint_map: PathBuf,
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error [{}]: {e}", e.category());
            1
        }
    }
}

fn model_and_hash(path: &Path) -> Result<(BodyModel, String)> {
    let file: ModelFile = load(path)?;
    let hash = file.hash();
    Ok((file.to_model()?, hash))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn print_metrics(out: &mut dyn Write, entries: &[MetricEntry], json: bool) -> Result<()> {
    let text = if json {
        let mut s = serde_json::to_string_pretty(entries).map_err(|e| Error::Input(e.to_string()))?;
        s.push('\n');
        s
    } else {
        entries.iter().map(|m| format!("{:<22} {:>14.6} {}\n", m.name, m.value, m.units)).collect()
    };
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Fit(a) => {
            let (model, hash) = model_and_hash(&a.model.model)?;
            let jm: JointMapFile = load(&a.joint_map)?;
            let joint_map = jm.resolve(&model)?;
            let det = load_detections(&a.detections)?;
            if det.convention != jm.convention {
                return Err(Error::Config(format!(
                    "detections use `{}` but the joint map is for `{}`",
                    det.convention, jm.convention
                )));
            }
            let cams = load::<CamerasFile>(&a.cameras)?.to_track()?;
            let mut config = match &a.config {
                Some(p) => load::<ConfigFile>(p)?.config,
                None => FitConfig::default(),
            };
            a.overrides.apply(&mut config);
            let fitter = Fitter::new(&model, &joint_map, config)?;
            let report = fitter.fit(&det.tracks, &cams, None)?;
            let results = ResultsFile::from_fit(&report, &det.tracks, &hash)?;
            save(&results, &a.out)?;
            let _ = writeln!(
                out,
                "fitted {} track(s), mean reprojection residual {:.4} px",
                report.tracks.len(),
                report.mean_reprojection_residual()
            );
            Ok(())
        }
        Command::Metrics(a) => {
            let (model, hash) = model_and_hash(&a.model.model)?;
            let pred: ResultsFile = load(&a.pred)?;
            let reference: ResultsFile = load(&a.reference)?;
            pred.check_model(&model, &hash)?;
            reference.check_model(&model, &hash)?;
            let (mut ps, mut rs) = (Vec::new(), Vec::new());
            for (t, s) in pred.tracks.iter().zip(pred.states()) {
                let (rt, r) = reference
                    .tracks
                    .iter()
                    .zip(reference.states())
                    .find(|(rt, _)| rt.id == t.id)
                    .ok_or_else(|| Error::Input(format!("reference has no track {}", t.id)))?;
                if rt.frames.iter().map(|f| f.frame).ne(t.frames.iter().map(|f| f.frame)) {
                    return Err(Error::Input(format!("track {}: frame indices differ from the reference", t.id)));
                }
                ps.push(s);
                rs.push(r);
            }
            let mut entries = sequence_report(&model, &ps, &rs)?;
            if let Some(r) = pred.diagnostics.mean_residual_px {
                entries.push(MetricEntry::new("reprojection_residual", r, "px"));
            }
            print_metrics(out, &entries, a.json)
        }
        Command::Synth(a) => {
            let (model, hash) = model_and_hash(&a.model.model)?;
            let jm: JointMapFile = load(&a.joint_map)?;
            let joint_map = jm.resolve(&model)?;
            let scenario = Scenario {
                frames: a.frames,
                alphas: a.alphas,
                noise_px: a.noise_px,
                camera: match a.camera {
                    CameraPathArg::Static => CameraPath::Static,
                    CameraPathArg::Pan => CameraPath::Pan,
                },
                pose_amplitude: a.pose_amplitude,
                root_drift: a.root_drift,
                beta_scale: a.beta_scale,
                depth: a.depth,
                ..Scenario::default()
            };
            let s = synth_generate(&model, &joint_map, &jm.convention, &scenario, a.seed)?;
            ensure_dir(&a.out_dir)?;
            save(&DetectionsFile::from_detections(&s.detections), a.out_dir.join("detections.json"))?;
            save(&CamerasFile::from_track(&s.cameras), a.out_dir.join("cameras.json"))?;
            let truth = ResultsFile::from_states(&s.truth, &s.detections.tracks, s.cameras.scale, &hash)?;
            save(&truth, a.out_dir.join("truth.json"))?;
            let _ = writeln!(out, "wrote {} track(s) x {} frame(s) to {}", s.truth.len(), a.frames, a.out_dir.display());
            Ok(())
        }
        Command::ExportMesh(a) => {
            let model = load_model(&a.model.model)?;
            let results: ResultsFile = load(&a.results)?;
            results.check_model(&model, &model_hash(&model))?;
            ensure_dir(&a.out_dir)?;
            let mut n = 0;
            for (t, s) in results.tracks.iter().zip(results.states()) {
                for (rf, fs) in t.frames.iter().zip(&s.frames) {
                    let mesh = model.forward(&s.shape, &fs.pose())?;
                    let path = a.out_dir.join(format!("t{}_f{:05}.obj", t.id, rf.frame));
                    export_obj(&mesh, &fs.translation, model.faces(), path)?;
                    n += 1;
                }
            }
            let _ = writeln!(out, "wrote {n} mesh(es) to {}", a.out_dir.display());
            Ok(())
        }
        Command::Package(a) => {
            let results = a
                .results
                .iter()
                .map(|p| {
                    let id = p
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .ok_or_else(|| Error::Input(format!("cannot derive a sequence id from {}", p.display())))?;
                    Ok((id.to_string(), load::<ResultsFile>(p)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let model = a.model.as_deref().map(load_model).transpose()?;
            let hash = match &model {
                Some(m) => model_hash(m),
                None => results[0].1.model_hash.clone(),
            };
            let options = PackageOptions {
                license_note: a.license_note,
                meshes: model.as_ref(),
            };
            let pkg = package_dataset(&results, &hash, &a.out, &options)?;
            let _ = writeln!(out, "packaged {} sequence(s) into {}", pkg.manifest.sequences.len(), pkg.root.display());
            Ok(())
        }
        Command::FilterFaces(a) => {
            let det = load_detections(&a.detections)?;
            let filtered = filter_by_face_confidence(&det, a.floor)?;
            save(&DetectionsFile::from_detections(&filtered.detections), &a.out)?;
            for id in &filtered.emptied {
                let _ = writeln!(out, "track {id}: no frame passed the face filter");
            }
            Ok(())
        }
        Command::ToyModel(a) => {
            let model = crate::toy::humanoid();
            save(&ModelFile::from_data(model.data()), &a.out_model)?;
            save(&JointMapFile::new("coco17", &crate::toy::HUMANOID_COCO_MAP), &a.out_joint_map)?;
            let _ = writeln!(out, "model hash {}", model_hash(&model));
            Ok(())
        }
    }
}
