//! Dataset packages: fitted parameters and optional meshes, never imagery.
//!
//! Layout:
//!
//! ```text
//! <root>/manifest.json
//! <root>/sequences/<id>.json          results files
//! <root>/meshes/<id>/t<track>_f<frame>.obj   optional
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::files::{load, save, ResultsFile, SchemaFile};
use super::obj::export_obj;
use crate::body_model::BodyModel;
use crate::error::{Error, Result};
use crate::fitter::PersonState;

pub const DEFAULT_LICENSE_NOTE: &str =
    "Body model parameters and meshes only; no source imagery is included.";

/// Leading bytes of common image formats.
const IMAGE_SIGNATURES: [(&str, &[u8]); 7] = [
    ("PNG", b"\x89PNG\r\n\x1a\n"),
    ("JPEG", b"\xff\xd8\xff"),
    ("GIF", b"GIF87a"),
    ("GIF", b"GIF89a"),
    ("BMP", b"BM"),
    ("TIFF", b"II*\x00"),
    ("TIFF", b"MM\x00*"),
];

/// Name of the image format `bytes` starts with, if any.
pub fn image_signature(bytes: &[u8]) -> Option<&'static str> {
    if bytes.len() >= 12 && &bytes[..4] == b"RIFF" && &bytes[8..12] == b"WEBP" {
        return Some("WebP");
    }
    IMAGE_SIGNATURES.iter().find(|(_, sig)| bytes.starts_with(sig)).map(|(name, _)| *name)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub id: String,
    pub file: String,
    pub frame_count: usize,
    pub track_count: usize,
    pub mesh_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageManifest {
    pub schema: String,
    pub model_hash: String,
    pub license_note: String,
    pub sequences: Vec<SequenceEntry>,
}

impl SchemaFile for PackageManifest {
    const SCHEMA: &'static str = "aionfit-package/1";

    fn schema(&self) -> &str {
        &self.schema
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetPackage {
    pub root: PathBuf,
    pub manifest: PackageManifest,
}

pub struct PackageOptions<'m> {
    pub license_note: String,
    /// Export one OBJ per track and frame with this model.
    pub meshes: Option<&'m BodyModel>,
}

impl Default for PackageOptions<'_> {
    fn default() -> Self {
        PackageOptions {
            license_note: DEFAULT_LICENSE_NOTE.into(),
            meshes: None,
        }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

fn write_meshes(model: &BodyModel, results: &ResultsFile, dir: &Path) -> Result<usize> {
    io(dir, std::fs::create_dir_all(dir))?;
    let mut count = 0;
    for (track, state) in results.tracks.iter().zip(results.states()) {
        let PersonState { frames, shape } = state;
        for (rf, fs) in track.frames.iter().zip(&frames) {
            let mesh = model.forward(&shape, &fs.pose())?;
            export_obj(&mesh, &fs.translation, model.faces(), dir.join(format!("t{}_f{:05}.obj", track.id, rf.frame)))?;
            count += 1;
        }
    }
    Ok(count)
}

/// Writes `results` (named by sequence id) into `out` and verifies the
/// result. `out` must be empty, absent, or an earlier package, which is
/// replaced.
pub fn package_dataset(
    results: &[(String, ResultsFile)],
    model_hash: &str,
    out: impl AsRef<Path>,
    options: &PackageOptions<'_>,
) -> Result<DatasetPackage> {
    let out = out.as_ref();
    if results.is_empty() {
        return Err(Error::Input("nothing to package".into()));
    }
    for (id, r) in results {
        if !valid_id(id) {
            return Err(Error::Input(format!("sequence id `{id}` must be non-empty [A-Za-z0-9_-]")));
        }
        if r.model_hash != model_hash {
            return Err(Error::HashMismatch {
                expected: model_hash.into(),
                found: r.model_hash.clone(),
            });
        }
    }
    let mut ids: Vec<&str> = results.iter().map(|(id, _)| id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Input("duplicate sequence id".into()));
    }
    if let Some(m) = options.meshes {
        let hash = super::files::model_hash(m);
        if hash != model_hash {
            return Err(Error::HashMismatch {
                expected: model_hash.into(),
                found: hash,
            });
        }
    }

    if out.exists() {
        let is_package = out.join("manifest.json").is_file();
        let empty = io(out, std::fs::read_dir(out))?.next().is_none();
        if !is_package && !empty {
            return Err(Error::Package(format!("{} exists and is not a package", out.display())));
        }
        for sub in ["sequences", "meshes"] {
            let p = out.join(sub);
            if p.exists() {
                io(&p, std::fs::remove_dir_all(&p))?;
            }
        }
    }
    let seq_dir = out.join("sequences");
    io(&seq_dir, std::fs::create_dir_all(&seq_dir))?;

    let mut sequences = Vec::with_capacity(results.len());
    for (id, r) in results {
        let file = format!("sequences/{id}.json");
        save(r, out.join(&file))?;
        let mesh_count = match options.meshes {
            Some(m) => write_meshes(m, r, &out.join("meshes").join(id))?,
            None => 0,
        };
        sequences.push(SequenceEntry {
            id: id.clone(),
            file,
            frame_count: r.frame_count(),
            track_count: r.tracks.len(),
            mesh_count,
        });
    }
    let manifest = PackageManifest {
        schema: PackageManifest::SCHEMA.into(),
        model_hash: model_hash.into(),
        license_note: options.license_note.clone(),
        sequences,
    };
    save(&manifest, out.join("manifest.json"))?;
    verify_package(out)
}

fn walk(dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    for entry in io(dir, std::fs::read_dir(dir))? {
        let path = io(dir, entry)?.path();
        if path.is_dir() {
            walk(&path, files)?;
        } else {
            files.push(path);
        }
    }
    Ok(())
}

/// Checks manifest counts against the contents and rejects image payloads.
pub fn verify_package(root: impl AsRef<Path>) -> Result<DatasetPackage> {
    let root = root.as_ref();
    let manifest: PackageManifest = load(root.join("manifest.json"))?;
    let mut files = Vec::new();
    walk(root, &mut files)?;
    files.sort();
    for f in &files {
        let bytes = io(f, std::fs::read(f))?;
        if let Some(kind) = image_signature(&bytes) {
            return Err(Error::Package(format!("{} is a {kind} image", f.display())));
        }
    }
    for s in &manifest.sequences {
        let r: ResultsFile = load(root.join(&s.file))?;
        if r.model_hash != manifest.model_hash {
            return Err(Error::HashMismatch {
                expected: manifest.model_hash.clone(),
                found: r.model_hash,
            });
        }
        if r.frame_count() != s.frame_count || r.tracks.len() != s.track_count {
            return Err(Error::Package(format!("sequence `{}` does not match its manifest entry", s.id)));
        }
        let mesh_dir = root.join("meshes").join(&s.id);
        let meshes = files.iter().filter(|f| f.starts_with(&mesh_dir)).count();
        if meshes != s.mesh_count {
            return Err(Error::Package(format!(
                "sequence `{}` lists {} meshes, found {meshes}",
                s.id, s.mesh_count
            )));
        }
    }
    let listed = manifest.sequences.len();
    let present = files.iter().filter(|f| f.starts_with(root.join("sequences"))).count();
    if present != listed {
        return Err(Error::Package(format!("{present} sequence files for {listed} manifest entries")));
    }
    Ok(DatasetPackage {
        root: root.to_path_buf(),
        manifest,
    })
}

/// Reads back the sequences of a verified package, in manifest order.
pub fn load_package(root: impl AsRef<Path>) -> Result<(DatasetPackage, Vec<(String, ResultsFile)>)> {
    let package = verify_package(&root)?;
    let results = package
        .manifest
        .sequences
        .iter()
        .map(|s| Ok((s.id.clone(), load(package.root.join(&s.file))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((package, results))
}
