//! JSON manifest plus one little-endian blob per checkpoint.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{ParamStore, Tensor};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    blob: String,
    meta: serde_json::Value,
    tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected a {expected} checkpoint, found {found}")]
    Kind { expected: String, found: String },
    #[error("tensor {name}: {reason}")]
    Tensor { name: String, reason: String },
    #[error("missing tensor {0}")]
    Missing(String),
}

/// Named tensors plus free-form metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push_store(&mut self, prefix: &str, ps: &ParamStore<T>) {
        for (n, t) in ps.iter() {
            self.tensors.push((format!("{prefix}{n}"), t.clone()));
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Overwrites every parameter of `ps` from `{prefix}{name}`.
    pub fn fill_store(&self, prefix: &str, ps: &mut ParamStore<T>) -> Result<(), CheckpointError> {
        let ids: Vec<_> = ps.ids().collect();
        for id in ids {
            let name = format!("{prefix}{}", ps.name(id));
            let t = self.get(&name).ok_or_else(|| CheckpointError::Missing(name.clone()))?;
            if t.shape() != ps.get(id).shape() {
                return Err(CheckpointError::Tensor {
                    name,
                    reason: format!("shape {:?}, model expects {:?}", t.shape(), ps.get(id).shape()),
                });
            }
            *ps.get_mut(id) = t.clone();
        }
        Ok(())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(CheckpointError::Kind {
                expected: kind.into(),
                found: self.kind.clone(),
            })
        }
    }
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `path` (manifest) and `path` with a `.bin` extension (blob).
pub fn save_checkpoint<T: Scalar>(path: &Path, ckpt: &Checkpoint<T>) -> Result<(), CheckpointError> {
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(ckpt.tensors.len());
    for (name, t) in &ckpt.tensors {
        entries.push(ManifestEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: T::DTYPE.into(),
            byte_offset: blob.len(),
        });
        for &v in t.data() {
            v.write_le(&mut blob);
        }
    }
    let bp = blob_path(path);
    let manifest = Manifest {
        kind: ckpt.kind.clone(),
        blob: bp.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        meta: ckpt.meta.clone(),
        tensors: entries,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    fs::write(&bp, &blob).map_err(io(&bp))?;
    fs::write(path, serde_json::to_string_pretty(&manifest)?).map_err(io(path))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, CheckpointError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let bp = path.with_file_name(&manifest.blob);
    let blob = fs::read(&bp).map_err(io(&bp))?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in manifest.tensors {
        if e.dtype != T::DTYPE {
            return Err(CheckpointError::Tensor {
                name: e.name,
                reason: format!("dtype {} but {} requested", e.dtype, T::DTYPE),
            });
        }
        let n: usize = e.shape.iter().product();
        let end = e.byte_offset + n * T::BYTES;
        if end > blob.len() {
            return Err(CheckpointError::Tensor {
                name: e.name,
                reason: "extends past the end of the blob".into(),
            });
        }
        let data = blob[e.byte_offset..end].chunks_exact(T::BYTES).map(T::read_le).collect();
        tensors.push((e.name, Tensor::new(e.shape, data)));
    }
    Ok(Checkpoint {
        kind: manifest.kind,
        meta: manifest.meta,
        tensors,
    })
}
