//! Run configuration file: one JSON document with a section per component.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gan::GanConfig;
use crate::geometry::GeometryConfig;
use crate::nn::{ModelConfig, TrainConfig};
use crate::rre::RreConfig;
use crate::synth::SynthConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("configured path {0} does not exist")]
    MissingPath(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: None,
            checkpoints: PathBuf::from("checkpoints"),
            reports: PathBuf::from("reports"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub rre: RreConfig,
    pub gan: GanConfig,
    pub geometry: GeometryConfig,
    pub synth: SynthConfig,
    pub paths: Paths,
    pub seed: u64,
}

impl RunConfig {
    /// Parses, fills missing sections with defaults, applies the shared
    /// settings and checks every section.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if let Some(d) = &cfg.paths.dataset {
            if !d.exists() {
                return Err(ConfigError::MissingPath(d.clone()));
            }
        }
        cfg.finish()
    }

    /// Propagates geometry and sequence length into the sections that need
    /// them, then validates.
    pub fn finish(mut self) -> Result<Self, ConfigError> {
        self.rre.geometry = self.geometry;
        self.synth.geometry = self.geometry;
        self.synth.seq_len = self.model.seq_len;
        self.model.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.rre.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.gan.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.geometry.resolution == 0 || self.geometry.arc_segments == 0 || self.geometry.n_points == 0 {
            return Err(ConfigError::Invalid("geometry sizes must be positive".into()));
        }
        Ok(self)
    }

    /// Replaces the run seed and every seed derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.rre.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_uses_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"seed": 4, "rre": {"p_line": 0.5}, "model": {"seq_len": 20}}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.rre.p_line, 0.5);
        assert_eq!(cfg.rre.p_ext, 0.3);
        assert_eq!(cfg.synth.seq_len, 20);
        assert_eq!(cfg.model.d_model, 256);
    }

    #[test]
    fn bad_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"rre": {"p_swap": 2.0}}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(ConfigError::Invalid(_))));
        std::fs::write(&p, r#"{"paths": {"dataset": "/nonexistent/x.json"}}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(ConfigError::MissingPath(_))));
        std::fs::write(&p, r#"{"seed": "x"}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(ConfigError::Json { .. })));
    }
}
