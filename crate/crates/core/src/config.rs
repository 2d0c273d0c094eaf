//! Run configuration: one serializable document whose digest identifies a
//! run. Every pipeline stage stamps this digest into its output directory so
//! mismatched stages are caught instead of silently combined.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::trainer::TrainConfig;

/// Channel statistics of the pretrained backbone family this pipeline
/// targets; overridable from the config file.
pub const DEFAULT_MEANS: [f32; 3] = [0.485, 0.456, 0.406];
pub const DEFAULT_STDS: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Minimum detector confidence for a frame to qualify (inclusive).
    pub threshold: f32,
    /// Cap on qualifying frames kept per video.
    pub max_qualifying: u32,
    /// Crop margin as a fraction of each bbox side.
    pub margin_fraction: f32,
    pub means: [f32; 3],
    pub stds: [f32; 3],
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: 0.8,
            max_qualifying: 500,
            margin_fraction: 0.10,
            means: DEFAULT_MEANS,
            stds: DEFAULT_STDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.2,
            val_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub backbone_id: String,
    pub detector: String,
    pub manifest: PathBuf,
    pub dataset_root: PathBuf,
    pub run_dir: PathBuf,
    /// Decision threshold on P(fake) at evaluation time.
    pub decision_threshold: f64,
    pub split: SplitConfig,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            backbone_id: "reference-small".into(),
            detector: "luma".into(),
            manifest: PathBuf::from("manifest.csv"),
            dataset_root: PathBuf::from("dataset"),
            run_dir: PathBuf::from("run"),
            decision_threshold: 0.5,
            split: SplitConfig::default(),
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    MissingFile(PathBuf),
    #[error("config parse error in {0}: {1}")]
    Parse(PathBuf, String),
    #[error("config digest mismatch in {dir}: expected {expected}, found {found}")]
    DigestMismatch {
        dir: PathBuf,
        expected: String,
        found: String,
    },
    #[error("i/o error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|_| ConfigError::MissingFile(path.into()))?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse(path.into(), e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self).expect("config serializes");
        fs::write(path, text).map_err(|e| ConfigError::Io(path.into(), e))
    }

    /// Hex SHA-256 of the canonical JSON form; identifies a run.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }

    /// Writes the digest marker into an output directory.
    pub fn stamp(&self, dir: &Path) -> Result<(), ConfigError> {
        fs::create_dir_all(dir).map_err(|e| ConfigError::Io(dir.into(), e))?;
        let path = dir.join("run_config_digest.txt");
        fs::write(&path, format!("{}\n", self.digest())).map_err(|e| ConfigError::Io(path, e))
    }

    /// Verifies that `dir` was produced under this exact config.
    pub fn check_stamp(&self, dir: &Path) -> Result<(), ConfigError> {
        let path = dir.join("run_config_digest.txt");
        let found = fs::read_to_string(&path)
            .map_err(|_| ConfigError::MissingFile(path.clone()))?
            .trim()
            .to_string();
        let expected = self.digest();
        if found != expected {
            return Err(ConfigError::DigestMismatch {
                dir: dir.into(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.pipeline.threshold, 0.8);
        assert_eq!(cfg.pipeline.max_qualifying, 500);
        assert_eq!(cfg.split.test_fraction, 0.2);
        assert_eq!(cfg.decision_threshold, 0.5);
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let b = RunConfig::default();
        assert_eq!(a.digest(), b.digest());
        let mut c = RunConfig::default();
        c.seed = 1;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn toml_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        let cfg = RunConfig::default();
        cfg.save(&path).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(cfg, loaded);
        assert_eq!(cfg.digest(), loaded.digest());
    }

    #[test]
    fn stamp_checks_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        cfg.stamp(dir.path()).unwrap();
        cfg.check_stamp(dir.path()).unwrap();
        let mut other = RunConfig::default();
        other.seed = 99;
        assert!(matches!(
            other.check_stamp(dir.path()),
            Err(ConfigError::DigestMismatch { .. })
        ));
    }
}
