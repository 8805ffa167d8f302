//! Optional TOML config file. Values here sit between command-line flags
//! (which win) and built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use v2x_core::Error;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub log_level: Option<String>,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub frames: Option<usize>,
    pub split: Option<[usize; 3]>,
    pub snr_db: Option<f64>,
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub step: Option<usize>,
    pub gamma: Option<f64>,
    pub dropout: Option<f64>,
    pub batch: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub estimators: Option<Vec<String>>,
    pub snr: Option<Vec<f64>>,
    pub frames: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub ta_alpha: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Reproducibility sidecar written next to every artifact as
/// `<artifact>.meta.toml`.
#[derive(Debug, Serialize)]
pub struct ArtifactMeta<'a, C: Serialize> {
    pub command: &'a str,
    pub seed: u64,
    pub config_hash: String,
    pub format_version: u32,
    pub config: &'a C,
}

/// SHA-256 of the TOML rendering of a resolved configuration.
pub fn config_hash<C: Serialize>(config: &C) -> anyhow::Result<String> {
    let text = toml::to_string(config)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_meta<C: Serialize>(
    artifact: &Path,
    command: &str,
    seed: u64,
    format_version: u32,
    config: &C,
) -> anyhow::Result<()> {
    let meta = ArtifactMeta {
        command,
        seed,
        config_hash: config_hash(config)?,
        format_version,
        config,
    };
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.toml");
    let path = artifact.with_file_name(name);
    std::fs::write(&path, toml::to_string(&meta)?).map_err(|source| Error::Io { path, source })?;
    Ok(())
}
