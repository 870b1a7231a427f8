//! Run configuration from `key = value` files and environment variables.
//!
//! Precedence: command-line flag, then `EMPREF_LEXICON_DIR`, then config
//! file, then built-in default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Environment variable naming the directory that holds the lexicon files.
pub const LEXICON_DIR_ENV: &str = "EMPREF_LEXICON_DIR";

/// Published lexicon file names looked up under the lexicon directory.
pub const VAD_FILE_NAME: &str = "NRC-VAD-Lexicon.txt";
pub const INTENSITY_FILE_NAME: &str = "NRC-Emotion-Intensity-Lexicon-v1.txt";

const KNOWN_KEYS: [&str; 10] = [
    "corpus",
    "vad",
    "intensity",
    "nidf_cache",
    "nidf_reference",
    "prompt_mode",
    "model_label",
    "out_dir",
    "lexicon_dir",
    "keywords",
];

#[derive(Debug, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{}:{}: unknown config key {key:?}",
                    path.display(),
                    lineno + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }
}

fn lexicon_dir(config: &FileConfig) -> Option<PathBuf> {
    std::env::var(LEXICON_DIR_ENV)
        .ok()
        .map(PathBuf::from)
        .or_else(|| config.get_path("lexicon_dir"))
}

/// Resolves the VAD lexicon path from flag, lexicon dir or config file.
pub fn resolve_vad(flag: Option<PathBuf>, config: &FileConfig) -> Option<PathBuf> {
    flag.or_else(|| lexicon_dir(config).map(|d| d.join(VAD_FILE_NAME)))
        .or_else(|| config.get_path("vad"))
}

/// Resolves the intensity lexicon path from flag, lexicon dir or config file.
pub fn resolve_intensity(flag: Option<PathBuf>, config: &FileConfig) -> Option<PathBuf> {
    flag.or_else(|| lexicon_dir(config).map(|d| d.join(INTENSITY_FILE_NAME)))
        .or_else(|| config.get_path("intensity"))
}
