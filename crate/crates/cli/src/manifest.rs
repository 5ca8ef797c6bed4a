use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Written before any result file of a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub config: Value,
    pub seeds: Value,
    pub catalogue_version: u32,
    /// CRC32 of the model file, hex.
    pub model_hash: Option<String>,
    pub started_unix: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: Value, seeds: Value, model_hash: Option<String>) -> Self {
        Self {
            command_line: std::env::args().collect(),
            subcommand: subcommand.to_string(),
            config,
            seeds,
            catalogue_version: vpr_integrity::featurizer::CATALOGUE_VERSION,
            model_hash,
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_json(path, self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn file_hash(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(format!("{:08x}", crc32fast::hash(&bytes)))
}

/// Values from an optional JSON config file. Keys are flag names without the
/// leading dashes, e.g. `{"seed": 3, "n-starts": 20}`.
pub struct FileConfig(Value);

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self(Value::Null));
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: Value = serde_json::from_str(&text)?;
        if !value.is_object() {
            return Err(CliError::msg(format!("{}: config must be a JSON object", path.display())));
        }
        Ok(Self(value))
    }

    /// Flag value if given, else the config file value, else `None`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::msg(format!("config key {key:?}: {e}"))),
        }
    }

    pub fn or<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }
}
