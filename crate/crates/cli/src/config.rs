//! Run configuration files: a JSON document with the [`TrainConfig`] keys
//! (loss and shuffle settings nested under `loss_config` and `shuffle`).
//! Missing keys take their defaults; unknown keys are rejected.

use std::path::Path;

use bsc_core::TrainConfig;
use serde::de::DeserializeOwned;

use crate::error::{CliError, Result};
use crate::fsutil;

/// Parses `text` as `T`, naming the offending key on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." || path.is_empty() {
            CliError::Validation(format!("{origin}: {inner}"))
        } else {
            CliError::Validation(format!("{origin}: key `{path}`: {inner}"))
        }
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&fsutil::read_to_string(path)?, &path.display().to_string())
}

/// Reads and validates a run config; defaults when `path` is `None`.
pub fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    let cfg = match path {
        Some(p) => load_json(p)?,
        None => TrainConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// The config with every default filled in, as written next to outputs.
pub fn resolved_json<T: serde::Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("configs serialize")
}
