//! Strict JSON configuration: a document is merged key by key onto the
//! defaults and then parsed with unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cmfdnet::blocks::ModelConfig;
use cmfdnet::data::{AugmentConfig, DatasetSpec};
use cmfdnet::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
    pub augment: AugmentConfig,
    pub paths: Paths,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            dataset: DatasetSpec::default(),
            augment: AugmentConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// Overlays `patch` onto `base`. Objects merge recursively; anything else
/// replaces. Keys absent from `base` are kept so strict parsing sees them.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn overlay<T: Serialize + for<'de> Deserialize<'de>>(defaults: &T, text: &str) -> Result<T> {
    let patch: Value = serde_json::from_str(text).context("config is not valid JSON")?;
    if !patch.is_object() {
        anyhow::bail!("config must be a JSON object");
    }
    let mut base = serde_json::to_value(defaults)?;
    merge(&mut base, patch);
    Ok(serde_json::from_value(base)?)
}

pub fn load<T: Serialize + for<'de> Deserialize<'de>>(defaults: &T, path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    overlay(defaults, &text).with_context(|| format!("in {}", path.display()))
}

impl CliConfig {
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            Some(p) => load(&Self::default(), p)?,
            None => Self::default(),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.dataset.validate()?;
        self.augment.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: CliConfig = overlay(
            &CliConfig::default(),
            r#"{"model": {"ssm_state": 2}, "train": {"epochs": 3}}"#,
        )
        .unwrap();
        assert_eq!(cfg.model.ssm_state, 2);
        assert_eq!(cfg.model.channels, ModelConfig::desk().channels);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.dataset, DatasetSpec::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(overlay(&CliConfig::default(), r#"{"modle": {}}"#).is_err());
        assert!(overlay(&CliConfig::default(), r#"{"train": {"lr0": 1.0}}"#).is_err());
        assert!(overlay(&CliConfig::default(), "[1]").is_err());
    }
}
