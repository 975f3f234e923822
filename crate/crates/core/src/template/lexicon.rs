use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed TOML lexicon: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("malformed JSON lexicon: {0}")]
    Json(#[from] serde_json::Error),
}

/// Slot name to the phrases that may fill it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhraseLexicon {
    slots: BTreeMap<String, Vec<String>>,
}

impl PhraseLexicon {
    pub fn from_slots(slots: BTreeMap<String, Vec<String>>) -> Self {
        PhraseLexicon { slots }
    }

    pub fn from_toml_str(src: &str) -> Result<Self, LexiconError> {
        Ok(toml::from_str(src)?)
    }

    pub fn from_json_str(src: &str) -> Result<Self, LexiconError> {
        Ok(serde_json::from_str(src)?)
    }

    /// Loads a `.json` or TOML lexicon file.
    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let src = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&src)
        } else {
            Self::from_toml_str(&src)
        }
    }

    pub fn phrases(&self, slot: &str) -> Option<&[String]> {
        self.slots.get(slot).map(Vec::as_slice)
    }

    pub fn slots(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.slots.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn insert(&mut self, slot: impl Into<String>, phrases: Vec<String>) {
        self.slots.insert(slot.into(), phrases);
    }
}
