use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::text::normalize_string;

const DEFAULT_POSITIVE: &str = include_str!("../../data/sentiment/positive.txt");
const DEFAULT_NEGATIVE: &str = include_str!("../../data/sentiment/negative.txt");

pub type TermSet = HashSet<String>;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("similarity threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("presence weights must be non-negative and sum to 1, got {avg} + {max}")]
    Weights { avg: f64, max: f64 },
    #[error("unrelated cutoff must lie in [0, 1), got {0}")]
    Cutoff(f64),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed extraction config: {0}")]
    Toml(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresenceWeights {
    pub avg: f64,
    pub max: f64,
}

impl Default for PresenceWeights {
    fn default() -> Self {
        PresenceWeights { avg: 0.25, max: 0.75 }
    }
}

/// Parses a term list: one term per line, `#` starts a comment.
pub fn parse_terms(src: &str) -> TermSet {
    src.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(normalize_string)
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionConfig {
    pub similarity_threshold: f64,
    pub presence_weights: PresenceWeights,
    /// Words inspected on each side of a mention.
    pub sentiment_window: usize,
    pub unrelated_cutoff: f64,
    pub strip_reasoning: bool,
    pub reasoning_delimiters: Vec<(String, String)>,
    pub positive_terms: TermSet,
    pub negative_terms: TermSet,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            similarity_threshold: 0.8,
            presence_weights: PresenceWeights::default(),
            sentiment_window: 10,
            unrelated_cutoff: 0.3,
            strip_reasoning: true,
            reasoning_delimiters: vec![("<think>".into(), "</think>".into())],
            positive_terms: parse_terms(DEFAULT_POSITIVE),
            negative_terms: parse_terms(DEFAULT_NEGATIVE),
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = self.similarity_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(ConfigError::Threshold(t));
        }
        let PresenceWeights { avg, max } = self.presence_weights;
        if avg < 0.0 || max < 0.0 || ((avg + max) - 1.0).abs() > 1e-12 {
            return Err(ConfigError::Weights { avg, max });
        }
        let c = self.unrelated_cutoff;
        if !(0.0..1.0).contains(&c) {
            return Err(ConfigError::Cutoff(c));
        }
        Ok(())
    }

    /// Builds a config from file settings; lexicon paths resolve against
    /// `base_dir`.
    pub fn from_settings(settings: &ExtractionSettings, base_dir: &Path) -> Result<Self, ConfigError> {
        let read = |p: &PathBuf| {
            let path = base_dir.join(p);
            std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let defaults = ExtractionConfig::default();
        let cfg = ExtractionConfig {
            similarity_threshold: settings.similarity_threshold,
            presence_weights: PresenceWeights {
                avg: settings.avg_weight,
                max: settings.max_weight,
            },
            sentiment_window: settings.sentiment_window,
            unrelated_cutoff: settings.unrelated_cutoff,
            strip_reasoning: settings.strip_reasoning,
            reasoning_delimiters: settings
                .reasoning_delimiters
                .clone()
                .unwrap_or(defaults.reasoning_delimiters),
            positive_terms: match &settings.positive_lexicon {
                Some(p) => parse_terms(&read(p)?),
                None => defaults.positive_terms,
            },
            negative_terms: match &settings.negative_lexicon {
                Some(p) => parse_terms(&read(p)?),
                None => defaults.negative_terms,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let settings: ExtractionSettings = toml::from_str(&src)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_settings(&settings, base)
    }
}

/// On-disk form of [`ExtractionConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionSettings {
    pub similarity_threshold: f64,
    pub avg_weight: f64,
    pub max_weight: f64,
    pub sentiment_window: usize,
    pub unrelated_cutoff: f64,
    pub strip_reasoning: bool,
    pub reasoning_delimiters: Option<Vec<(String, String)>>,
    pub positive_lexicon: Option<PathBuf>,
    pub negative_lexicon: Option<PathBuf>,
}

impl Default for ExtractionSettings {
    fn default() -> Self {
        ExtractionSettings {
            similarity_threshold: 0.8,
            avg_weight: 0.25,
            max_weight: 0.75,
            sentiment_window: 10,
            unrelated_cutoff: 0.3,
            strip_reasoning: true,
            reasoning_delimiters: None,
            positive_lexicon: None,
            negative_lexicon: None,
        }
    }
}
