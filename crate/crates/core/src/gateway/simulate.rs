//! Seeded stand-in for a model endpoint.
//!
//! For a prompt of bias `b` at level `l`, a model `m` at temperature `T`
//! endorses a biased choice with probability
//! `clamp(p(b, l) + offset(m) + slope * T)`, answers off-topic with
//! probability `unrelated_rate` (capped by what is left) and otherwise
//! endorses an unbiased choice.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ResponseRecord, ResponseSource};
use crate::bias::BiasCategory;
use crate::prompt::Prompt;
use crate::scoring::Outcome;
use crate::template::{AnswerChoice, AnswerLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelOverride {
    pub bias: BiasCategory,
    pub level: u8,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasProfile {
    /// Biased-response probability for biases not listed in `biases`.
    pub default_p: f64,
    pub unrelated_rate: f64,
    pub biases: BTreeMap<BiasCategory, f64>,
    pub levels: Vec<LevelOverride>,
    pub model_offsets: BTreeMap<String, f64>,
    /// Change in biased-response probability per unit of temperature.
    pub temperature_slope: f64,
}

impl Default for BiasProfile {
    fn default() -> Self {
        BiasProfile {
            default_p: 0.3,
            unrelated_rate: 0.05,
            biases: BTreeMap::new(),
            levels: Vec::new(),
            model_offsets: BTreeMap::new(),
            temperature_slope: 0.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("{field} = {value} is not a probability")]
    OutOfRange { field: String, value: f64 },
    #[error("level override for {bias} names level {level}")]
    Level { bias: BiasCategory, level: u8 },
    #[error("cannot read profile {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed profile: {0}")]
    Toml(#[from] toml::de::Error),
}

impl BiasProfile {
    /// Same biased-response probability for every bias.
    pub fn uniform(p: f64, unrelated_rate: f64) -> Self {
        BiasProfile {
            default_p: p,
            unrelated_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let check = |field: String, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(ProfileError::OutOfRange { field, value })
            }
        };
        check("default_p".into(), self.default_p)?;
        check("unrelated_rate".into(), self.unrelated_rate)?;
        for (b, p) in &self.biases {
            check(format!("biases.{}", b.slug()), *p)?;
        }
        for o in &self.levels {
            if !(1..=5).contains(&o.level) {
                return Err(ProfileError::Level {
                    bias: o.bias,
                    level: o.level,
                });
            }
            check(format!("levels[{} L{}]", o.bias.slug(), o.level), o.p)?;
        }
        Ok(())
    }

    pub fn from_toml_str(src: &str) -> Result<Self, ProfileError> {
        let profile: BiasProfile = toml::from_str(src)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let src = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&src)
    }

    pub fn biased_probability(&self, bias: BiasCategory, level: u8, model_id: &str, temperature: f64) -> f64 {
        let base = self
            .levels
            .iter()
            .rev()
            .find(|o| o.bias == bias && o.level == level)
            .map(|o| o.p)
            .or_else(|| self.biases.get(&bias).copied())
            .unwrap_or(self.default_p);
        let offset = self.model_offsets.get(model_id).copied().unwrap_or(0.0);
        (base + offset + self.temperature_slope * temperature).clamp(0.0, 1.0)
    }
}

const ENDORSEMENTS: &[&str] = &[
    "{key}. {text}. That is the most sensible choice here.",
    "I would go with {key}: {text}. It is clearly the better option.",
    "My answer is {text}. This is the right call, and I recommend it.",
    "After thinking it through, the best choice is {key} ({text}). It is reasonable and well supported.",
    "<think>Option {other} looks tempting at first, but let me reconsider.</think>\n**{key}. {text}** is the sound decision.",
    "Honestly: {text}. I am confident this is correct.",
    "**Answer: {key}**\n\n{text} is the wise and prudent choice in this situation.",
];

const OFF_TOPIC: &[&str] = &[
    "I'm sorry, but I can't help with that request.",
    "Could you share a bit more about your situation before I weigh in?",
    "There is not enough information here for me to say one way or another.",
    "This depends on personal circumstances that I cannot judge from the description.",
    "Let's talk about something else instead.",
];

/// Deterministic simulated provider.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub profile: BiasProfile,
    pub seed: u64,
}

impl Simulator {
    pub fn new(profile: BiasProfile, seed: u64) -> Self {
        Simulator { profile, seed }
    }

    fn response_seed(&self, prompt: &Prompt, config: &ModelConfig) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for part in [prompt.key.to_string().as_bytes(), config.model_id.as_bytes()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        h.update(config.temperature.to_bits().to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    /// The intended outcome and the response text.
    pub fn decide(&self, prompt: &Prompt, config: &ModelConfig) -> (Outcome, String) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.response_seed(prompt, config));
        let p = self.profile.biased_probability(
            prompt.bias,
            prompt.key.level.get(),
            &config.model_id,
            config.temperature,
        );
        let unrelated = self.profile.unrelated_rate.min(1.0 - p);
        let u: f64 = rng.random();
        let wanted = if u < p {
            Outcome::Biased
        } else if u < p + unrelated {
            Outcome::Unrelated
        } else {
            Outcome::Unbiased
        };
        let pick = |label: AnswerLabel, rng: &mut ChaCha8Rng| -> Option<AnswerChoice> {
            let pool: Vec<&AnswerChoice> = prompt.answers.iter().filter(|a| a.label == label).collect();
            pool.choose(rng).map(|a| (*a).clone())
        };
        let chosen = match wanted {
            Outcome::Biased => pick(AnswerLabel::Biased, &mut rng),
            Outcome::Unbiased => pick(AnswerLabel::Unbiased, &mut rng),
            Outcome::Unrelated => None,
        };
        match chosen {
            Some(choice) => {
                let other = prompt
                    .answers
                    .iter()
                    .find(|a| a.label != choice.label)
                    .map_or("A", |a| a.key.as_str());
                let template = ENDORSEMENTS.choose(&mut rng).expect("non-empty");
                let text = template
                    .replace("{key}", &choice.key)
                    .replace("{text}", choice.text.trim_end_matches('.'))
                    .replace("{other}", other);
                (wanted, text)
            }
            None => (
                Outcome::Unrelated,
                OFF_TOPIC.choose(&mut rng).expect("non-empty").to_string(),
            ),
        }
    }
}

impl ResponseSource for Simulator {
    fn respond(&self, prompt: &Prompt, config: &ModelConfig) -> ResponseRecord {
        let (_, response_text) = self.decide(prompt, config);
        ResponseRecord {
            prompt: prompt.key.clone(),
            model_id: config.model_id.clone(),
            temperature: config.temperature,
            response_text,
            latency_ms: 0,
            attempt: 1,
            timestamp_ms: 0,
            error: None,
        }
    }
}
