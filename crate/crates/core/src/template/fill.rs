use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    substitute, validate, AnswerChoice, BoundValue, ComponentKind, EvalError, PhraseLexicon,
    PlaceholderKind, RngSampler, TemplateScenario,
};
use crate::bias::BiasCategory;

/// Distinct binding tuples are drawn by rejection; after this many draws a
/// duplicate is accepted.
pub const MAX_UNIQUE_ATTEMPTS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    pub template_id: String,
    pub bias: BiasCategory,
    pub instance_index: usize,
    pub bindings: BTreeMap<String, BoundValue>,
    pub resolved_body: String,
    pub resolved_level_components: BTreeMap<ComponentKind, String>,
    pub resolved_answers: Vec<AnswerChoice>,
    /// Seed of the accepted draw; redrawing from it reproduces `bindings`.
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum FillError {
    #[error("k must be at least 1")]
    ZeroCount,
    #[error("template `{template}`: slot `{slot}` is missing or empty in the lexicon")]
    LexiconGap { template: String, slot: String },
    #[error("template `{template}` instance {index}, placeholder `{placeholder}`: {source}")]
    Eval {
        template: String,
        index: usize,
        placeholder: String,
        source: EvalError,
    },
    #[error("{0}")]
    Invalid(validate::Finding),
}

/// Stable 64-bit seed for instance `index` of `template_id`: the first eight
/// bytes of SHA-256 over the base seed, the id and the index.
pub fn derive_seed(base_seed: u64, template_id: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base_seed.to_le_bytes());
    hasher.update((template_id.len() as u64).to_le_bytes());
    hasher.update(template_id.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn attempt_seed(child_seed: u64, attempt: u32) -> u64 {
    if attempt == 0 {
        child_seed
    } else {
        derive_seed(child_seed, "retry", u64::from(attempt))
    }
}

/// Draws one binding set, resolving placeholders in definition order.
fn draw_bindings(
    template: &TemplateScenario,
    lexicon: &PhraseLexicon,
    seed: u64,
    index: usize,
) -> Result<BTreeMap<String, BoundValue>, FillError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bindings = BTreeMap::new();
    for def in &template.placeholder_defs {
        let value = match &def.kind {
            PlaceholderKind::Phrase { slot } => {
                let phrases = lexicon
                    .phrases(slot)
                    .filter(|p| !p.is_empty())
                    .ok_or_else(|| FillError::LexiconGap {
                        template: template.id.clone(),
                        slot: slot.clone(),
                    })?;
                BoundValue::Phrase(phrases[rng.random_range(0..phrases.len())].clone())
            }
            PlaceholderKind::Numeric { expr } => {
                let v = expr
                    .eval(&bindings, &mut RngSampler(&mut rng))
                    .map_err(|source| FillError::Eval {
                        template: template.id.clone(),
                        index,
                        placeholder: def.name.clone(),
                        source,
                    })?;
                BoundValue::Number(v)
            }
        };
        bindings.insert(def.name.clone(), value);
    }
    Ok(bindings)
}

fn binding_key(template: &TemplateScenario, bindings: &BTreeMap<String, BoundValue>) -> Vec<String> {
    template
        .placeholder_defs
        .iter()
        .map(|d| bindings[&d.name].render())
        .collect()
}

fn resolve(text: &str, bindings: &BTreeMap<String, BoundValue>) -> String {
    substitute(text, |name| bindings.get(name).map(BoundValue::render))
}

/// Expands one template into `k` instances.
///
/// Instance `i` starts from `derive_seed(base_seed, id, i)`. Draws repeat
/// (from seeds derived off that child seed) until the binding tuple differs
/// from every earlier instance, up to [`MAX_UNIQUE_ATTEMPTS`].
pub fn fill_template(
    template: &TemplateScenario,
    lexicon: &PhraseLexicon,
    base_seed: u64,
    k: usize,
) -> Result<Vec<ScenarioInstance>, FillError> {
    if k == 0 {
        return Err(FillError::ZeroCount);
    }
    if let Some(finding) = validate::structural_findings(template).into_iter().next() {
        return Err(FillError::Invalid(finding));
    }

    let mut seen: HashSet<Vec<String>> = HashSet::with_capacity(k);
    let mut duplicates = 0usize;
    let mut instances = Vec::with_capacity(k);
    for index in 0..k {
        let child = derive_seed(base_seed, &template.id, index as u64);
        let attempts = if template.placeholder_defs.is_empty() {
            1
        } else {
            MAX_UNIQUE_ATTEMPTS
        };
        let mut accepted = None;
        for attempt in 0..attempts {
            let seed = attempt_seed(child, attempt);
            let bindings = draw_bindings(template, lexicon, seed, index)?;
            let key = binding_key(template, &bindings);
            if seen.insert(key) {
                accepted = Some((seed, bindings));
                break;
            }
            if attempt + 1 == attempts {
                duplicates += 1;
                accepted = Some((seed, bindings));
            }
        }
        let (seed, bindings) = accepted.expect("at least one attempt");

        instances.push(ScenarioInstance {
            template_id: template.id.clone(),
            bias: template.bias,
            instance_index: index,
            resolved_body: resolve(&template.body, &bindings),
            resolved_level_components: template
                .level_components
                .iter()
                .map(|(kind, text)| (*kind, resolve(text, &bindings)))
                .collect(),
            resolved_answers: template
                .answers
                .iter()
                .map(|a| AnswerChoice {
                    key: a.key.clone(),
                    text: resolve(&a.text, &bindings),
                    label: a.label,
                })
                .collect(),
            bindings,
            seed,
        });
    }
    if duplicates > 0 && !template.placeholder_defs.is_empty() {
        log::warn!(
            "template `{}`: {duplicates} of {k} instances repeat an earlier binding set",
            template.id
        );
    }
    Ok(instances)
}

/// Expands every template, ordered by `(template_id, instance_index)`.
pub fn fill_corpus(
    templates: &[TemplateScenario],
    lexicon: &PhraseLexicon,
    base_seed: u64,
    k: usize,
) -> Result<Vec<ScenarioInstance>, FillError> {
    let mut sorted: Vec<&TemplateScenario> = templates.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = Vec::with_capacity(templates.len() * k);
    for t in sorted {
        out.extend(fill_template(t, lexicon, base_seed, k)?);
    }
    Ok(out)
}
