use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use super::{scan_tags, AnswerLabel, BinOp, NumericExpr, PhraseLexicon, PlaceholderKind, TemplateScenario};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FindingKind {
    DuplicateTemplateId,
    DuplicatePlaceholder { name: String },
    UndefinedTag { tag: String, field: String },
    UndefinedSlot { placeholder: String },
    MissingSlot { slot: String },
    EmptySlot { slot: String },
    TagInPhrase { slot: String, phrase: String },
    UnknownReference { placeholder: String, target: String },
    ForwardReference { placeholder: String, target: String },
    InvalidRange { placeholder: String, lo: String, hi: String },
    ZeroDivisor { placeholder: String },
    TooFewChoices { count: usize },
    NoBiasedChoice,
    NoUnbiasedChoice,
    DuplicateAnswerKey { key: String },
    EmptyAnswer { index: usize },
    EmptyId,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FindingKind::DuplicateTemplateId => write!(f, "duplicate template id"),
            FindingKind::DuplicatePlaceholder { name } => {
                write!(f, "placeholder `{name}` is defined more than once")
            }
            FindingKind::UndefinedTag { tag, field } => {
                write!(f, "tag <{tag}> in {field} has no placeholder definition")
            }
            FindingKind::UndefinedSlot { placeholder } => {
                write!(f, "phrase placeholder `{placeholder}` names no slot")
            }
            FindingKind::MissingSlot { slot } => write!(f, "slot `{slot}` is missing from the lexicon"),
            FindingKind::EmptySlot { slot } => write!(f, "slot `{slot}` has no phrases"),
            FindingKind::TagInPhrase { slot, phrase } => {
                write!(f, "phrase `{phrase}` in slot `{slot}` contains tag syntax")
            }
            FindingKind::UnknownReference { placeholder, target } => {
                write!(f, "`{placeholder}` references undefined tag `{target}`")
            }
            FindingKind::ForwardReference { placeholder, target } => write!(
                f,
                "forward reference: `{placeholder}` uses `{target}`, which is not defined earlier"
            ),
            FindingKind::InvalidRange { placeholder, lo, hi } => {
                write!(f, "`{placeholder}` has an empty range [{lo}, {hi}]")
            }
            FindingKind::ZeroDivisor { placeholder } => {
                write!(f, "`{placeholder}` divides by a literal zero")
            }
            FindingKind::TooFewChoices { count } => {
                write!(f, "needs at least two answer choices, found {count}")
            }
            FindingKind::NoBiasedChoice => write!(f, "no biased choice"),
            FindingKind::NoUnbiasedChoice => write!(f, "no unbiased choice"),
            FindingKind::DuplicateAnswerKey { key } => write!(f, "answer key `{key}` is repeated"),
            FindingKind::EmptyAnswer { index } => write!(f, "answer {index} has an empty key or text"),
            FindingKind::EmptyId => write!(f, "template id is empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub template_id: String,
    #[serde(flatten)]
    pub kind: FindingKind,
}

impl Finding {
    pub fn new(template_id: impl Into<String>, kind: FindingKind) -> Self {
        Finding {
            template_id: template_id.into(),
            kind,
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "template `{}`: {}", self.template_id, self.kind)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    /// True when the corpus can be expanded.
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

/// Lists every problem that would prevent expanding the corpus with this
/// lexicon. Never fails; an empty report means the corpus is expandable.
pub fn validate_corpus(templates: &[TemplateScenario], lexicon: &PhraseLexicon) -> ValidationReport {
    let mut findings = Vec::new();
    let mut ids: HashMap<&str, usize> = HashMap::new();
    for t in templates {
        *ids.entry(t.id.as_str()).or_default() += 1;
    }
    let mut reported_ids = BTreeSet::new();
    for t in templates {
        if ids[t.id.as_str()] > 1 && reported_ids.insert(t.id.as_str()) {
            findings.push(Finding::new(&t.id, FindingKind::DuplicateTemplateId));
        }
        findings.extend(structural_findings(t));
        findings.extend(lexicon_findings(t, lexicon));
    }
    ValidationReport { findings }
}

fn lexicon_findings(t: &TemplateScenario, lexicon: &PhraseLexicon) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for def in &t.placeholder_defs {
        let PlaceholderKind::Phrase { slot } = &def.kind else {
            continue;
        };
        if slot.is_empty() || !seen.insert(slot.as_str()) {
            continue;
        }
        match lexicon.phrases(slot) {
            None => out.push(Finding::new(&t.id, FindingKind::MissingSlot { slot: slot.clone() })),
            Some([]) => out.push(Finding::new(&t.id, FindingKind::EmptySlot { slot: slot.clone() })),
            Some(phrases) => {
                for phrase in phrases {
                    if !scan_tags(phrase).is_empty() {
                        out.push(Finding::new(
                            &t.id,
                            FindingKind::TagInPhrase {
                                slot: slot.clone(),
                                phrase: phrase.clone(),
                            },
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Invariants that hold independently of any lexicon.
pub(crate) fn structural_findings(t: &TemplateScenario) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut push = |kind| out.push(Finding::new(&t.id, kind));

    if t.id.trim().is_empty() {
        push(FindingKind::EmptyId);
    }

    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, def) in t.placeholder_defs.iter().enumerate() {
        if position.insert(def.name.as_str(), i).is_some() {
            push(FindingKind::DuplicatePlaceholder {
                name: def.name.clone(),
            });
        }
    }

    for (i, def) in t.placeholder_defs.iter().enumerate() {
        match &def.kind {
            PlaceholderKind::Phrase { slot } => {
                if slot.trim().is_empty() {
                    push(FindingKind::UndefinedSlot {
                        placeholder: def.name.clone(),
                    });
                }
            }
            PlaceholderKind::Numeric { expr } => {
                for target in expr.references() {
                    match position.get(target) {
                        None => push(FindingKind::UnknownReference {
                            placeholder: def.name.clone(),
                            target: target.to_string(),
                        }),
                        Some(&j) if j >= i => push(FindingKind::ForwardReference {
                            placeholder: def.name.clone(),
                            target: target.to_string(),
                        }),
                        Some(_) => {}
                    }
                }
                for (lo, hi) in expr.ranges() {
                    if lo.is_nan() || hi.is_nan() || lo > hi {
                        push(FindingKind::InvalidRange {
                            placeholder: def.name.clone(),
                            lo: lo.to_string(),
                            hi: hi.to_string(),
                        });
                    }
                }
                if has_literal_zero_divisor(expr) {
                    push(FindingKind::ZeroDivisor {
                        placeholder: def.name.clone(),
                    });
                }
            }
        }
    }

    for (field, text) in t.texts() {
        for tag in scan_tags(text) {
            let name = tag.content.trim();
            if !position.contains_key(name) {
                push(FindingKind::UndefinedTag {
                    tag: name.to_string(),
                    field: field.clone(),
                });
            }
        }
    }

    if t.answers.len() < 2 {
        push(FindingKind::TooFewChoices {
            count: t.answers.len(),
        });
    }
    if !t.answers.iter().any(|a| a.label == AnswerLabel::Biased) {
        push(FindingKind::NoBiasedChoice);
    }
    if !t.answers.iter().any(|a| a.label == AnswerLabel::Unbiased) {
        push(FindingKind::NoUnbiasedChoice);
    }
    let mut keys = BTreeSet::new();
    for (i, a) in t.answers.iter().enumerate() {
        if a.key.trim().is_empty() || a.text.trim().is_empty() {
            push(FindingKind::EmptyAnswer { index: i });
        }
        if !keys.insert(a.key.as_str()) {
            push(FindingKind::DuplicateAnswerKey { key: a.key.clone() });
        }
    }
    out
}

fn has_literal_zero_divisor(expr: &NumericExpr) -> bool {
    match expr {
        NumericExpr::Binary { op, lhs, rhs } => {
            (*op == BinOp::Div && matches!(**rhs, NumericExpr::Literal(v) if v == 0.0))
                || has_literal_zero_divisor(lhs)
                || has_literal_zero_divisor(rhs)
        }
        NumericExpr::Neg(inner) | NumericExpr::Round { expr: inner, .. } => {
            has_literal_zero_divisor(inner)
        }
        _ => false,
    }
}
