//! Scenario templates: parsing, validation and expansion into instances.
//!
//! A template is a TOML document:
//!
//! ```toml
//! id = "availability-flight"
//! bias = "availability"
//! body = "I just read about a plane crash near <city>. ..."
//!
//! [levels]
//! 1 = "Should I still take my flight?"
//! 2 = "..."            # context
//! 3 = "..."            # subtasks
//! 4 = "..."            # quality criteria
//! 5 = "..."            # injected facts
//!
//! [[answers]]
//! key = "A"
//! text = "No, flying is too dangerous right now"
//! label = "biased"
//!
//! [[placeholders]]
//! name = "city"
//! kind = "phrase"
//! slot = "destination_city"
//!
//! [[placeholders]]
//! name = "percentage1"
//! kind = "numeric"
//! expr = "[50, 75]"
//! ```
//!
//! Texts reference placeholders as `<name>`. A tag may also define a numeric
//! placeholder inline, either named (`<share = percentage1 - 10>`) or
//! anonymous (`<percentage1 - [5, 10]>`).

mod expr;
mod fill;
mod lexicon;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bias::BiasCategory;

pub use expr::{format_number, BinOp, EvalError, ExprSyntaxError, NumericExpr, RangeSampler, RngSampler};
pub use fill::{derive_seed, fill_corpus, fill_template, FillError, ScenarioInstance};
pub use lexicon::{LexiconError, PhraseLexicon};
pub use validate::{validate_corpus, Finding, FindingKind, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerLabel {
    Biased,
    Unbiased,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerChoice {
    pub key: String,
    pub text: String,
    pub label: AnswerLabel,
}

/// Authored prompt components, one per detail level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Directive,
    Context,
    Subtasks,
    QualityCriteria,
    InjectedFacts,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 5] = [
        ComponentKind::Directive,
        ComponentKind::Context,
        ComponentKind::Subtasks,
        ComponentKind::QualityCriteria,
        ComponentKind::InjectedFacts,
    ];

    /// The level whose `levels.N` entry authors this component.
    pub fn level(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_level(level: u8) -> Option<ComponentKind> {
        ComponentKind::ALL.get(usize::from(level).checked_sub(1)?).copied()
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComponentKind::Directive => "directive",
            ComponentKind::Context => "context",
            ComponentKind::Subtasks => "subtasks",
            ComponentKind::QualityCriteria => "quality_criteria",
            ComponentKind::InjectedFacts => "injected_facts",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlaceholderKind {
    Phrase { slot: String },
    Numeric { expr: NumericExpr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceholderTag {
    pub name: String,
    #[serde(flatten)]
    pub kind: PlaceholderKind,
}

/// Value bound to a placeholder in one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundValue {
    Number(f64),
    Phrase(String),
}

impl BoundValue {
    pub fn render(&self) -> String {
        match self {
            BoundValue::Number(v) => format_number(*v),
            BoundValue::Phrase(p) => p.clone(),
        }
    }
}

/// One bias scenario with placeholder tags in canonical `<name>` form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateScenario {
    pub id: String,
    pub bias: BiasCategory,
    pub body: String,
    pub level_components: BTreeMap<ComponentKind, String>,
    pub answers: Vec<AnswerChoice>,
    /// Declared placeholders in file order, then inline definitions in the
    /// order they appear in the texts.
    pub placeholder_defs: Vec<PlaceholderTag>,
}

impl TemplateScenario {
    pub fn placeholder(&self, name: &str) -> Option<&PlaceholderTag> {
        self.placeholder_defs.iter().find(|p| p.name == name)
    }

    /// Every text field that may carry tags, labelled for error reporting.
    pub(crate) fn texts(&self) -> Vec<(String, &str)> {
        let mut out = vec![("body".to_string(), self.body.as_str())];
        for (kind, text) in &self.level_components {
            out.push((format!("levels.{}", kind.level()), text.as_str()));
        }
        for (i, answer) in self.answers.iter().enumerate() {
            out.push((format!("answers[{i}].text"), answer.text.as_str()));
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("malformed template document: {0}")]
    Document(#[from] toml::de::Error),
    #[error("syntax error at {location}: {message}")]
    Syntax { location: String, message: String },
    #[error("{0}")]
    Invalid(Finding),
}

/// Location of one placeholder tag in a text.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TagSpan {
    /// Byte range of the whole tag including the angle brackets.
    pub start: usize,
    pub end: usize,
    pub content: String,
}

/// Finds `<...>` tags: the opening bracket must be followed by a non-space
/// character and the tag must close on the same line. Anything else is
/// literal text.
pub(crate) fn scan_tags(text: &str) -> Vec<TagSpan> {
    let mut tags = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let rest = &text[i + 1..];
            let first = rest.chars().next();
            if first.is_some_and(|c| !c.is_whitespace() && c != '<' && c != '>') {
                let close = rest.find(['>', '<', '\n']);
                if let Some(off) = close {
                    if rest.as_bytes()[off] == b'>' {
                        tags.push(TagSpan {
                            start: i,
                            end: i + 1 + off + 1,
                            content: rest[..off].to_string(),
                        });
                        i += off + 2;
                        continue;
                    }
                }
            }
        }
        i += 1;
    }
    tags
}

/// Replaces every tag with the rendering returned by `resolve`.
pub(crate) fn substitute<F>(text: &str, mut resolve: F) -> String
where
    F: FnMut(&str) -> Option<String>,
{
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for tag in scan_tags(text) {
        out.push_str(&text[last..tag.start]);
        match resolve(tag.content.trim()) {
            Some(v) => out.push_str(&v),
            None => out.push_str(&text[tag.start..tag.end]),
        }
        last = tag.end;
    }
    out.push_str(&text[last..]);
    out
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars
        .next()
        .is_some_and(|c| c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn line_col(text: &str, byte: usize) -> (usize, usize) {
    let before = &text[..byte];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTemplate {
    id: String,
    bias: String,
    body: String,
    #[serde(default)]
    levels: BTreeMap<String, String>,
    #[serde(default)]
    answers: Vec<AnswerChoice>,
    #[serde(default)]
    placeholders: Vec<RawPlaceholder>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlaceholder {
    name: String,
    kind: String,
    slot: Option<String>,
    expr: Option<String>,
}

/// Parses one template document and checks its structural invariants.
pub fn parse_template(source: &str) -> Result<TemplateScenario, TemplateError> {
    let raw: RawTemplate = toml::from_str(source)?;
    let syntax = |location: String, message: String| TemplateError::Syntax { location, message };

    let bias: BiasCategory = raw
        .bias
        .parse()
        .map_err(|e: crate::bias::UnknownBias| syntax("bias".into(), e.to_string()))?;

    let mut placeholder_defs = Vec::with_capacity(raw.placeholders.len());
    for (i, p) in raw.placeholders.into_iter().enumerate() {
        let location = format!("placeholders[{i}]");
        let kind = match p.kind.as_str() {
            "phrase" => PlaceholderKind::Phrase {
                slot: p.slot.unwrap_or_default(),
            },
            "numeric" => {
                let src = p
                    .expr
                    .ok_or_else(|| syntax(location.clone(), "numeric placeholder needs `expr`".into()))?;
                let expr = NumericExpr::parse(&src).map_err(|e| {
                    syntax(format!("{location}.expr:{}", e.column), e.message)
                })?;
                PlaceholderKind::Numeric { expr }
            }
            other => {
                return Err(syntax(
                    location,
                    format!("unknown placeholder kind `{other}` (expected `phrase` or `numeric`)"),
                ))
            }
        };
        placeholder_defs.push(PlaceholderTag { name: p.name, kind });
    }

    let mut level_components = BTreeMap::new();
    for (key, text) in raw.levels {
        let kind = key
            .parse::<u8>()
            .ok()
            .and_then(ComponentKind::from_level)
            .ok_or_else(|| syntax(format!("levels.{key}"), "levels must be numbered 1 to 5".into()))?;
        level_components.insert(kind, text);
    }

    let mut scenario = TemplateScenario {
        id: raw.id,
        bias,
        body: raw.body,
        level_components,
        answers: raw.answers,
        placeholder_defs,
    };
    canonicalize_inline_tags(&mut scenario)?;

    if let Some(finding) = validate::structural_findings(&scenario).into_iter().next() {
        return Err(TemplateError::Invalid(finding));
    }
    Ok(scenario)
}

/// Rewrites inline numeric definitions to `<name>` references and appends
/// their definitions to `placeholder_defs`.
fn canonicalize_inline_tags(scenario: &mut TemplateScenario) -> Result<(), TemplateError> {
    let id = scenario.id.clone();
    let mut anonymous = 0usize;
    let mut rewrite = |field: &str, text: &str, defs: &mut Vec<PlaceholderTag>| {
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for tag in scan_tags(text) {
            out.push_str(&text[last..tag.start]);
            last = tag.end;
            let content = tag.content.trim();
            if is_identifier(content) {
                out.push('<');
                out.push_str(content);
                out.push('>');
                continue;
            }
            let (name, src, offset) = match content.split_once('=') {
                Some((lhs, rhs)) if is_identifier(lhs.trim()) => {
                    (lhs.trim().to_string(), rhs, content.len() - rhs.len())
                }
                _ => {
                    anonymous += 1;
                    (format!("_expr{anonymous}"), content, 0)
                }
            };
            let expr = NumericExpr::parse(src).map_err(|e| {
                let lead = tag.content.len() - tag.content.trim_start().len();
                let (line, col) = line_col(text, tag.start + 1 + lead);
                TemplateError::Syntax {
                    location: format!("{field}:{line}:{}", col + offset + e.column - 1),
                    message: e.message,
                }
            })?;
            if defs.iter().any(|d| d.name == name) {
                return Err(TemplateError::Invalid(Finding::new(
                    &id,
                    FindingKind::DuplicatePlaceholder { name },
                )));
            }
            out.push('<');
            out.push_str(&name);
            out.push('>');
            defs.push(PlaceholderTag {
                name,
                kind: PlaceholderKind::Numeric { expr },
            });
        }
        out.push_str(&text[last..]);
        Ok::<String, TemplateError>(out)
    };

    let defs = &mut scenario.placeholder_defs;
    scenario.body = rewrite("body", &scenario.body, defs)?;
    for (kind, text) in scenario.level_components.iter_mut() {
        *text = rewrite(&format!("levels.{}", kind.level()), text, defs)?;
    }
    for (i, answer) in scenario.answers.iter_mut().enumerate() {
        answer.text = rewrite(&format!("answers[{i}].text"), &answer.text, defs)?;
    }
    Ok(())
}
