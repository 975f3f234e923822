//! Five-level prompt rendering.
//!
//! Each level adds one authored component to the previous level:
//!
//! | level | adds                                 |
//! |-------|--------------------------------------|
//! | 1     | directive (scenario body + the ask)  |
//! | 2     | context                              |
//! | 3     | subtasks                             |
//! | 4     | quality criteria                     |
//! | 5     | injected facts                       |
//!
//! Every prompt ends with an `Options:` block listing the choices by key.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bias::BiasCategory;
use crate::template::{AnswerChoice, ComponentKind, ScenarioInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TelerLevel(u8);

impl TelerLevel {
    pub const ALL: [TelerLevel; 5] = [TelerLevel(1), TelerLevel(2), TelerLevel(3), TelerLevel(4), TelerLevel(5)];

    pub fn new(level: u8) -> Option<TelerLevel> {
        (1..=5).contains(&level).then_some(TelerLevel(level))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for TelerLevel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        TelerLevel::new(v).ok_or_else(|| format!("level must be 1..=5, got {v}"))
    }
}

impl From<TelerLevel> for u8 {
    fn from(l: TelerLevel) -> u8 {
        l.0
    }
}

impl fmt::Display for TelerLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptComponent {
    Directive,
    Context,
    Subtasks,
    QualityCriteria,
    InjectedFacts,
    AnswerBlock,
}

impl PromptComponent {
    fn authored(self) -> Option<ComponentKind> {
        match self {
            PromptComponent::Directive => Some(ComponentKind::Directive),
            PromptComponent::Context => Some(ComponentKind::Context),
            PromptComponent::Subtasks => Some(ComponentKind::Subtasks),
            PromptComponent::QualityCriteria => Some(ComponentKind::QualityCriteria),
            PromptComponent::InjectedFacts => Some(ComponentKind::InjectedFacts),
            PromptComponent::AnswerBlock => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelRecipe {
    pub level: TelerLevel,
    pub components: Vec<PromptComponent>,
}

impl LevelRecipe {
    pub fn for_level(level: TelerLevel) -> LevelRecipe {
        use PromptComponent::*;
        let authored = [Directive, Context, Subtasks, QualityCriteria, InjectedFacts];
        let mut components = authored[..usize::from(level.get())].to_vec();
        components.push(AnswerBlock);
        LevelRecipe { level, components }
    }
}

/// Identity of one prompt: which instance, at which level.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PromptKey {
    pub template_id: String,
    pub instance_index: usize,
    pub level: TelerLevel,
}

impl fmt::Display for PromptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}@{}", self.template_id, self.instance_index, self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    #[serde(flatten)]
    pub key: PromptKey,
    pub bias: BiasCategory,
    pub text: String,
    pub answers: Vec<AnswerChoice>,
}

impl Prompt {
    pub fn answer_keys(&self) -> Vec<&str> {
        self.answers.iter().map(|a| a.key.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("{template_id}#{instance_index}: level {level} needs a `{component}` component")]
    MissingComponent {
        template_id: String,
        instance_index: usize,
        level: u8,
        component: ComponentKind,
    },
    #[error("{template_id}#{instance_index}: no answer choices")]
    NoAnswers {
        template_id: String,
        instance_index: usize,
    },
}

pub fn answer_block(answers: &[AnswerChoice]) -> String {
    let mut out = String::from("Options:");
    for a in answers {
        out.push('\n');
        out.push_str(&a.key);
        out.push_str(". ");
        out.push_str(&a.text);
    }
    out
}

/// Renders one instance at one level.
///
/// The directive is the scenario body followed by the level-1 text when the
/// template authors one; other components are mandatory for the levels that
/// include them.
pub fn build_prompt(instance: &ScenarioInstance, level: TelerLevel) -> Result<Prompt, PromptError> {
    if instance.resolved_answers.is_empty() {
        return Err(PromptError::NoAnswers {
            template_id: instance.template_id.clone(),
            instance_index: instance.instance_index,
        });
    }
    let recipe = LevelRecipe::for_level(level);
    let mut sections: Vec<String> = Vec::with_capacity(recipe.components.len());
    for component in &recipe.components {
        match component.authored() {
            Some(ComponentKind::Directive) => {
                let mut directive = instance.resolved_body.trim().to_string();
                if let Some(ask) = instance
                    .resolved_level_components
                    .get(&ComponentKind::Directive)
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                {
                    if !directive.is_empty() {
                        directive.push(' ');
                    }
                    directive.push_str(ask);
                }
                if directive.is_empty() {
                    return Err(missing(instance, level, ComponentKind::Directive));
                }
                sections.push(directive);
            }
            Some(kind) => {
                let text = instance
                    .resolved_level_components
                    .get(&kind)
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| missing(instance, level, kind))?;
                sections.push(text.to_string());
            }
            None => sections.push(answer_block(&instance.resolved_answers)),
        }
    }
    Ok(Prompt {
        key: PromptKey {
            template_id: instance.template_id.clone(),
            instance_index: instance.instance_index,
            level,
        },
        bias: instance.bias,
        text: sections.join("\n\n"),
        answers: instance.resolved_answers.clone(),
    })
}

fn missing(instance: &ScenarioInstance, level: TelerLevel, component: ComponentKind) -> PromptError {
    PromptError::MissingComponent {
        template_id: instance.template_id.clone(),
        instance_index: instance.instance_index,
        level: level.get(),
        component,
    }
}

/// Renders every instance at all five levels, ordered by
/// `(template_id, instance_index, level)`.
pub fn expand_prompt_set(instances: &[ScenarioInstance]) -> Result<Vec<Prompt>, PromptError> {
    let mut sorted: Vec<&ScenarioInstance> = instances.iter().collect();
    sorted.sort_by(|a, b| {
        (a.template_id.as_str(), a.instance_index).cmp(&(b.template_id.as_str(), b.instance_index))
    });
    let mut prompts = Vec::with_capacity(instances.len() * 5);
    for inst in sorted {
        for level in TelerLevel::ALL {
            prompts.push(build_prompt(inst, level)?);
        }
    }
    Ok(prompts)
}
