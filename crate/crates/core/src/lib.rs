//! Cognitive-bias evaluation harness for chat models.
//!
//! The pipeline turns scenario templates into controlled prompt sets,
//! collects model responses, extracts the implicit answer from free-form
//! text and aggregates bias-resistance scores:
//!
//! * [`template`] parses scenario templates and expands them into concrete
//!   instances through phrase slots and numeric expressions.
//! * [`prompt`] renders each instance at five levels of prompt detail.
//! * [`gateway`] submits prompts to chat-completion endpoints (or to a
//!   seeded simulator) and persists the responses.
//! * [`extraction`] scores every answer choice by fuzzy presence and local
//!   sentiment, then picks the implicit choice.
//! * [`scoring`] classifies responses and aggregates resistance scores.
//! * [`stats`] holds the OLS / partial F-test machinery.
//! * [`pipeline`] wires the stages together around a run manifest.

pub mod bias;
pub mod extraction;
pub mod gateway;
pub mod pipeline;
pub mod prompt;
pub mod scoring;
pub mod stats;
pub mod template;

pub use bias::BiasCategory;
pub use extraction::{extract, presence, sentiment_weight, similarity, AnswerScores, ExtractionConfig};
pub use prompt::{build_prompt, expand_prompt_set, Prompt, PromptKey, TelerLevel};
pub use scoring::{classify, resistance, Classification, Outcome, ResistanceScore};
pub use template::{
    fill_template, parse_template, validate_corpus, AnswerChoice, AnswerLabel, PhraseLexicon,
    ScenarioInstance, TemplateScenario,
};
