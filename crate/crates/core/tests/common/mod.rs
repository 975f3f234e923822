#![allow(dead_code)]

pub mod oracle;
pub mod reference_stats;

use std::path::{Path, PathBuf};

use cogbias::template::{AnswerChoice, AnswerLabel};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
pub struct Fixture {
    pub id: String,
    pub style: String,
    pub answers: Vec<AnswerChoice>,
    pub response: String,
    pub expected: Option<String>,
}

pub fn fixtures() -> Vec<Fixture> {
    let src = include_str!("../fixtures/extraction_fixtures.json");
    serde_json::from_str(src).expect("fixture file parses")
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn choice(key: &str, text: &str, label: AnswerLabel) -> AnswerChoice {
    AnswerChoice {
        key: key.into(),
        text: text.into(),
        label,
    }
}

pub fn flight_choices() -> Vec<AnswerChoice> {
    vec![
        choice("A", "No, because flying is too dangerous right now", AnswerLabel::Biased),
        choice("B", "Yes, because the likelihood of a plane crash is actually very low", AnswerLabel::Unbiased),
    ]
}

pub fn photographer_choices() -> Vec<AnswerChoice> {
    vec![
        choice("A", "Benjamin", AnswerLabel::Biased),
        choice("B", "James", AnswerLabel::Biased),
        choice("C", "It could be either", AnswerLabel::Unbiased),
    ]
}

/// Gemma 2 9B, level 2, temperature 0.2, availability prompt.
pub const FLIGHT_RESPONSE: &str = "**B. Yes, because the likelihood of a plane crash is actually very low** Here's why:* **Anecdotal Evidence:**  Stories about plane crashes, while impactful, are anecdotal evidence. They don't represent the overall statistical reality. * **Actual Likelihood:**  Flying is statistically one of the safest modes of transportation. The chances of being in a fatal plane crash are extremely low. It's natural to be concerned about safety, but it's important to base decisions on facts and statistics rather than isolated incidents.";

/// Same model and configuration, representativeness prompt.
pub const PHOTOGRAPHER_RESPONSE: &str = "**A. Benjamin** While there's no definitive link between clothing style and profession, the description of Benjamin's attire (baggy designer shirt, tattoos)  is more commonly associated with creative fields, which could align with a photographer.";

/// `count` minimal templates, each with one phrase slot and one numeric
/// placeholder, plus the lexicon they need.
pub fn write_stub_corpus(dir: &Path, count: usize) -> PathBuf {
    let corpus = dir.join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    let biases = [
        "anchoring",
        "availability",
        "confirmation",
        "framing",
        "overattribution",
        "prospect_theory",
        "representativeness",
        "interpretation",
    ];
    for i in 0..count {
        let bias = biases[i % biases.len()];
        let src = format!(
            r#"id = "stub-{i:03}"
bias = "{bias}"
body = "Scenario {i}: a <thing> costs <price> dollars."

[levels]
1 = "Is it worth buying?"
2 = "Context for scenario {i}."
3 = "Subtasks for scenario {i}."
4 = "Quality criteria for scenario {i}."
5 = "Facts for scenario {i}."

[[answers]]
key = "A"
text = "Buy it now"
label = "biased"

[[answers]]
key = "B"
text = "Compare prices first"
label = "unbiased"

[[placeholders]]
name = "thing"
kind = "phrase"
slot = "thing"

[[placeholders]]
name = "price"
kind = "numeric"
expr = "[10, 500]"
"#
        );
        std::fs::write(corpus.join(format!("stub-{i:03}.toml")), src).unwrap();
    }
    let lexicon = dir.join("lexicon.toml");
    std::fs::write(&lexicon, "thing = [\"lamp\", \"chair\", \"bicycle\", \"kettle\"]\n").unwrap();
    lexicon
}

/// Writes a manifest next to `corpus` and returns its path.
pub fn write_manifest(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("manifest.toml");
    std::fs::write(&path, body).unwrap();
    path
}

/// Every file under `root` with its bytes, sorted by relative path.
pub fn tree_contents(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
