use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The eight bias categories covered by the scenario corpus.
///
/// Variant order is the column order used in every report table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasCategory {
    Anchoring,
    Availability,
    Confirmation,
    Framing,
    Overattribution,
    ProspectTheory,
    Representativeness,
    Interpretation,
}

impl BiasCategory {
    pub const ALL: [BiasCategory; 8] = [
        BiasCategory::Anchoring,
        BiasCategory::Availability,
        BiasCategory::Confirmation,
        BiasCategory::Framing,
        BiasCategory::Overattribution,
        BiasCategory::ProspectTheory,
        BiasCategory::Representativeness,
        BiasCategory::Interpretation,
    ];

    /// Identifier used in files and on the command line.
    pub fn slug(self) -> &'static str {
        match self {
            BiasCategory::Anchoring => "anchoring",
            BiasCategory::Availability => "availability",
            BiasCategory::Confirmation => "confirmation",
            BiasCategory::Framing => "framing",
            BiasCategory::Overattribution => "overattribution",
            BiasCategory::ProspectTheory => "prospect_theory",
            BiasCategory::Representativeness => "representativeness",
            BiasCategory::Interpretation => "interpretation",
        }
    }

    /// Human-readable name used as a table header.
    pub fn display_name(self) -> &'static str {
        match self {
            BiasCategory::Anchoring => "Anchoring",
            BiasCategory::Availability => "Availability",
            BiasCategory::Confirmation => "Confirmation",
            BiasCategory::Framing => "Framing",
            BiasCategory::Overattribution => "Overattribution",
            BiasCategory::ProspectTheory => "Prospect Theory",
            BiasCategory::Representativeness => "Representativeness",
            BiasCategory::Interpretation => "Interpretation",
        }
    }
}

impl fmt::Display for BiasCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown bias category `{0}`")]
pub struct UnknownBias(pub String);

impl FromStr for BiasCategory {
    type Err = UnknownBias;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        let bias = match folded.as_str() {
            "anchoring" => BiasCategory::Anchoring,
            "availability" => BiasCategory::Availability,
            "confirmation" => BiasCategory::Confirmation,
            "framing" => BiasCategory::Framing,
            "overattribution" => BiasCategory::Overattribution,
            "prospecttheory" | "prospect" => BiasCategory::ProspectTheory,
            "representativeness" => BiasCategory::Representativeness,
            "interpretation" => BiasCategory::Interpretation,
            _ => return Err(UnknownBias(s.to_string())),
        };
        Ok(bias)
    }
}
