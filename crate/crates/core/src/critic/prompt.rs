use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::physlab::ScenarioSpec;

/// Which optional context components go into the prompt.
///
/// | variant | descriptions | experiment | ground truth |
/// |---------|:---:|:---:|:---:|
/// | A | | | |
/// | B | x | | |
/// | C | | x | |
/// | D | | | x |
/// | E | x | x | |
/// | F | x | | x |
/// | G | | x | x |
/// | H | x | x | x |
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum PromptVariant {
    #[default]
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 8] = [
        Self::A,
        Self::B,
        Self::C,
        Self::D,
        Self::E,
        Self::F,
        Self::G,
        Self::H,
    ];

    /// `(variable descriptions, experiment description, ground truth)`.
    pub fn components(self) -> (bool, bool, bool) {
        match self {
            Self::A => (false, false, false),
            Self::B => (true, false, false),
            Self::C => (false, true, false),
            Self::D => (false, false, true),
            Self::E => (true, true, false),
            Self::F => (true, false, true),
            Self::G => (false, true, true),
            Self::H => (true, true, true),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D => "D",
            Self::E => "E",
            Self::F => "F",
            Self::G => "G",
            Self::H => "H",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown prompt variant `{s}` (expected A-H)"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub variant: PromptVariant,
    pub variable_descriptions: Option<String>,
    pub experiment_description: Option<String>,
    pub gt_formula: Option<String>,
}

pub const VARIABLES_HEADING: &str = "Variable descriptions:";
pub const EXPERIMENT_HEADING: &str = "Experiment description:";
pub const GROUND_TRUTH_HEADING: &str = "Ground-truth equation:";

impl PromptContext {
    /// Context for `scenario` carrying all three components; the variant
    /// decides which are injected.
    pub fn for_scenario(variant: PromptVariant, scenario: &ScenarioSpec) -> Self {
        Self {
            variant,
            variable_descriptions: Some(scenario.variable_descriptions()),
            experiment_description: Some(scenario.description.clone()),
            gt_formula: Some(format!("y = {}", scenario.ground_truth_string())),
        }
    }

    /// The text placed after `Context:`, or `None` when nothing is injected.
    pub fn context_block(&self) -> Option<String> {
        let (vars, exp, gt) = self.variant.components();
        let mut parts = Vec::new();
        if vars {
            if let Some(text) = &self.variable_descriptions {
                parts.push(format!("{VARIABLES_HEADING}\n{text}"));
            }
        }
        if exp {
            if let Some(text) = &self.experiment_description {
                parts.push(format!("{EXPERIMENT_HEADING}\n{text}"));
            }
        }
        if gt {
            if let Some(text) = &self.gt_formula {
                parts.push(format!("{GROUND_TRUTH_HEADING}\n{text}"));
            }
        }
        if parts.is_empty() {
            None
        } else {
            Some(parts.join("\n\n"))
        }
    }
}

const PROMPT_HEAD: &str = "
### ROLE
You are an expert *scientific-reasoning* assistant.
Return **ONLY** a Python-style list:
[dim_corr, simp, sim, \"feedback\"].

### METRICS
dim_corr . 0 (wrong) -> 1 (perfect)
simp     . 0 (complex) -> 1 (simple)
sim      . 0 (unrealistic) -> 1 (realistic)


### FEW-SHOT EXAMPLES
#1  Equation:  x = v0 * t + 0.5 * g * t^2 \x20
    Output:    [0.95, 0.80, 0.92, \"Classic kinematics\"]
#2  Equation:  E = m + c \x20
    Output:    [0.05, 0.70, 0.15, \"Units mismatch\"]
#3  Equation:  y = sin(sin(x)) \x20
    Output:    [0.90, 0.10, 0.40, \"Needless nesting\"]

### TASK
Equation to evaluate:
";

const PROMPT_TAIL: &str = "\n\nThink step-by-step silently, then output the list only.\n";

/// Fills the fixed critic template with `equation` and the context the
/// variant selects. Byte-stable for identical inputs.
pub fn build_prompt(equation: &str, ctx: &PromptContext) -> String {
    let context = ctx
        .context_block()
        .map(|c| format!("Context:\n{c}"))
        .unwrap_or_default();
    format!("{PROMPT_HEAD}{equation}\n\n{context}{PROMPT_TAIL}")
}
