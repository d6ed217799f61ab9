//! Knowledge critics: score a candidate equation for dimensional
//! consistency, simplicity, and physical realism.
//!
//! The three scores in `[0, 1]` (higher is better) aggregate into
//! `c = 1 - mean(scores)`, which enters the composite loss where lower is
//! better. Two implementations ship: an LLM critic that speaks the
//! chat-completion wire format, and a deterministic rule-based mock.

mod llm;
mod mock;
mod parse;
mod prompt;
pub mod units;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprtree::{ExprError, ExpressionTree};

pub use llm::{
    cache_key, CacheRecord, ChatRequest, LlmCritic, LlmEndpoint, VerdictCache, DEFAULT_MAX_TOKENS,
};
pub use mock::{mock_score, MockCritic};
pub use parse::{parse_verdict, parse_verdict_bytes};
pub use prompt::{build_prompt, PromptContext, PromptVariant};

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("critic transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("no well-formed [dim_corr, simp, sim, \"feedback\"] list in response: {raw:?}")]
    Parse { raw: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("critic configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictFlags {
    /// At least one score was outside `[0, 1]` and was clamped.
    pub clamped: bool,
    /// The response contained text around the list.
    pub extra_text: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticVerdict {
    pub dim_corr: f64,
    pub simp: f64,
    pub sim: f64,
    pub feedback: String,
    pub c: f64,
    #[serde(default)]
    pub flags: VerdictFlags,
}

/// `c = 1 - (c1 + c2 + c3) / 3`.
pub fn aggregate(dim_corr: f64, simp: f64, sim: f64) -> f64 {
    1.0 - (dim_corr + simp + sim) / 3.0
}

fn clamp_unit(v: f64, clamped: &mut bool) -> f64 {
    if v.is_nan() {
        *clamped = true;
        return 0.0;
    }
    let c = v.clamp(0.0, 1.0);
    if c != v {
        *clamped = true;
    }
    c
}

impl CriticVerdict {
    /// Clamps each score into `[0, 1]` (recording it in `flags`) and computes
    /// the aggregate.
    pub fn new(dim_corr: f64, simp: f64, sim: f64, feedback: impl Into<String>) -> Self {
        let mut clamped = false;
        let dim_corr = clamp_unit(dim_corr, &mut clamped);
        let simp = clamp_unit(simp, &mut clamped);
        let sim = clamp_unit(sim, &mut clamped);
        Self {
            dim_corr,
            simp,
            sim,
            feedback: feedback.into(),
            c: aggregate(dim_corr, simp, sim),
            flags: VerdictFlags {
                clamped,
                extra_text: false,
            },
        }
    }
}

/// Anything that can score a candidate equation. Implementations are bound to
/// their context (schema, scenario, prompt) at construction.
pub trait Critic: Send + Sync {
    /// Short name used in reports, such as `mock` or a model name.
    fn label(&self) -> String;

    fn score(&self, equation: &ExpressionTree) -> Result<CriticVerdict, CriticError>;
}
