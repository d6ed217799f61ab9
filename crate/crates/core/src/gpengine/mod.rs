//! Genetic-programming search minimizing the composite loss
//! `L = w1 * e + w2 * s + w3 * c`.

mod engine;
mod fitness;
mod variation;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprtree::{BinaryOp, ExprError, Operator, UnaryOp, DEFAULT_DEPTH_CAP};
use crate::physlab::PhysError;

pub use engine::{run, run_from, SearchOutcome, SearchResult, TracePoint};
pub use fitness::{composite_loss, composite_loss_on, size_cap, FitnessBreakdown, NEUTRAL_C};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("weights must be three values in [0, 1] summing to 1, got {0:?}")]
    Weights(Vec<f64>),
    #[error("critic value must lie in [0, 1], got {0}")]
    CriticValue(f64),
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Data(#[from] PhysError),
}

const WEIGHT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct FitnessWeights {
    w1: f64,
    w2: f64,
    w3: f64,
}

impl FitnessWeights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self, EngineError> {
        let ws = [w1, w2, w3];
        let in_range = ws.iter().all(|w| w.is_finite() && (0.0..=1.0).contains(w));
        if !in_range || (w1 + w2 + w3 - 1.0).abs() > WEIGHT_TOL {
            return Err(EngineError::Weights(ws.to_vec()));
        }
        Ok(Self { w1, w2, w3 })
    }

    /// Divides non-negative raw weights by their sum.
    pub fn normalized(w1: f64, w2: f64, w3: f64) -> Result<Self, EngineError> {
        let sum = w1 + w2 + w3;
        if !(sum.is_finite() && sum > 0.0) || [w1, w2, w3].iter().any(|w| *w < 0.0) {
            return Err(EngineError::Weights(vec![w1, w2, w3]));
        }
        Self::new(w1 / sum, w2 / sum, w3 / sum)
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }
    pub fn w2(&self) -> f64 {
        self.w2
    }
    pub fn w3(&self) -> f64 {
        self.w3
    }
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self {
            w1: 0.6,
            w2: 0.1,
            w3: 0.3,
        }
    }
}

impl TryFrom<[f64; 3]> for FitnessWeights {
    type Error = EngineError;

    fn try_from(w: [f64; 3]) -> Result<Self, Self::Error> {
        Self::new(w[0], w[1], w[2])
    }
}

impl From<FitnessWeights> for [f64; 3] {
    fn from(w: FitnessWeights) -> Self {
        [w.w1, w.w2, w.w3]
    }
}

impl FromStr for FitnessWeights {
    type Err = EngineError;

    /// `"0.6,0.1,0.3"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| EngineError::Weights(vec![]))?;
        match parts[..] {
            [a, b, c] => Self::new(a, b, c),
            _ => Err(EngineError::Weights(parts)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InnerLoss {
    Squared,
    Huber { delta: f64 },
}

impl InnerLoss {
    pub fn pointwise(self, residual: f64) -> f64 {
        match self {
            InnerLoss::Squared => residual * residual,
            InnerLoss::Huber { delta } => {
                let a = residual.abs();
                if a <= delta {
                    0.5 * residual * residual
                } else {
                    delta * (a - 0.5 * delta)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub rel_improvement: f64,
    pub patience_generations: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            rel_improvement: 0.001,
            patience_generations: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnginePreset {
    DeapLike,
    GplearnLike,
    PysrLike,
}

impl EnginePreset {
    pub const ALL: [EnginePreset; 3] = [Self::DeapLike, Self::GplearnLike, Self::PysrLike];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DeapLike => "deap_like",
            Self::GplearnLike => "gplearn_like",
            Self::PysrLike => "pysr_like",
        }
    }

    pub fn operator_set(self) -> Vec<Operator> {
        use BinaryOp::*;
        use UnaryOp::*;
        let (bin, un): (&[BinaryOp], &[UnaryOp]) = match self {
            Self::DeapLike => (&[Add, Sub, Mul, Div], &[Neg, Log, Sin, Cos]),
            Self::GplearnLike => (&[Add, Sub, Mul, Div], &[Neg, Exp, Log, Sin, Cos]),
            Self::PysrLike => (&[Add, Sub, Mul, Div, Pow], &[Neg, Exp, Log, Sin, Cos]),
        };
        bin.iter()
            .map(|&b| Operator::Binary(b))
            .chain(un.iter().map(|&u| Operator::Unary(u)))
            .collect()
    }

    /// `(crossover_prob, mutation_prob)`.
    pub fn genetic_rates(self) -> (f64, f64) {
        match self {
            Self::DeapLike => (0.6, 0.05),
            Self::GplearnLike => (0.9, 0.1),
            Self::PysrLike => (0.1, 0.9),
        }
    }

    pub fn inner_loss(self) -> InnerLoss {
        match self {
            Self::PysrLike => InnerLoss::Huber { delta: 1.0 },
            _ => InnerLoss::Squared,
        }
    }
}

impl fmt::Display for EnginePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnginePreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                format!("unknown preset `{s}` (expected deap_like, gplearn_like, pysr_like)")
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub population_size: usize,
    /// Populations evaluated, counting the initial one.
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub tournament_size: usize,
    pub max_depth: usize,
    /// Smallest height in the ramped initial population.
    pub init_depth: usize,
    /// Largest height in the ramped initial population; `None` means `max_depth`.
    pub init_max_depth: Option<usize>,
    pub operator_set: Vec<Operator>,
    pub weights: FitnessWeights,
    pub early_stop: EarlyStop,
    pub inner_loss: InnerLoss,
    /// Distinct candidates (best by data fit, then size) scored by the critic
    /// each generation.
    pub critic_budget: usize,
    /// Ephemeral constants are drawn uniformly from `[-c, c]`.
    pub constant_range: f64,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self::preset(EnginePreset::GplearnLike)
    }
}

impl EngineConfig {
    pub fn preset(preset: EnginePreset) -> Self {
        let (crossover_prob, mutation_prob) = preset.genetic_rates();
        Self {
            population_size: 100,
            generations: 50,
            crossover_prob,
            mutation_prob,
            tournament_size: 3,
            max_depth: DEFAULT_DEPTH_CAP,
            init_depth: 1,
            init_max_depth: None,
            operator_set: preset.operator_set(),
            weights: FitnessWeights::default(),
            early_stop: EarlyStop::default(),
            inner_loss: preset.inner_loss(),
            critic_budget: 10,
            constant_range: 5.0,
            seed: 0,
        }
    }

    /// The DEAP-style preset with the lower tabulated rates (0.05 / 0.01).
    pub fn deap_like_tabulated() -> Self {
        Self {
            crossover_prob: 0.05,
            mutation_prob: 0.01,
            ..Self::preset(EnginePreset::DeapLike)
        }
    }

    pub fn init_max_depth(&self) -> usize {
        self.init_max_depth
            .unwrap_or(self.max_depth)
            .min(self.max_depth)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        if self.generations == 0 {
            return bad("generations must be at least 1");
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be at least 1");
        }
        if self.operator_set.is_empty() {
            return bad("operator_set is empty");
        }
        if self.init_depth > self.init_max_depth() {
            return bad("init_depth exceeds the initial depth limit");
        }
        if !(self.constant_range.is_finite() && self.constant_range >= 0.0) {
            return bad("constant_range must be finite and non-negative");
        }
        if !(self.early_stop.rel_improvement.is_finite() && self.early_stop.rel_improvement >= 0.0)
            || self.early_stop.patience_generations == 0
        {
            return bad("early_stop needs a finite rel_improvement >= 0 and patience >= 1");
        }
        if let InnerLoss::Huber { delta } = self.inner_loss {
            if !(delta.is_finite() && delta > 0.0) {
                return bad("huber delta must be positive");
            }
        }
        // Re-check weights in case the struct was built field by field.
        FitnessWeights::new(self.weights.w1, self.weights.w2, self.weights.w3)?;
        Ok(())
    }

    pub(crate) fn binary_ops(&self) -> Vec<BinaryOp> {
        let mut v: Vec<BinaryOp> = self
            .operator_set
            .iter()
            .filter_map(|o| match o {
                Operator::Binary(b) => Some(*b),
                _ => None,
            })
            .collect();
        v.sort();
        v.dedup();
        v
    }

    pub(crate) fn unary_ops(&self) -> Vec<UnaryOp> {
        let mut v: Vec<UnaryOp> = self
            .operator_set
            .iter()
            .filter_map(|o| match o {
                Operator::Unary(u) => Some(*u),
                _ => None,
            })
            .collect();
        v.sort();
        v.dedup();
        v
    }
}
