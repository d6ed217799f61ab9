use super::units::check_units;
use super::{Critic, CriticError, CriticVerdict};
use crate::exprtree::ExpressionTree;
use crate::physlab::ScenarioSpec;
use crate::treemetric::{tree_score, TreeDistanceConfig};

/// Size at which the simplicity score reaches zero (a full binary tree of
/// height 4).
pub const SIMP_SIZE_LIMIT: f64 = 31.0;
const PENALTY_PER_VIOLATION: f64 = 0.25;

/// Deterministic rule-based verdict:
/// * `dim_corr`: 1 minus 0.25 per unit violation, floored at 0;
/// * `simp`: `max(0, 1 - size / 31)`;
/// * `sim`: structural similarity to the scenario's ground truth.
pub fn mock_score(equation: &ExpressionTree, scenario: &ScenarioSpec) -> CriticVerdict {
    let (violations, sig_note) =
        match check_units(equation, &scenario.schema, Some(&scenario.target_unit)) {
            Ok(u) => (u.violations, None),
            // Out-of-schema variables count as one violation.
            Err(e) => (1, Some(e)),
        };
    let dim_corr = (1.0 - PENALTY_PER_VIOLATION * violations as f64).max(0.0);
    let simp = (1.0 - equation.size() as f64 / SIMP_SIZE_LIMIT).max(0.0);
    let sim = tree_score(equation, &scenario.gt_tree, &TreeDistanceConfig::default());
    let mut feedback = match violations {
        0 => "Units consistent".to_string(),
        1 => "1 unit violation".to_string(),
        n => format!("{n} unit violations"),
    };
    if let Some(note) = sig_note {
        feedback.push_str(&format!(" ({note})"));
    }
    CriticVerdict::new(dim_corr, simp, sim, feedback)
}

/// [`mock_score`] bound to one scenario.
#[derive(Clone, Debug)]
pub struct MockCritic {
    scenario: ScenarioSpec,
}

impl MockCritic {
    pub fn new(scenario: ScenarioSpec) -> Self {
        Self { scenario }
    }
}

impl Critic for MockCritic {
    fn label(&self) -> String {
        "mock".to_string()
    }

    fn score(&self, equation: &ExpressionTree) -> Result<CriticVerdict, CriticError> {
        Ok(mock_score(equation, &self.scenario))
    }
}
