use serde::{Deserialize, Serialize};

use super::{EngineConfig, EngineError, FitnessWeights, InnerLoss};
use crate::exprtree::ExpressionTree;
use crate::physlab::Dataset;

/// Critic term used when no verdict is available.
pub const NEUTRAL_C: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessBreakdown {
    /// Inner loss relative to the mean predictor, clamped to `[0, 1]`.
    pub e: f64,
    /// Size relative to a full binary tree at the depth cap.
    pub s: f64,
    pub c: f64,
    #[serde(rename = "L")]
    pub loss: f64,
    pub degenerate: bool,
}

/// Node count of a full binary tree of height `max_depth`.
pub fn size_cap(max_depth: usize) -> f64 {
    2f64.powi(max_depth as i32 + 1) - 1.0
}

/// Training data prepared for repeated scoring.
pub(crate) struct FitData {
    pub columns: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    inner: InnerLoss,
    /// Inner loss of predicting `mean(y)` everywhere.
    baseline: f64,
}

impl FitData {
    pub fn new(columns: Vec<Vec<f64>>, y: Vec<f64>, inner: InnerLoss) -> Self {
        let n = y.len().max(1) as f64;
        let mean = y.iter().sum::<f64>() / n;
        let baseline = y.iter().map(|v| inner.pointwise(v - mean)).sum::<f64>() / n;
        Self {
            columns,
            y,
            inner,
            baseline,
        }
    }

    pub fn from_dataset(data: &Dataset, inner: InnerLoss) -> Self {
        Self::new(data.columns(), data.y.clone(), inner)
    }

    /// `(e, degenerate)`.
    pub fn error(&self, tree: &ExpressionTree) -> (f64, bool) {
        let pred = tree.evaluate_columns(&self.columns, self.y.len());
        if pred.degenerate {
            return (1.0, true);
        }
        let n = self.y.len().max(1) as f64;
        let loss = pred
            .values
            .iter()
            .zip(&self.y)
            .map(|(p, t)| self.inner.pointwise(p - t))
            .sum::<f64>()
            / n;
        let e = if self.baseline > 0.0 {
            loss / self.baseline
        } else if loss == 0.0 {
            0.0
        } else {
            1.0
        };
        // NaN (inf / inf) counts as the worst fit.
        (if e.is_nan() { 1.0 } else { e.clamp(0.0, 1.0) }, false)
    }
}

pub(crate) fn combine(
    e: f64,
    degenerate: bool,
    size: usize,
    critic_c: Option<f64>,
    weights: &FitnessWeights,
    max_depth: usize,
) -> FitnessBreakdown {
    let s = (size as f64 / size_cap(max_depth)).clamp(0.0, 1.0);
    let c = critic_c.unwrap_or(NEUTRAL_C);
    let loss = if degenerate {
        1.0
    } else {
        (weights.w1() * e + weights.w2() * s + weights.w3() * c).clamp(0.0, 1.0)
    };
    FitnessBreakdown {
        e,
        s,
        c,
        loss,
        degenerate,
    }
}

/// Scores `tree` on `data` with the engine's weights, inner loss and depth
/// cap. `critic_c` of `None` means no verdict, which scores as neutral.
pub fn composite_loss(
    tree: &ExpressionTree,
    data: &Dataset,
    critic_c: Option<f64>,
    cfg: &EngineConfig,
) -> Result<FitnessBreakdown, EngineError> {
    tree.check_schema(data.schema())?;
    composite_loss_on(tree, &data.columns(), &data.y, critic_c, cfg)
}

/// [`composite_loss`] over raw columns and targets.
pub fn composite_loss_on(
    tree: &ExpressionTree,
    columns: &[Vec<f64>],
    y: &[f64],
    critic_c: Option<f64>,
    cfg: &EngineConfig,
) -> Result<FitnessBreakdown, EngineError> {
    if let Some(c) = critic_c {
        if !(0.0..=1.0).contains(&c) {
            return Err(EngineError::CriticValue(c));
        }
    }
    let w = cfg.weights;
    FitnessWeights::new(w.w1(), w.w2(), w.w3())?;
    if let Some(i) = tree.root().max_var_index() {
        if i >= columns.len() {
            return Err(EngineError::Config(format!(
                "tree uses variable {i} but data has {} columns",
                columns.len()
            )));
        }
    }
    let data = FitData::new(columns.to_vec(), y.to_vec(), cfg.inner_loss);
    let (e, degenerate) = data.error(tree);
    Ok(combine(
        e,
        degenerate,
        tree.size(),
        critic_c,
        &w,
        cfg.max_depth,
    ))
}
