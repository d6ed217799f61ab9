//! Experiment matrices: run every (scenario, preset, critic, noise, repeat)
//! cell, grade the best equation on a fresh noiseless holdout, and write
//! pivot tables.

mod tables;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::critic::{
    Critic, LlmCritic, LlmEndpoint, MockCritic, PromptContext, PromptVariant, VerdictCache,
};
use crate::gpengine::{self, EngineConfig, EnginePreset, FitnessWeights};
use crate::physlab::{generate, NoiseSpec, SamplingRanges, ScenarioId, ScenarioSpec};
use crate::treemetric::{tree_score, TreeDistanceConfig};

pub use tables::{format_metric, render_tables, TableFiles};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which critic a column of the matrix uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CriticSpec {
    Null,
    Mock {
        #[serde(default)]
        variant: PromptVariant,
    },
    Llm {
        endpoint: LlmEndpoint,
        #[serde(default)]
        variant: PromptVariant,
        /// JSON-lines verdict cache shared by every cell using this endpoint.
        #[serde(default)]
        cache: Option<PathBuf>,
    },
}

impl CriticSpec {
    pub fn label(&self) -> String {
        match self {
            CriticSpec::Null => "baseline".into(),
            CriticSpec::Mock { .. } => "mock".into(),
            CriticSpec::Llm { endpoint, .. } => endpoint.model_name.clone(),
        }
    }

    pub fn variant(&self) -> Option<PromptVariant> {
        match self {
            CriticSpec::Null => None,
            CriticSpec::Mock { variant } | CriticSpec::Llm { variant, .. } => Some(*variant),
        }
    }
}

/// Engine settings applied on top of each preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineOverrides {
    pub population_size: Option<usize>,
    pub generations: Option<usize>,
    pub weights: Option<FitnessWeights>,
    pub critic_budget: Option<usize>,
}

fn default_repeats() -> usize {
    3
}
fn default_samples() -> usize {
    500
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenarios: Vec<ScenarioId>,
    pub presets: Vec<EnginePreset>,
    pub critics: Vec<CriticSpec>,
    /// Empty means every cell uses the 1% target-noise baseline.
    #[serde(default)]
    pub noise_axis: Vec<NoiseSpec>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub engine: EngineOverrides,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_samples")]
    pub holdout_samples: usize,
    /// Replace every LLM critic with the mock (labelled `mock`).
    #[serde(default)]
    pub offline: bool,
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        // A blank file reads as an empty object so the error names the first missing field.
        let text = if text.trim().is_empty() { "{}" } else { text };
        let plan: Self = serde_json::from_str(text).map_err(|e| BenchError::Plan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let empty = |name: &str| Err(BenchError::Plan(format!("`{name}` must not be empty")));
        if self.scenarios.is_empty() {
            return empty("scenarios");
        }
        if self.presets.is_empty() {
            return empty("presets");
        }
        if self.critics.is_empty() {
            return empty("critics");
        }
        if self.repeats == 0 {
            return Err(BenchError::Plan("`repeats` must be at least 1".into()));
        }
        if self.n_samples < 2 || self.holdout_samples < 2 {
            return Err(BenchError::Plan("sample counts must be at least 2".into()));
        }
        for n in &self.noise_axis {
            n.validate().map_err(|e| BenchError::Plan(e.to_string()))?;
        }
        for c in &self.critics {
            if let CriticSpec::Llm { endpoint, .. } = c {
                endpoint
                    .validate()
                    .map_err(|e| BenchError::Plan(e.to_string()))?;
            }
        }
        Ok(())
    }

    fn noise_levels(&self) -> Vec<NoiseSpec> {
        if self.noise_axis.is_empty() {
            vec![NoiseSpec::baseline()]
        } else {
            self.noise_axis.clone()
        }
    }

    /// Every cell in a fixed nested order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &scenario in &self.scenarios {
            for &preset in &self.presets {
                for (critic_index, critic) in self.critics.iter().enumerate() {
                    for noise in self.noise_levels() {
                        for repeat in 0..self.repeats {
                            let label = if self.offline && matches!(critic, CriticSpec::Llm { .. })
                            {
                                "mock".to_string()
                            } else {
                                critic.label()
                            };
                            out.push(Cell {
                                scenario,
                                preset,
                                critic_index,
                                critic: label,
                                variant: critic.variant(),
                                noise,
                                repeat,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn engine_config(&self, preset: EnginePreset, seed: u64) -> EngineConfig {
        let mut cfg = EngineConfig::preset(preset);
        let o = &self.engine;
        if let Some(v) = o.population_size {
            cfg.population_size = v;
        }
        if let Some(v) = o.generations {
            cfg.generations = v;
        }
        if let Some(v) = o.weights {
            cfg.weights = v;
        }
        if let Some(v) = o.critic_budget {
            cfg.critic_budget = v;
        }
        cfg.seed = seed;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub scenario: ScenarioId,
    pub preset: EnginePreset,
    pub critic_index: usize,
    pub critic: String,
    pub variant: Option<PromptVariant>,
    pub noise: NoiseSpec,
    pub repeat: usize,
}

impl Cell {
    /// Identifies the cell up to the repeat index.
    pub fn group_key(&self) -> String {
        format!(
            "{}/{}/{}#{}/{}/{}@{}",
            self.scenario,
            self.preset,
            self.critic,
            self.critic_index,
            self.variant.map(|v| v.as_str()).unwrap_or("-"),
            self.noise.target.as_str(),
            self.noise.level
        )
    }

    pub fn key(&self) -> String {
        format!("{}/r{}", self.group_key(), self.repeat)
    }

    /// `base_seed + hash(cell) + repeat`, wrapping.
    pub fn seed(&self, base_seed: u64) -> u64 {
        let digest = Sha256::digest(self.group_key().as_bytes());
        let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        base_seed.wrapping_add(h).wrapping_add(self.repeat as u64)
    }
}

/// Offset separating the holdout seed from the training seed.
const HOLDOUT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub cell: String,
    pub scenario: ScenarioId,
    pub preset: EnginePreset,
    pub critic: String,
    pub variant: Option<PromptVariant>,
    pub noise: NoiseSpec,
    pub repeat: usize,
    pub seed: u64,
    pub mae: Option<f64>,
    pub mse: Option<f64>,
    pub r2: Option<f64>,
    pub tree_score: Option<f64>,
    pub best_equation: Option<String>,
    pub generations_used: usize,
    pub critic_calls: usize,
    pub critic_failures: usize,
    pub failure: Option<String>,
    /// Seconds; kept out of the JSON-lines output so it stays reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub mae: f64,
    pub mse: f64,
    pub r2: f64,
}

pub fn fit_metrics(pred: &[f64], truth: &[f64]) -> Result<FitMetrics, BenchError> {
    if pred.len() != truth.len() || truth.len() < 2 {
        return Err(BenchError::Metrics(format!(
            "need equal lengths of at least 2, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut tot = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        let r = p - t;
        abs += r.abs();
        sq += r * r;
        tot += (t - mean) * (t - mean);
    }
    if tot == 0.0 {
        return Err(BenchError::Metrics(
            "r2 is undefined for a constant target".into(),
        ));
    }
    Ok(FitMetrics {
        mae: abs / n,
        mse: sq / n,
        r2: 1.0 - sq / tot,
    })
}

struct CriticPool {
    caches: HashMap<PathBuf, Arc<VerdictCache>>,
    memory: Arc<VerdictCache>,
}

impl CriticPool {
    fn new(plan: &ExperimentPlan) -> Result<Self, BenchError> {
        let mut caches = HashMap::new();
        for c in &plan.critics {
            if let CriticSpec::Llm { cache: Some(p), .. } = c {
                if !caches.contains_key(p) && !plan.offline {
                    let cache =
                        VerdictCache::open(p).map_err(|e| BenchError::Plan(e.to_string()))?;
                    caches.insert(p.clone(), Arc::new(cache));
                }
            }
        }
        Ok(Self {
            caches,
            memory: Arc::new(VerdictCache::in_memory()),
        })
    }

    fn build(
        &self,
        plan: &ExperimentPlan,
        spec: &CriticSpec,
        scenario: &ScenarioSpec,
    ) -> Result<Option<Box<dyn Critic>>, String> {
        Ok(match spec {
            CriticSpec::Null => None,
            CriticSpec::Mock { .. } => Some(Box::new(MockCritic::new(scenario.clone()))),
            CriticSpec::Llm { .. } if plan.offline => {
                Some(Box::new(MockCritic::new(scenario.clone())))
            }
            CriticSpec::Llm {
                endpoint,
                variant,
                cache,
            } => {
                let cache = cache
                    .as_ref()
                    .and_then(|p| self.caches.get(p).cloned())
                    .unwrap_or_else(|| self.memory.clone());
                let ctx = PromptContext::for_scenario(*variant, scenario);
                let critic = LlmCritic::new(endpoint.clone(), ctx, scenario.schema.clone(), cache)
                    .map_err(|e| e.to_string())?;
                Some(Box::new(critic))
            }
        })
    }
}

fn run_cell(plan: &ExperimentPlan, pool: &CriticPool, cell: &Cell) -> RunReport {
    let start = Instant::now();
    let seed = cell.seed(plan.base_seed);
    let mut report = RunReport {
        cell: cell.key(),
        scenario: cell.scenario,
        preset: cell.preset,
        critic: cell.critic.clone(),
        variant: cell.variant,
        noise: cell.noise,
        repeat: cell.repeat,
        seed,
        mae: None,
        mse: None,
        r2: None,
        tree_score: None,
        best_equation: None,
        generations_used: 0,
        critic_calls: 0,
        critic_failures: 0,
        failure: None,
        wall_time: 0.0,
    };
    if let Err(e) = fill_report(plan, pool, cell, seed, &mut report) {
        report.failure = Some(e);
    }
    report.wall_time = start.elapsed().as_secs_f64();
    report
}

fn fill_report(
    plan: &ExperimentPlan,
    pool: &CriticPool,
    cell: &Cell,
    seed: u64,
    report: &mut RunReport,
) -> Result<(), String> {
    let scenario = ScenarioSpec::new(cell.scenario);
    let train = generate(
        &scenario,
        &SamplingRanges::with_samples(plan.n_samples),
        cell.noise,
        seed,
    )
    .map_err(|e| format!("dataset: {e}"))?;
    let holdout = generate(
        &scenario,
        &SamplingRanges::with_samples(plan.holdout_samples),
        NoiseSpec::none(),
        seed ^ HOLDOUT_SALT,
    )
    .map_err(|e| format!("holdout: {e}"))?;
    let critic = pool.build(plan, &plan.critics[cell.critic_index], &scenario)?;
    let cfg = plan.engine_config(cell.preset, seed);
    let out = gpengine::run(&train, &cfg, critic.as_deref()).map_err(|e| format!("search: {e}"))?;

    let pred = out
        .best_tree
        .evaluate_columns(&holdout.columns(), holdout.len());
    let m = fit_metrics(&pred.values, &holdout.y).map_err(|e| e.to_string())?;
    report.mae = Some(m.mae);
    report.mse = Some(m.mse);
    report.r2 = Some(m.r2);
    report.tree_score = Some(tree_score(
        &out.best_tree,
        &scenario.gt_tree,
        &TreeDistanceConfig::default(),
    ));
    report.best_equation = Some(out.result.best_equation);
    report.generations_used = out.result.generations_used;
    report.critic_calls = out.result.critic_calls;
    report.critic_failures = out.result.critic_failures;
    Ok(())
}

/// Runs every cell. Failures are recorded per report and never stop other
/// cells; only an invalid plan is an error.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<RunReport>, BenchError> {
    plan.validate()?;
    let pool = CriticPool::new(plan)?;
    let cells = plan.cells();
    Ok(cells.par_iter().map(|c| run_cell(plan, &pool, c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_metrics_hand_examples() {
        let m = fit_metrics(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((m.mae - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.mse - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.r2 - 0.5).abs() < 1e-15);
        let t = [1.0, 5.0, 2.0];
        assert_eq!(
            fit_metrics(&t, &t).unwrap(),
            FitMetrics {
                mae: 0.0,
                mse: 0.0,
                r2: 1.0
            }
        );
        let mean = [8.0 / 3.0; 3];
        assert!(fit_metrics(&mean, &t).unwrap().r2.abs() < 1e-15);
        assert!(fit_metrics(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(fit_metrics(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn missing_plan_fields_are_named() {
        let err = ExperimentPlan::from_json("{}").unwrap_err().to_string();
        assert!(err.contains("scenarios"), "{err}");
        let err = ExperimentPlan::from_json(
            r#"{"scenarios": [], "presets": ["deap_like"], "critics": [{"kind": "null"}]}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("`scenarios` must not be empty"), "{err}");
    }

    fn plan(json: &str) -> ExperimentPlan {
        ExperimentPlan::from_json(json).unwrap()
    }

    #[test]
    fn cell_cardinality_and_seeds() {
        let p = plan(
            r#"{"scenarios": ["drop_ball", "shm", "em_wave"],
                "presets": ["deap_like", "gplearn_like", "pysr_like"],
                "critics": [{"kind": "null"}], "repeats": 1}"#,
        );
        let cells = p.cells();
        assert_eq!(cells.len(), 9);
        let mut seeds: Vec<u64> = cells.iter().map(|c| c.seed(p.base_seed)).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 9);

        let p = plan(
            r#"{"scenarios": ["shm"], "presets": ["deap_like", "gplearn_like", "pysr_like"],
                "critics": [{"kind": "null"}], "repeats": 1,
                "noise_axis": [
                  {"level": 0.01, "target": "features"}, {"level": 0.02, "target": "features"},
                  {"level": 0.03, "target": "features"}, {"level": 0.04, "target": "features"},
                  {"level": 0.05, "target": "features"},
                  {"level": 0.01, "target": "target"}, {"level": 0.02, "target": "target"},
                  {"level": 0.03, "target": "target"}, {"level": 0.04, "target": "target"},
                  {"level": 0.05, "target": "target"},
                  {"level": 0.01, "target": "both"}, {"level": 0.02, "target": "both"},
                  {"level": 0.03, "target": "both"}, {"level": 0.04, "target": "both"},
                  {"level": 0.05, "target": "both"}]}"#,
        );
        assert_eq!(p.cells().len(), 45);
    }

    #[test]
    fn offline_plans_label_llm_columns_as_mock() {
        let p = plan(
            r#"{"scenarios": ["shm"], "presets": ["deap_like"], "offline": true, "repeats": 1,
                "critics": [{"kind": "llm", "variant": "H",
                             "endpoint": {"base_url": "http://127.0.0.1:9", "model_name": "mistral"}}]}"#,
        );
        assert_eq!(p.cells()[0].critic, "mock");
    }

    #[test]
    fn small_plan_runs_and_reports() {
        let p = plan(
            r#"{"scenarios": ["drop_ball"], "presets": ["gplearn_like"],
                "critics": [{"kind": "null"}, {"kind": "mock", "variant": "E"}], "repeats": 1,
                "n_samples": 60, "holdout_samples": 40,
                "engine": {"population_size": 20, "generations": 4}}"#,
        );
        let reports = run_plan(&p).unwrap();
        assert_eq!(reports.len(), 2);
        for r in &reports {
            assert!(r.ok(), "{:?}", r.failure);
            assert!(r.r2.unwrap() <= 1.0);
            assert!((0.0..=1.0).contains(&r.tree_score.unwrap()));
        }
        assert_eq!(reports[0].critic_calls, 0);
        assert!(reports[1].critic_calls > 0);
        let again = run_plan(&p).unwrap();
        let json = |rs: &[RunReport]| {
            rs.iter()
                .map(|r| serde_json::to_string(r).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(json(&reports), json(&again));
    }
}
