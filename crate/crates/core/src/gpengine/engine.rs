use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fitness::{combine, FitData, NEUTRAL_C};
use super::variation::Primitives;
use super::{EngineConfig, EngineError, FitnessBreakdown};
use crate::critic::Critic;
use crate::exprtree::{render, ExpressionTree, Node};
use crate::physlab::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub generation: usize,
    pub best_loss: f64,
}

/// Serializable summary of a search. Contains nothing time-dependent, so
/// identical inputs give identical JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_equation: String,
    pub canonical_key: String,
    pub breakdown: FitnessBreakdown,
    pub trace: Vec<TracePoint>,
    pub generations_used: usize,
    pub early_stopped: bool,
    pub critic: Option<String>,
    pub critic_calls: usize,
    pub critic_failures: usize,
    pub critic_last_error: Option<String>,
    pub variables: Vec<String>,
    pub seed: u64,
    pub config: EngineConfig,
}

impl SearchResult {
    /// `(generation, best L)` pairs.
    pub fn best_trace(&self) -> Vec<(usize, f64)> {
        self.trace
            .iter()
            .map(|p| (p.generation, p.best_loss))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub result: SearchResult,
    pub best_tree: ExpressionTree,
    pub elapsed: Duration,
}

/// Independent stream per (generation, individual) so breeding can run in
/// any order.
fn stream_rng(seed: u64, generation: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | index as u64);
    rng
}

fn ramped_population(cfg: &EngineConfig, prims: &Primitives) -> Vec<Node> {
    let lo = cfg.init_depth;
    let heights = cfg.init_max_depth() - lo + 1;
    (0..cfg.population_size)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, 0, i);
            let height = lo + i % heights;
            let full = (i / heights) % 2 == 0;
            prims.random_tree(&mut rng, height, full)
        })
        .collect()
}

/// Runs the search from a ramped half-and-half initial population.
pub fn run(
    data: &Dataset,
    cfg: &EngineConfig,
    critic: Option<&dyn Critic>,
) -> Result<SearchOutcome, EngineError> {
    cfg.validate()?;
    let prims = primitives(cfg, data);
    let initial = ramped_population(cfg, &prims);
    evolve(data, cfg, critic, initial, prims)
}

/// Runs the search from a caller-supplied initial population, which must
/// have `population_size` members.
pub fn run_from(
    data: &Dataset,
    cfg: &EngineConfig,
    critic: Option<&dyn Critic>,
    initial: Vec<ExpressionTree>,
) -> Result<SearchOutcome, EngineError> {
    cfg.validate()?;
    if initial.len() != cfg.population_size {
        return Err(EngineError::Config(format!(
            "initial population has {} members, config expects {}",
            initial.len(),
            cfg.population_size
        )));
    }
    for t in &initial {
        t.check_schema(data.schema())?;
        if t.height() > cfg.max_depth {
            return Err(EngineError::Config(format!(
                "initial tree of height {} exceeds max_depth {}",
                t.height(),
                cfg.max_depth
            )));
        }
    }
    let prims = primitives(cfg, data);
    evolve(
        data,
        cfg,
        critic,
        initial.into_iter().map(ExpressionTree::into_root).collect(),
        prims,
    )
}

fn primitives(cfg: &EngineConfig, data: &Dataset) -> Primitives {
    Primitives {
        binary: cfg.binary_ops(),
        unary: cfg.unary_ops(),
        n_vars: data.schema().len(),
        constant_range: cfg.constant_range,
        max_depth: cfg.max_depth,
    }
}

struct Scored {
    e: f64,
    degenerate: bool,
    size: usize,
    key: String,
}

/// Per-run critic bookkeeping. Every canonical key is scored at most once;
/// failures are remembered as neutral.
struct CriticState<'a> {
    critic: &'a dyn Critic,
    verdicts: HashMap<String, f64>,
    calls: usize,
    failures: usize,
    last_error: Option<String>,
}

impl CriticState<'_> {
    /// Scores the given `(key, tree)` pairs that are not cached yet.
    fn score_all(&mut self, mut todo: Vec<(String, Node)>, max_depth: usize) {
        todo.retain(|(k, _)| !self.verdicts.contains_key(k));
        todo.sort_by(|a, b| a.0.cmp(&b.0));
        todo.dedup_by(|a, b| a.0 == b.0);
        let critic = self.critic;
        let results: Vec<(String, Result<f64, String>)> = todo
            .into_par_iter()
            .map(|(key, node)| {
                let r = ExpressionTree::with_depth_cap(node, max_depth)
                    .map_err(|e| e.to_string())
                    .and_then(|t| critic.score(&t).map(|v| v.c).map_err(|e| e.to_string()));
                (key, r)
            })
            .collect();
        for (key, r) in results {
            self.calls += 1;
            let c = r.unwrap_or_else(|e| {
                self.failures += 1;
                self.last_error = Some(e);
                NEUTRAL_C
            });
            self.verdicts.insert(key, c);
        }
    }
}

fn by_loss(a: (usize, &FitnessBreakdown), b: (usize, &FitnessBreakdown)) -> Ordering {
    a.1.loss.total_cmp(&b.1.loss).then(a.0.cmp(&b.0))
}

fn argmin(fits: &[FitnessBreakdown]) -> usize {
    fits.iter()
        .enumerate()
        .min_by(|a, b| by_loss(*a, *b))
        .map(|(i, _)| i)
        .expect("population is non-empty")
}

fn evolve(
    data: &Dataset,
    cfg: &EngineConfig,
    critic: Option<&dyn Critic>,
    mut population: Vec<Node>,
    prims: Primitives,
) -> Result<SearchOutcome, EngineError> {
    let start = Instant::now();
    if data.is_empty() {
        return Err(EngineError::Config("dataset is empty".into()));
    }
    let fit_data = FitData::from_dataset(data, cfg.inner_loss);
    let mut critic_state = critic.map(|c| CriticState {
        critic: c,
        verdicts: HashMap::new(),
        calls: 0,
        failures: 0,
        last_error: None,
    });

    let mut trace = Vec::new();
    let mut stall = 0;
    let mut early_stopped = false;
    let mut best_idx;
    let mut fits: Vec<FitnessBreakdown>;
    let mut generation = 0;

    loop {
        debug_assert!(population.iter().all(|t| t.height() <= cfg.max_depth));
        let scored: Vec<Scored> = population
            .par_iter()
            .map(|node| {
                let tree = ExpressionTree::with_depth_cap(node.clone(), cfg.max_depth)
                    .expect("population respects the depth cap");
                let (e, degenerate) = fit_data.error(&tree);
                Scored {
                    e,
                    degenerate,
                    size: node.size(),
                    key: tree.canonical_key(),
                }
            })
            .collect();

        if let Some(state) = critic_state.as_mut() {
            let mut order: Vec<usize> = (0..scored.len())
                .filter(|&i| !scored[i].degenerate)
                .collect();
            order.sort_by(|&a, &b| {
                let (x, y) = (&scored[a], &scored[b]);
                x.e.total_cmp(&y.e)
                    .then(x.size.cmp(&y.size))
                    .then(a.cmp(&b))
            });
            let mut chosen: Vec<(String, Node)> = Vec::new();
            for i in order {
                if chosen.len() == cfg.critic_budget {
                    break;
                }
                if !chosen.iter().any(|(k, _)| *k == scored[i].key) {
                    chosen.push((scored[i].key.clone(), population[i].clone()));
                }
            }
            state.score_all(chosen, cfg.max_depth);
        }

        let verdict = |key: &str| -> Option<f64> {
            critic_state
                .as_ref()
                .and_then(|s| s.verdicts.get(key).copied())
        };
        fits = scored
            .iter()
            .map(|s| {
                combine(
                    s.e,
                    s.degenerate,
                    s.size,
                    verdict(&s.key),
                    &cfg.weights,
                    cfg.max_depth,
                )
            })
            .collect();

        // The elite's loss must be final so the trace cannot rise when a
        // neutral placeholder is later replaced by a worse verdict.
        loop {
            best_idx = argmin(&fits);
            let Some(state) = critic_state.as_mut() else {
                break;
            };
            let key = &scored[best_idx].key;
            if scored[best_idx].degenerate || state.verdicts.contains_key(key) {
                break;
            }
            state.score_all(
                vec![(key.clone(), population[best_idx].clone())],
                cfg.max_depth,
            );
            let c = state.verdicts.get(key).copied();
            for (i, s) in scored.iter().enumerate() {
                if s.key == *key {
                    fits[i] = combine(s.e, s.degenerate, s.size, c, &cfg.weights, cfg.max_depth);
                }
            }
        }

        let best_loss = fits[best_idx].loss;
        if let Some(prev) = trace.last().map(|p: &TracePoint| p.best_loss) {
            let improvement = if prev > 0.0 {
                (prev - best_loss) / prev
            } else {
                0.0
            };
            if improvement < cfg.early_stop.rel_improvement {
                stall += 1;
            } else {
                stall = 0;
            }
        }
        trace.push(TracePoint {
            generation,
            best_loss,
        });
        generation += 1;
        if stall >= cfg.early_stop.patience_generations {
            early_stopped = true;
            break;
        }
        if generation == cfg.generations {
            break;
        }

        let parents = &population;
        let fits_ref = &fits;
        let tournament = |rng: &mut ChaCha8Rng| -> usize {
            (0..cfg.tournament_size)
                .map(|_| rng.random_range(0..parents.len()))
                .min_by(|&a, &b| by_loss((a, &fits_ref[a]), (b, &fits_ref[b])))
                .expect("tournament size >= 1")
        };
        let offspring: Vec<Node> = (1..cfg.population_size)
            .into_par_iter()
            .map(|idx| {
                let mut rng = stream_rng(cfg.seed, generation, idx);
                let p1 = tournament(&mut rng);
                let mut child = if rng.random_bool(cfg.crossover_prob) {
                    let p2 = tournament(&mut rng);
                    prims.crossover(&mut rng, &parents[p1], &parents[p2])
                } else {
                    parents[p1].clone()
                };
                if rng.random_bool(cfg.mutation_prob) {
                    let mutated = prims.mutate(&mut rng, &child);
                    if mutated.height() <= cfg.max_depth {
                        child = mutated;
                    }
                }
                child
            })
            .collect();
        let elite = population[best_idx].clone();
        population = std::iter::once(elite).chain(offspring).collect();
    }

    let best_tree = ExpressionTree::with_depth_cap(population[best_idx].clone(), cfg.max_depth)?;
    let (calls, failures, last_error) = critic_state
        .as_ref()
        .map(|s| (s.calls, s.failures, s.last_error.clone()))
        .unwrap_or((0, 0, None));
    let result = SearchResult {
        best_equation: render(&best_tree, data.schema())?,
        canonical_key: best_tree.canonical_key(),
        breakdown: fits[best_idx],
        trace,
        generations_used: generation,
        early_stopped,
        critic: critic.map(|c| c.label()),
        critic_calls: calls,
        critic_failures: failures,
        critic_last_error: last_error,
        variables: data.schema().names().to_vec(),
        seed: cfg.seed,
        config: cfg.clone(),
    };
    Ok(SearchOutcome {
        result,
        best_tree,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::{CriticError, CriticVerdict, MockCritic};
    use crate::exprtree::{BinaryOp, Operator};
    use crate::gpengine::FitnessWeights;
    use crate::physlab::{generate, NoiseSpec, SamplingRanges, ScenarioId, ScenarioSpec};
    use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

    fn drop_ball(n: usize) -> Dataset {
        generate(
            &ScenarioSpec::new(ScenarioId::DropBall),
            &SamplingRanges::with_samples(n),
            NoiseSpec::none(),
            3,
        )
        .unwrap()
    }

    fn small_cfg(seed: u64) -> EngineConfig {
        EngineConfig {
            population_size: 40,
            generations: 12,
            seed,
            ..EngineConfig::default()
        }
    }

    #[test]
    fn trace_is_monotone_and_ends_at_best() {
        let data = drop_ball(100);
        let mock = MockCritic::new(data.scenario.clone());
        let out = run(&data, &small_cfg(5), Some(&mock)).unwrap();
        let t = out.result.best_trace();
        assert!(t.windows(2).all(|w| w[1].1 <= w[0].1), "{t:?}");
        assert_eq!(t.last().unwrap().1, out.result.breakdown.loss);
        assert_eq!(t.len(), out.result.generations_used);
        assert!(out.best_tree.height() <= 8);
    }

    #[test]
    fn identical_seeds_give_identical_results() {
        let data = drop_ball(100);
        let mock = MockCritic::new(data.scenario.clone());
        let a = run(&data, &small_cfg(9), Some(&mock)).unwrap().result;
        let b = run(&data, &small_cfg(9), Some(&mock)).unwrap().result;
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn constant_population_stops_after_patience_plus_one() {
        let data = drop_ball(50);
        let cfg = EngineConfig {
            population_size: 10,
            mutation_prob: 0.0,
            ..small_cfg(1)
        };
        let leaf = ExpressionTree::new(Node::var(2)).unwrap();
        let out = run_from(&data, &cfg, None, vec![leaf; 10]).unwrap().result;
        assert!(out.early_stopped);
        assert_eq!(
            out.generations_used,
            cfg.early_stop.patience_generations + 1
        );
    }

    struct Counting {
        calls: AtomicUsize,
        fail: bool,
    }

    impl Critic for Counting {
        fn label(&self) -> String {
            "counting".into()
        }
        fn score(&self, _: &ExpressionTree) -> Result<CriticVerdict, CriticError> {
            self.calls.fetch_add(1, AtomicOrdering::Relaxed);
            if self.fail {
                Err(CriticError::Transport {
                    attempts: 1,
                    message: "down".into(),
                })
            } else {
                Ok(CriticVerdict::new(1.0, 1.0, 1.0, "ok"))
            }
        }
    }

    #[test]
    fn critic_is_called_once_per_key_and_failures_are_neutral() {
        let data = drop_ball(60);
        for fail in [false, true] {
            let critic = Counting {
                calls: AtomicUsize::new(0),
                fail,
            };
            let out = run(&data, &small_cfg(2), Some(&critic)).unwrap().result;
            assert_eq!(out.critic_calls, critic.calls.load(AtomicOrdering::Relaxed));
            assert!(out.critic_calls > 0);
            if fail {
                assert_eq!(out.critic_failures, out.critic_calls);
                assert_eq!(out.breakdown.c, NEUTRAL_C);
            } else {
                assert_eq!(out.breakdown.c, 0.0);
            }
        }
    }

    #[test]
    fn zero_critic_weight_makes_the_critic_irrelevant() {
        let data = drop_ball(80);
        let cfg = EngineConfig {
            weights: FitnessWeights::new(0.9, 0.1, 0.0).unwrap(),
            ..small_cfg(4)
        };
        let perfect = Counting {
            calls: AtomicUsize::new(0),
            fail: false,
        };
        let a = run(&data, &cfg, None).unwrap().result;
        let b = run(&data, &cfg, Some(&perfect)).unwrap().result;
        assert_eq!(a.best_equation, b.best_equation);
    }

    #[test]
    fn recovers_an_exact_linear_law() {
        // y = h on the drop-ball inputs.
        let mut data = drop_ball(100);
        data.y = data.x.iter().map(|r| r[2]).collect();
        let cfg = EngineConfig {
            operator_set: vec![
                Operator::Binary(BinaryOp::Add),
                Operator::Binary(BinaryOp::Sub),
                Operator::Binary(BinaryOp::Mul),
            ],
            weights: FitnessWeights::new(1.0, 0.0, 0.0).unwrap(),
            ..small_cfg(0)
        };
        let out = run(&data, &cfg, None).unwrap().result;
        assert!(out.breakdown.loss <= 1e-6, "{}", out.best_equation);
    }

    #[test]
    fn run_from_checks_the_population() {
        let data = drop_ball(20);
        let cfg = small_cfg(0);
        let leaf = ExpressionTree::new(Node::var(0)).unwrap();
        assert!(run_from(&data, &cfg, None, vec![leaf.clone(); 3]).is_err());
        let outside = ExpressionTree::new(Node::var(9)).unwrap();
        let mut pop = vec![leaf; cfg.population_size - 1];
        pop.push(outside);
        assert!(run_from(&data, &cfg, None, pop).is_err());
    }
}
