//! The `pisr` command line. Each subcommand accepts `--config <json>` whose
//! keys match the long flag names (with underscores); explicit flags win.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::benchharness::{render_tables, run_plan, BenchError, ExperimentPlan};
use crate::critic::{
    build_prompt, Critic, CriticError, LlmCritic, LlmEndpoint, MockCritic, PromptContext,
    PromptVariant, VerdictCache,
};
use crate::exprtree::{parse, render, VariableSchema};
use crate::gpengine::{self, EngineConfig, EnginePreset, FitnessWeights};
use crate::physlab::{
    generate, read_dataset, write_dataset, NoiseSpec, NoiseTarget, SamplingRanges, ScenarioId,
    ScenarioSpec, ShmFrequency, Snr,
};
use crate::treemetric::{tree_distance, tree_score, TreeDistanceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_TRANSPORT: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Transport(String),
    Partial(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Transport(_) => EXIT_TRANSPORT,
            CliError::Partial(_) => EXIT_PARTIAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "error: {m}"),
            CliError::Transport(m) => write!(f, "transport error: {m}"),
            CliError::Partial(m) => write!(f, "partial failure: {m}"),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "pisr",
    version,
    about = "Physics-informed symbolic regression workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (CSV plus JSON sidecar).
    Gen(GenArgs),
    /// Run one symbolic-regression search on a dataset.
    Search(SearchArgs),
    /// Structural distance and score between two equations.
    Compare(CompareArgs),
    /// Score one equation with a critic, or print its prompt.
    Critic(CriticArgs),
    /// Run an experiment plan and write report tables.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenArgs {
    /// JSON file supplying any flag by its long name; explicit flags win.
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// drop_ball (default), shm or em_wave.
    #[arg(long)]
    scenario: Option<ScenarioId>,
    /// Number of rows (default 500).
    #[arg(long)]
    n: Option<usize>,
    /// Relative noise level; 0 disables noise (default 0.01).
    #[arg(long)]
    noise_level: Option<f64>,
    /// target (default), features, both or none.
    #[arg(long)]
    noise_target: Option<NoiseTarget>,
    /// `angular` (default) or `ratio`.
    #[arg(long, value_parser = parse_shm_frequency)]
    shm_frequency: Option<ShmFrequency>,
    /// RNG seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// CSV path; the sidecar is written next to it as `<name>.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SearchArgs {
    /// JSON file supplying any flag by its long name; explicit flags win.
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// Dataset CSV written by `pisr gen`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// deap_like, gplearn_like (default) or pysr_like.
    #[arg(long)]
    preset: Option<EnginePreset>,
    /// Three comma-separated values summing to 1, e.g. `0.6,0.1,0.3`.
    #[arg(long)]
    weights: Option<String>,
    /// `null`, `mock`, or a chat-completion base URL.
    #[arg(long)]
    critic: Option<String>,
    /// Model name sent to an LLM critic.
    #[arg(long)]
    model: Option<String>,
    /// Prompt variant A to H (default A).
    #[arg(long)]
    variant: Option<PromptVariant>,
    /// Env var holding the bearer token for an LLM critic.
    #[arg(long)]
    auth_env: Option<String>,
    /// JSONL verdict cache for an LLM critic.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// RNG seed (overrides the preset).
    #[arg(long)]
    seed: Option<u64>,
    /// Population size (overrides the preset).
    #[arg(long)]
    population: Option<usize>,
    /// Generation budget (overrides the preset).
    #[arg(long)]
    generations: Option<usize>,
    /// Write the full result as JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CompareArgs {
    /// JSON file supplying any flag by its long name; explicit flags win.
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// First equation.
    #[arg(long, allow_hyphen_values = true)]
    eq_a: Option<String>,
    /// Second equation.
    #[arg(long, allow_hyphen_values = true)]
    eq_b: Option<String>,
    /// Comma-separated variable names; inferred from the equations if absent.
    #[arg(long)]
    schema: Option<String>,
    /// Weight of operator mismatches in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Report the raw distance score `max(0, 1 - d)`.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CriticArgs {
    /// JSON file supplying any flag by its long name; explicit flags win.
    #[arg(long)]
    #[serde(skip_serializing)]
    config: Option<PathBuf>,
    /// Equation to score.
    #[arg(long, allow_hyphen_values = true)]
    eq: Option<String>,
    /// Prompt variant A to H (default A).
    #[arg(long)]
    variant: Option<PromptVariant>,
    /// `mock` or a chat-completion base URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Scenario giving the prompt context (default drop_ball).
    #[arg(long)]
    scenario: Option<ScenarioId>,
    /// Model name sent to an LLM endpoint.
    #[arg(long)]
    model: Option<String>,
    /// Env var holding the bearer token.
    #[arg(long)]
    auth_env: Option<String>,
    /// Request timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Retries after a failed attempt.
    #[arg(long)]
    retries: Option<u32>,
    /// Print the prompt; without --endpoint, stop there.
    #[arg(long)]
    show_prompt: bool,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BenchArgs {
    /// Experiment plan (JSON).
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Directory for reports and tables.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_shm_frequency(s: &str) -> Result<ShmFrequency, String> {
    match s {
        "angular" => Ok(ShmFrequency::Angular),
        "ratio" => Ok(ShmFrequency::Ratio),
        _ => Err(format!(
            "unknown SHM frequency `{s}` (expected angular or ratio)"
        )),
    }
}

/// Loads `path` as the same argument struct; explicit flags are merged over
/// it by the caller.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))
}

macro_rules! merge {
    ($flags:expr, $cfg:expr, $($field:ident),+) => {
        $( if $flags.$field.is_none() { $flags.$field = $cfg.$field.take(); } )+
    };
}

/// Prints the merged arguments so every run records what it resolved to.
fn echo<T: Serialize>(err: &mut dyn Write, args: &T) {
    if let Ok(json) = serde_json::to_string(args) {
        let _ = writeln!(err, "resolved: {json}");
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| invalid(format!("missing required --{flag}")))
}

fn cmd_gen(mut a: GenArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg: GenArgs = load_config(a.config.as_deref())?;
    merge!(
        a,
        cfg,
        scenario,
        n,
        noise_level,
        noise_target,
        shm_frequency,
        seed,
        out
    );
    echo(err, &a);
    let scenario = ScenarioSpec::with_shm_frequency(
        a.scenario.unwrap_or(ScenarioId::DropBall),
        a.shm_frequency.unwrap_or_default(),
    );
    let level = a.noise_level.unwrap_or(0.01);
    let target = if level == 0.0 {
        NoiseTarget::None
    } else {
        a.noise_target.unwrap_or(NoiseTarget::Target)
    };
    let path = required(a.out, "out")?;
    let ranges = SamplingRanges::with_samples(a.n.unwrap_or(500));
    let data = generate(
        &scenario,
        &ranges,
        NoiseSpec::new(level, target),
        a.seed.unwrap_or(0),
    )
    .map_err(invalid)?;
    write_dataset(&data, &path).map_err(invalid)?;
    let snr = match data.snr.target {
        Snr::Db(v) => format!("{v:.2} dB"),
        Snr::Noiseless => "noiseless".into(),
    };
    let _ = writeln!(
        out,
        "wrote {} rows of {} to {} (target SNR: {snr})",
        data.len(),
        scenario.id,
        path.display()
    );
    Ok(())
}

fn endpoint_from(url: &str, model: Option<String>, auth_env: Option<String>) -> LlmEndpoint {
    let mut ep = LlmEndpoint::new(url, model.unwrap_or_else(|| "default".into()));
    ep.auth_env = auth_env;
    ep
}

fn cmd_search(mut a: SearchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg: SearchArgs = load_config(a.config.as_deref())?;
    merge!(
        a,
        cfg,
        data,
        preset,
        weights,
        critic,
        model,
        variant,
        auth_env,
        cache,
        seed,
        population,
        generations,
        out
    );
    echo(err, &a);
    let data_path = required(a.data, "data")?;
    let data = read_dataset(&data_path).map_err(invalid)?;
    let mut engine = EngineConfig::preset(a.preset.unwrap_or(EnginePreset::GplearnLike));
    if let Some(w) = &a.weights {
        engine.weights = w.parse::<FitnessWeights>().map_err(|_| {
            invalid(format!(
                "--weights must be three comma-separated values summing to 1, got `{w}`"
            ))
        })?;
    }
    if let Some(s) = a.seed {
        engine.seed = s;
    }
    if let Some(p) = a.population {
        engine.population_size = p;
    }
    if let Some(g) = a.generations {
        engine.generations = g;
    }
    engine.validate().map_err(invalid)?;

    let variant = a.variant.unwrap_or_default();
    let critic_name = a.critic.unwrap_or_else(|| "null".into());
    let critic: Option<Box<dyn Critic>> = match critic_name.as_str() {
        "null" | "none" => None,
        "mock" => Some(Box::new(MockCritic::new(data.scenario.clone()))),
        url => {
            let cache = match &a.cache {
                Some(p) => VerdictCache::open(p).map_err(invalid)?,
                None => VerdictCache::in_memory(),
            };
            let ctx = PromptContext::for_scenario(variant, &data.scenario);
            Some(Box::new(
                LlmCritic::new(
                    endpoint_from(url, a.model, a.auth_env),
                    ctx,
                    data.schema().clone(),
                    Arc::new(cache),
                )
                .map_err(invalid)?,
            ))
        }
    };
    let outcome = gpengine::run(&data, &engine, critic.as_deref()).map_err(invalid)?;
    let r = &outcome.result;
    let b = &r.breakdown;
    let _ = writeln!(out, "best: {}", r.best_equation);
    let _ = writeln!(
        out,
        "L={:.6} e={:.6} s={:.6} c={:.6}",
        b.loss, b.e, b.s, b.c
    );
    let _ = writeln!(
        out,
        "generations: {}{}",
        r.generations_used,
        if r.early_stopped { " (early stop)" } else { "" }
    );
    if critic.is_some() {
        let _ = writeln!(
            out,
            "critic calls: {} ({} failed)",
            r.critic_calls, r.critic_failures
        );
    }
    if let Some(path) = a.out {
        #[derive(Serialize)]
        struct Output<'a> {
            data: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            variant: Option<PromptVariant>,
            #[serde(flatten)]
            result: &'a gpengine::SearchResult,
        }
        let json = serde_json::to_string_pretty(&Output {
            data: data_path.display().to_string(),
            variant: critic.as_ref().map(|_| variant),
            result: r,
        })
        .map_err(invalid)?;
        std::fs::write(&path, json + "\n")
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Variable names in order of first appearance, skipping function names and
/// numeric literals (including exponents such as `1e-3`).
fn infer_schema(texts: &[&str]) -> Result<VariableSchema, CliError> {
    let mut names: Vec<String> = Vec::new();
    for text in texts {
        let b = text.as_bytes();
        let mut i = 0;
        while i < b.len() {
            let c = b[i];
            if c.is_ascii_digit() || c == b'.' {
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                    i += 1;
                }
                if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                    let mut j = i + 1;
                    if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                        j += 1;
                    }
                    if j < b.len() && b[j].is_ascii_digit() {
                        i = j;
                        while i < b.len() && b[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
            } else if c.is_ascii_alphabetic() || c == b'_' {
                let start = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                let name = &text[start..i];
                if !["exp", "log", "sin", "cos"].contains(&name) && !names.iter().any(|n| n == name)
                {
                    names.push(name.to_string());
                }
            } else {
                i += 1;
            }
        }
    }
    VariableSchema::from_names(&names).map_err(invalid)
}

fn cmd_compare(
    mut a: CompareArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let mut cfg: CompareArgs = load_config(a.config.as_deref())?;
    merge!(a, cfg, eq_a, eq_b, schema, alpha);
    a.no_normalize |= cfg.no_normalize;
    echo(err, &a);
    let ea = required(a.eq_a, "eq-a")?;
    let eb = required(a.eq_b, "eq-b")?;
    let schema = match &a.schema {
        Some(s) => {
            let names: Vec<&str> = s
                .split(',')
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .collect();
            VariableSchema::from_names(&names).map_err(invalid)?
        }
        None => infer_schema(&[&ea, &eb])?,
    };
    let ta = parse(&ea, &schema).map_err(invalid)?;
    let tb = parse(&eb, &schema).map_err(invalid)?;
    let normalize = !a.no_normalize;
    let cfg = TreeDistanceConfig::new(
        a.alpha.unwrap_or(TreeDistanceConfig::DEFAULT_ALPHA),
        normalize,
    )
    .map_err(invalid)?;
    let _ = writeln!(out, "distance: {}", tree_distance(&ta, &tb, &cfg));
    let _ = writeln!(out, "score: {}", tree_score(&ta, &tb, &cfg));
    Ok(())
}

fn cmd_critic(mut a: CriticArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg: CriticArgs = load_config(a.config.as_deref())?;
    merge!(a, cfg, eq, variant, endpoint, scenario, model, auth_env, timeout, retries);
    a.show_prompt |= cfg.show_prompt;
    echo(err, &a);
    let scenario = ScenarioSpec::new(a.scenario.unwrap_or(ScenarioId::DropBall));
    let eq = required(a.eq, "eq")?;
    let tree = parse(&eq, &scenario.schema).map_err(invalid)?;
    let ctx = PromptContext::for_scenario(a.variant.unwrap_or_default(), &scenario);
    if a.show_prompt {
        let rendered = render(&tree, &scenario.schema).map_err(invalid)?;
        let _ = write!(out, "{}", build_prompt(&rendered, &ctx));
        if a.endpoint.is_none() {
            return Ok(());
        }
    }
    let endpoint = required(a.endpoint, "endpoint")?;
    let verdict = if endpoint == "mock" {
        MockCritic::new(scenario.clone()).score(&tree)
    } else {
        let mut ep = endpoint_from(&endpoint, a.model, a.auth_env);
        if let Some(t) = a.timeout {
            ep.timeout_secs = t;
        }
        if let Some(r) = a.retries {
            ep.max_retries = r;
        }
        let critic = LlmCritic::new(
            ep,
            ctx,
            scenario.schema.clone(),
            Arc::new(VerdictCache::in_memory()),
        )
        .map_err(invalid)?;
        critic.score(&tree)
    };
    let v = verdict.map_err(|e| match e {
        CriticError::Transport { .. } => CliError::Transport(e.to_string()),
        other => invalid(other),
    })?;
    let _ = writeln!(out, "dim_corr: {}", v.dim_corr);
    let _ = writeln!(out, "simp: {}", v.simp);
    let _ = writeln!(out, "sim: {}", v.sim);
    let _ = writeln!(out, "feedback: {}", v.feedback);
    let _ = writeln!(out, "c: {}", v.c);
    if v.flags.clamped || v.flags.extra_text {
        let _ = writeln!(
            out,
            "flags: clamped={} extra_text={}",
            v.flags.clamped, v.flags.extra_text
        );
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    echo(err, &a);
    let plan_path = required(a.plan, "plan")?;
    let out_dir = required(a.out_dir, "out-dir")?;
    let text = std::fs::read_to_string(&plan_path)
        .map_err(|e| invalid(format!("plan {}: {e}", plan_path.display())))?;
    let plan = ExperimentPlan::from_json(&text).map_err(invalid)?;
    let reports = run_plan(&plan).map_err(|e| match e {
        BenchError::Plan(m) => invalid(m),
        other => invalid(other),
    })?;
    let files = render_tables(&reports, &plan, &out_dir).map_err(invalid)?;
    let failed = reports.iter().filter(|r| !r.ok()).count();
    let _ = writeln!(
        out,
        "{} reports ({} failed) written to {}",
        reports.len(),
        failed,
        files.reports.display()
    );
    if failed > 0 {
        return Err(CliError::Partial(format!(
            "{failed} of {} cells failed",
            reports.len()
        )));
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name), writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            let sink: &mut dyn Write = if code == EXIT_OK { out } else { err };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a, out, err),
        Command::Search(a) => cmd_search(a, out, err),
        Command::Compare(a) => cmd_compare(a, out, err),
        Command::Critic(a) => cmd_critic(a, out, err),
        Command::Bench(a) => cmd_bench(a, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}
