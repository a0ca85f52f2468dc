mod batch;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use okbench::agents::{AgentStyle, ModelAgent, ModelClientConfig, OracleAgent, ScriptedAgent};
use okbench::diagnostics::{aggregate_report, load_records, Dim, ReportConfig};
use okbench::harness::{run_episode, Agent, EpisodeConfig, RuntimeRegime, DEFAULT_MAX_TURNS};
use okbench::instgen::{generate_seeded, Difficulty, DifficultyConfig, Instance};
use okbench::sandbox::{RpcSandbox, Sandbox, StubSandbox};
use okbench::solver::{solve_bruteforce, solve_dp, ReferenceSolution};
use okbench::store;
use okbench::trace::{list_trace_files, Trace};
use okbench::tracekit::{prepare_dataset, validate_trace, ApproxTokenizer, PrepConfig, ValidationConfig};

#[derive(Parser)]
#[command(name = "okbench", version, about = "Opaque Knapsack benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate instances and reference sidecars.
    Gen(GenArgs),
    /// Print the reference solution of an instance.
    Solve(SolveArgs),
    /// Run one episode and write its trace.
    Run(RunArgs),
    /// Run the scripted 2x2 cross-evaluation and analyze it.
    Batch(batch::BatchArgs),
    /// Check traces against the data-preparation filters.
    Validate(ValidateArgs),
    /// Build a chat-format training set from traces.
    Prepare(PrepareArgs),
    /// Write report tables for a directory of traces.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "easy")]
    difficulty: Difficulty,
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// First seed; instance i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    Dp,
    Bruteforce,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "dp")]
    method: SolveMethod,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentKind {
    ScriptedPersistent,
    ScriptedStateless,
    Oracle,
    Model,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::ScriptedPersistent => "scripted-persistent",
            AgentKind::ScriptedStateless => "scripted-stateless",
            AgentKind::Oracle => "oracle",
            AgentKind::Model => "model",
        }
    }
}

#[derive(Args, Clone)]
pub struct SandboxArgs {
    /// Shell command starting an exec worker; the built-in interpreter is used when absent.
    #[arg(long)]
    pub worker: Option<String>,
    /// Per-block execution limit in seconds.
    #[arg(long, default_value_t = okbench::sandbox::DEFAULT_TIMEOUT_S)]
    pub exec_timeout: f64,
}

#[derive(Args)]
struct ModelArgs {
    /// Chat-completions URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = okbench::agents::model::DEFAULT_TEMPERATURE)]
    temperature: f64,
    #[arg(long, default_value = okbench::agents::model::DEFAULT_API_KEY_ENV)]
    api_key_env: String,
    /// Semantics the model was tuned under, recorded in the trace.
    #[arg(long, default_value = "persistent")]
    train_semantics: RuntimeRegime,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "persistent")]
    regime: RuntimeRegime,
    #[arg(long, value_enum, default_value = "scripted-persistent")]
    agent: AgentKind,
    #[arg(long, default_value_t = DEFAULT_MAX_TURNS)]
    max_turns: u32,
    /// Regime whose instructions go into the prompt; defaults to --regime.
    #[arg(long)]
    prompt_regime: Option<RuntimeRegime>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sandbox: SandboxArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    traces: PathBuf,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value_t = okbench::tracekit::prepare::DEFAULT_MAX_SAMPLES)]
    max_samples: usize,
    #[arg(long, default_value_t = okbench::tracekit::prepare::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = okbench::tracekit::truncate::DEFAULT_CONTEXT_LIMIT)]
    context_limit: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the statistics as JSON here.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long, default_value = "train,runtime,difficulty")]
    pub group_by: String,
    #[arg(long, default_value_t = okbench::diagnostics::stats::DEFAULT_RESAMPLES)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Run(a) => run(a),
        Command::Batch(a) => batch::batch(a),
        Command::Validate(a) => validate(a),
        Command::Prepare(a) => prepare(a),
        Command::Analyze(a) => analyze(&a).and_then(|md| emit(&md)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let config = DifficultyConfig::for_difficulty(a.difficulty);
    let mut tried = 0u64;
    let mut rejections: BTreeMap<String, u64> = BTreeMap::new();
    for i in 0..a.count {
        let seed = a.seed.checked_add(i).context("seed overflow")?;
        let g = generate_seeded(&config, seed).with_context(|| format!("seed {seed}"))?;
        tried += g.stats.candidates_tried;
        for (reason, n) in &g.stats.rejections_by_reason {
            *rejections.entry(serde_json::to_value(reason)?.as_str().unwrap_or_default().to_string()).or_default() += n;
        }
        store::write_generated(&a.out, &g)?;
    }
    let summary = serde_json::json!({
        "difficulty": a.difficulty.as_str(),
        "generated": a.count,
        "first_seed": a.seed,
        "candidates_tried": tried,
        "rejections_by_reason": rejections,
        "out": a.out,
    });
    emit(&(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    let instance = store::read_instance(&a.instance)?;
    let sol = match a.method {
        SolveMethod::Dp => solve_dp(&instance.view()),
        SolveMethod::Bruteforce => solve_bruteforce(&instance.view())?,
    };
    emit(&(serde_json::to_string_pretty(&sol)? + "\n"))?;
    Ok(())
}

pub fn make_sandbox(args: &SandboxArgs) -> Result<Box<dyn Sandbox>> {
    Ok(match &args.worker {
        None => Box::new(StubSandbox::new()),
        Some(cmd) => Box::new(RpcSandbox::spawn(&["sh".to_string(), "-c".to_string(), cmd.clone()])?),
    })
}

pub fn scripted_agent(kind: AgentKind, refsol: &ReferenceSolution) -> Option<Box<dyn Agent>> {
    match kind {
        AgentKind::ScriptedPersistent => Some(Box::new(ScriptedAgent::new(AgentStyle::PersistentStyle))),
        AgentKind::ScriptedStateless => Some(Box::new(ScriptedAgent::new(AgentStyle::StatelessStyle))),
        AgentKind::Oracle => Some(Box::new(OracleAgent { item_ids: refsol.item_ids.clone() })),
        AgentKind::Model => None,
    }
}

/// Runs one episode on a fresh sandbox.
pub fn episode(
    agent: &mut dyn Agent,
    instance: &Instance,
    refsol: &ReferenceSolution,
    config: &EpisodeConfig,
    sandbox: &SandboxArgs,
) -> Result<Trace> {
    let mut sb = make_sandbox(sandbox)?;
    let trace = run_episode(agent, instance, refsol, sb.as_mut(), config, &ApproxTokenizer);
    sb.shutdown();
    Ok(trace)
}

fn run(a: RunArgs) -> Result<()> {
    let instance = store::read_instance(&a.instance)?;
    let refsol = store::read_reference(&a.instance, &instance)?;
    let mut agent = match scripted_agent(a.agent, &refsol) {
        Some(agent) => agent,
        None => {
            let (Some(endpoint), Some(model)) = (a.model.endpoint, a.model.model) else {
                bail!("--agent model needs --endpoint and --model");
            };
            let mut cfg = ModelClientConfig::new(endpoint, model);
            cfg.temperature = a.model.temperature;
            cfg.api_key_env = a.model.api_key_env;
            cfg.train_semantics = a.model.train_semantics;
            Box::new(ModelAgent::new(cfg)?)
        }
    };
    let mut config = EpisodeConfig::new(a.regime).with_max_turns(a.max_turns);
    config.prompt_regime = a.prompt_regime;
    config.exec_timeout_s = a.sandbox.exec_timeout;
    let trace = episode(agent.as_mut(), &instance, &refsol, &config, &a.sandbox)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    trace.write(&a.out)?;
    if let Some(s) = trace.summary() {
        emit(&(serde_json::to_string(s)? + "\n"))?;
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let cfg = ValidationConfig::default();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for path in list_trace_files(&a.traces)? {
        let verdict = match Trace::read(&path).and_then(|t| validate_trace(&t, &cfg)) {
            Ok(None) => "ok",
            Ok(Some(reason)) => reason.as_str(),
            Err(_) => "malformed_trace",
        };
        *counts.entry(verdict).or_default() += 1;
        emit(&format!("{}\t{verdict}\n", path.display()))?;
    }
    let total: usize = counts.values().sum();
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    emit(&format!("total={total} {}\n", summary.join(" ")))?;
    Ok(())
}

fn prepare(a: PrepareArgs) -> Result<()> {
    let cfg =
        PrepConfig { context_limit: a.context_limit, max_samples: a.max_samples, seed: a.seed, ..Default::default() };
    let stats = prepare_dataset(&a.traces, &a.out, &cfg, &ApproxTokenizer)?;
    if let Some(p) = &a.stats {
        std::fs::write(p, serde_json::to_string_pretty(&stats)? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
    }
    emit(&stats.to_markdown())?;
    Ok(())
}

pub fn analyze(a: &AnalyzeArgs) -> Result<String> {
    let records = load_records(&a.traces)?;
    let cfg = ReportConfig {
        group_by: Dim::parse_list(&a.group_by)?,
        resamples: a.resamples,
        seed: a.seed,
        ..Default::default()
    };
    let report = aggregate_report(&records, &cfg)?;
    report.write(&a.out)?;
    Ok(report.to_markdown())
}

/// Writes to stdout; a closed reader (e.g. `| head`) is not an error.
pub fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn relative_to(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}
