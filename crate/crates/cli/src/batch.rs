//! Scripted cross-evaluation: both agent styles under both runtimes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use okbench::harness::{EpisodeConfig, RuntimeRegime, DEFAULT_MAX_TURNS};
use okbench::store;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{analyze, emit, episode, relative_to, scripted_agent, AgentKind, AnalyzeArgs, SandboxArgs};

pub const MANIFEST_FILE: &str = "manifest.json";
const AGENTS: [AgentKind; 2] = [AgentKind::ScriptedPersistent, AgentKind::ScriptedStateless];

#[derive(Args)]
pub struct BatchArgs {
    /// Directory of instance files; the first N by name are used.
    #[arg(long, required_unless_present = "manifest")]
    instances: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    episodes_per_cell: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_TURNS)]
    max_turns: u32,
    /// Worker threads; defaults to the logical CPU count.
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed for report bootstrap intervals.
    #[arg(long, default_value_t = 0)]
    report_seed: u64,
    /// Re-run the configuration recorded in an earlier manifest.
    #[arg(long, conflicts_with = "instances")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sandbox: SandboxArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub path: PathBuf,
    pub instance_id: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub agents: Vec<String>,
    pub regimes: Vec<String>,
    pub episodes_per_cell: usize,
    pub max_turns: u32,
    pub exec_timeout_s: f64,
    pub worker: Option<String>,
    pub report_seed: u64,
    pub report_resamples: usize,
    pub group_by: String,
    pub instances: Vec<InstanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub agent: String,
    pub regime: String,
    pub instance_id: String,
    pub seed: u64,
    /// Relative to the output directory.
    pub trace: String,
    pub status: String,
    pub error: Option<String>,
    pub score: Option<f64>,
    pub finish_signal: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BatchConfig,
    pub episodes: Vec<EpisodeEntry>,
    pub report_dir: String,
}

fn collect_instances(dir: &Path, n: usize) -> Result<Vec<InstanceEntry>> {
    let files = store::list_instance_files(dir)?;
    if files.len() < n {
        bail!("{} holds {} instances, {} needed per cell", dir.display(), files.len(), n);
    }
    files[..n]
        .iter()
        .map(|p| {
            let inst = store::read_instance(p)?;
            let path = fs::canonicalize(p).with_context(|| format!("resolving {}", p.display()))?;
            Ok(InstanceEntry { path, instance_id: inst.instance_id, seed: inst.seed })
        })
        .collect()
}

fn config_from_args(a: &BatchArgs) -> Result<BatchConfig> {
    if let Some(m) = &a.manifest {
        let text = fs::read_to_string(m).with_context(|| format!("reading {}", m.display()))?;
        let manifest: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", m.display()))?;
        return Ok(manifest.config);
    }
    let dir = a.instances.as_ref().expect("clap enforces --instances or --manifest");
    Ok(BatchConfig {
        agents: AGENTS.iter().map(|k| k.as_str().to_string()).collect(),
        regimes: RuntimeRegime::ALL.iter().map(|r| r.as_str().to_string()).collect(),
        episodes_per_cell: a.episodes_per_cell,
        max_turns: a.max_turns,
        exec_timeout_s: a.sandbox.exec_timeout,
        worker: a.sandbox.worker.clone(),
        report_seed: a.report_seed,
        report_resamples: okbench::diagnostics::stats::DEFAULT_RESAMPLES,
        group_by: "train,runtime,difficulty".into(),
        instances: collect_instances(dir, a.episodes_per_cell)?,
    })
}

fn agent_kind(name: &str) -> Result<AgentKind> {
    AGENTS.iter().copied().find(|k| k.as_str() == name).with_context(|| format!("unsupported batch agent {name}"))
}

fn run_one(cfg: &BatchConfig, out: &Path, agent: &str, regime: &str, inst: &InstanceEntry) -> EpisodeEntry {
    let rel = format!("traces/{agent}__{regime}__{}.jsonl", inst.instance_id);
    let mut entry = EpisodeEntry {
        agent: agent.into(),
        regime: regime.into(),
        instance_id: inst.instance_id.clone(),
        seed: inst.seed,
        trace: rel.clone(),
        status: "ok".into(),
        error: None,
        score: None,
        finish_signal: None,
    };
    let result = (|| -> Result<_> {
        let kind = agent_kind(agent)?;
        let regime: RuntimeRegime = regime.parse().map_err(anyhow::Error::msg)?;
        let instance = store::read_instance(&inst.path)?;
        let refsol = store::read_reference(&inst.path, &instance)?;
        let mut agent = scripted_agent(kind, &refsol).context("scripted agent")?;
        let mut config = EpisodeConfig::new(regime).with_max_turns(cfg.max_turns);
        config.exec_timeout_s = cfg.exec_timeout_s;
        let sandbox = SandboxArgs { worker: cfg.worker.clone(), exec_timeout: cfg.exec_timeout_s };
        let trace = episode(agent.as_mut(), &instance, &refsol, &config, &sandbox)?;
        trace.write(&out.join(&rel))?;
        Ok(trace)
    })();
    match result {
        Ok(trace) => {
            entry.score = trace.summary().map(|s| s.score);
            entry.finish_signal = trace.finish_signal().map(str::to_string);
        }
        Err(e) => {
            entry.status = "error".into();
            entry.error = Some(format!("{e:#}"));
        }
    }
    entry
}

pub fn batch(a: BatchArgs) -> Result<()> {
    let cfg = config_from_args(&a)?;
    fs::create_dir_all(a.out.join("traces")).with_context(|| format!("creating {}", a.out.display()))?;
    let mut jobs = Vec::new();
    for agent in &cfg.agents {
        for regime in &cfg.regimes {
            for inst in cfg.instances.iter().take(cfg.episodes_per_cell) {
                jobs.push((agent.as_str(), regime.as_str(), inst));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs.unwrap_or(0)).build()?;
    let episodes: Vec<EpisodeEntry> = pool
        .install(|| jobs.par_iter().map(|(agent, regime, inst)| run_one(&cfg, &a.out, agent, regime, inst)).collect());

    let report_dir = a.out.join("report");
    let manifest = RunManifest { config: cfg.clone(), episodes, report_dir: relative_to(&report_dir, &a.out) };
    let path = a.out.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;

    let failed: Vec<&EpisodeEntry> = manifest.episodes.iter().filter(|e| e.status != "ok").collect();
    for e in &failed {
        eprintln!("episode {} {} {} failed: {}", e.agent, e.regime, e.instance_id, e.error.as_deref().unwrap_or(""));
    }
    let md = analyze(&AnalyzeArgs {
        traces: a.out.join("traces"),
        group_by: cfg.group_by.clone(),
        resamples: cfg.report_resamples,
        seed: cfg.report_seed,
        out: report_dir,
    })?;
    emit(&md)?;
    if !failed.is_empty() {
        bail!("{} of {} episodes failed", failed.len(), manifest.episodes.len());
    }
    Ok(())
}
