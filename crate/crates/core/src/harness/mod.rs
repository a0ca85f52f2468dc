//! Reflection-action-observation episode loop.
//!
//! Each turn the agent sees the conversation so far and replies with prose
//! plus one fenced code block. The first block runs in the sandbox, and the
//! outcome comes back as a runtime-state header: the execution result plus
//! the binding names that are live and the names the block produced.

pub mod extract;
pub mod prompts;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::env::{EpisodeState, ToolCall, ToolPayload};
use crate::instgen::Instance;
use crate::pyjson;
use crate::sandbox::{ExecRequest, ExecResult, Sandbox, ToolHost, DEFAULT_TIMEOUT_S};
use crate::solver::ReferenceSolution;
use crate::trace::{AgentStep, ChatMessage, Finish, Meta, Summary, SystemPrompt, ToolCallRecord, Trace, TraceEvent};
use crate::tracekit::tokenize::Tokenizer;

pub use extract::{extract_action, Action};
pub use prompts::{build_prompt, PromptBundle};

pub const DEFAULT_MAX_TURNS: u32 = 40;
pub const DEFAULT_MAX_NEW_TOKENS: u32 = 1024;

pub const SIGNAL_FINISH: &str = "finish tool";
pub const SIGNAL_MAX_TURNS: &str = "max turns";
pub const SIGNAL_ERROR: &str = "error";

/// Error text of the observation sent when a reply has no code block.
pub const NO_CODE_ERROR: &str =
    "FormatError: no fenced code block found; nothing was executed. Reply with exactly one fenced Python code block.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuntimeRegime {
    Persistent,
    Reset,
}

impl RuntimeRegime {
    pub const ALL: [RuntimeRegime; 2] = [RuntimeRegime::Persistent, RuntimeRegime::Reset];

    pub fn as_str(self) -> &'static str {
        match self {
            RuntimeRegime::Persistent => "persistent",
            RuntimeRegime::Reset => "reset",
        }
    }

    pub fn resets(self) -> bool {
        self == RuntimeRegime::Reset
    }
}

impl fmt::Display for RuntimeRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuntimeRegime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "persistent" => Ok(RuntimeRegime::Persistent),
            "reset" | "stateless" => Ok(RuntimeRegime::Reset),
            other => Err(format!("unknown regime '{other}' (expected persistent or reset)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnLimits {
    pub max_turns: u32,
    pub max_new_tokens_per_step: u32,
}

impl Default for TurnLimits {
    fn default() -> Self {
        Self { max_turns: DEFAULT_MAX_TURNS, max_new_tokens_per_step: DEFAULT_MAX_NEW_TOKENS }
    }
}

/// Structured observation returned to the agent after every turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuntimeHeader {
    pub success: bool,
    pub result: Option<String>,
    pub output: String,
    pub error: Option<String>,
    pub system_note: Option<String>,
    pub regime: RuntimeRegime,
    pub active_globals: Vec<String>,
    pub last_step_globals: Vec<String>,
}

impl RuntimeHeader {
    /// Header for an executed block. Only names from the manifest are exposed.
    pub fn from_exec(regime: RuntimeRegime, exec: &ExecResult, system_note: Option<String>) -> Self {
        let manifest = exec.globals_manifest.clone();
        Self {
            success: exec.success,
            result: exec.result.clone(),
            output: exec.output.clone(),
            error: exec.error.clone(),
            system_note,
            regime,
            active_globals: active_for(regime, &manifest),
            last_step_globals: manifest,
        }
    }

    pub fn to_value(&self) -> Value {
        let mut observation = serde_json::Map::new();
        observation.insert("success".into(), json!(self.success));
        observation.insert("result".into(), json!(self.result));
        observation.insert("output".into(), json!(self.output));
        observation.insert("error".into(), json!(self.error));
        if let Some(note) = &self.system_note {
            observation.insert("system_note".into(), json!(note));
        }
        json!({
            "observation": observation,
            "runtime_state": {
                "runtime": self.regime.as_str(),
                "active_globals": self.active_globals,
                "last_step_globals": self.last_step_globals,
            }
        })
    }

    /// Canonical serialization appended to the conversation.
    pub fn to_json(&self) -> String {
        pyjson::dumps(&self.to_value())
    }
}

fn active_for(regime: RuntimeRegime, manifest: &[String]) -> Vec<String> {
    match regime {
        RuntimeRegime::Persistent => manifest.to_vec(),
        RuntimeRegime::Reset => Vec::new(),
    }
}

pub fn multi_block_note(block_count: usize) -> String {
    format!("response contained {block_count} code blocks; only the first was executed")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentReply {
    pub text: String,
    /// Provider-reported counts; the harness tokenizer fills gaps.
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

impl AgentReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), prompt_tokens: None, completion_tokens: None }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AgentError {
    #[error("endpoint_unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("auth_failure: {0}")]
    AuthFailure(String),
    #[error("response_malformed: {0}")]
    ResponseMalformed(String),
}

/// Produces the next assistant message from the conversation so far.
pub trait Agent {
    /// Label recorded in the trace.
    fn name(&self) -> String;

    /// Runtime semantics the agent's coding idiom assumes.
    fn train_semantics(&self) -> RuntimeRegime;

    fn next_action(&mut self, messages: &[ChatMessage]) -> Result<AgentReply, AgentError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub regime: RuntimeRegime,
    pub limits: TurnLimits,
    /// Regime whose instruction and demo go into the system prompt. Defaults
    /// to `regime`; binding lifetimes follow `regime` either way.
    pub prompt_regime: Option<RuntimeRegime>,
    pub exec_timeout_s: f64,
}

impl EpisodeConfig {
    pub fn new(regime: RuntimeRegime) -> Self {
        Self { regime, limits: TurnLimits::default(), prompt_regime: None, exec_timeout_s: DEFAULT_TIMEOUT_S }
    }

    pub fn with_max_turns(mut self, max_turns: u32) -> Self {
        self.limits.max_turns = max_turns.max(1);
        self
    }
}

/// Routes tool calls from executing code into the episode state.
pub struct EnvHost<'s, 'i> {
    pub state: &'s mut EpisodeState<'i>,
    pub calls: Vec<ToolCallRecord>,
    pub finish_called: bool,
}

impl<'s, 'i> EnvHost<'s, 'i> {
    pub fn new(state: &'s mut EpisodeState<'i>) -> Self {
        Self { state, calls: Vec::new(), finish_called: false }
    }
}

fn arg_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl ToolHost for EnvHost<'_, '_> {
    fn call_tool(&mut self, tool: &str, args: &[Value]) -> Result<Option<String>, String> {
        let strs: Vec<String> = args.iter().map(arg_string).collect();
        let outcome = ToolCall::parse(tool, &strs).and_then(|call| {
            let r = self.state.apply_tool(&call);
            if r.is_ok() && call == ToolCall::Finish {
                self.finish_called = true;
            }
            r
        });
        self.calls.push(ToolCallRecord {
            tool: tool.to_string(),
            args: args.to_vec(),
            error: outcome.as_ref().err().map(|e| e.to_string()),
        });
        match outcome {
            Ok(ToolPayload::Json(s)) => Ok(Some(s)),
            Ok(ToolPayload::Null) => Ok(None),
            Err(e) => Err(e.message()),
        }
    }
}

/// Runs one episode to completion and returns its trace.
pub fn run_episode(
    agent: &mut dyn Agent,
    instance: &Instance,
    refsol: &ReferenceSolution,
    sandbox: &mut dyn Sandbox,
    config: &EpisodeConfig,
    tokenizer: &dyn Tokenizer,
) -> Trace {
    let started = Instant::now();
    let regime = config.regime;
    let bundle = build_prompt(config.prompt_regime.unwrap_or(regime), instance);
    let mut events = vec![
        TraceEvent::Meta(Meta {
            instance_id: instance.instance_id.clone(),
            difficulty: instance.difficulty.as_str().to_string(),
            regime: regime.as_str().to_string(),
            agent: agent.name(),
            train_semantics: agent.train_semantics().as_str().to_string(),
            max_turns: config.limits.max_turns,
            seed: instance.seed,
        }),
        TraceEvent::SystemPrompt(SystemPrompt::Parts { parts: bundle.system_parts.clone() }),
        TraceEvent::Task { content: bundle.task.clone() },
    ];
    let mut messages = vec![ChatMessage::system(bundle.system()), ChatMessage::user(bundle.task.clone())];
    let mut state = EpisodeState::new(instance);
    let mut live: Vec<String> = Vec::new();
    let mut last_step: Vec<String> = Vec::new();
    let mut total_tokens = 0u64;
    let mut steps = 0u32;
    let mut finish = Finish { signal: SIGNAL_MAX_TURNS.to_string(), detail: None };

    for turn in 1..=config.limits.max_turns {
        let reply = match agent.next_action(&messages) {
            Ok(r) => r,
            Err(e) => {
                finish = Finish { signal: SIGNAL_ERROR.to_string(), detail: Some(e.to_string()) };
                break;
            }
        };
        let tokens_prompt =
            reply.prompt_tokens.unwrap_or_else(|| messages.iter().map(|m| tokenizer.count(&m.content) as u64).sum());
        let tokens_completion = reply.completion_tokens.unwrap_or_else(|| tokenizer.count(&reply.text) as u64);
        total_tokens += tokens_prompt + tokens_completion;
        steps = turn;
        messages.push(ChatMessage::assistant(reply.text.clone()));

        let action = extract_action(&reply.text);
        let globals_before = if regime.resets() && action.is_some() { Vec::new() } else { live.clone() };
        let mut step = AgentStep {
            turn,
            raw_text: reply.text.clone(),
            code: action.as_ref().map(|a| a.code.clone()),
            block_count: action.as_ref().map_or(0, |a| a.block_count),
            exec: None,
            globals_before,
            globals_after: Vec::new(),
            observation: String::new(),
            tokens_prompt,
            tokens_completion,
            system_note: None,
            tool_calls: Vec::new(),
        };

        let Some(action) = action else {
            let header = RuntimeHeader {
                success: false,
                result: None,
                output: String::new(),
                error: Some(NO_CODE_ERROR.to_string()),
                system_note: None,
                regime,
                active_globals: live.clone(),
                last_step_globals: last_step.clone(),
            };
            step.globals_after = live.clone();
            step.observation = header.to_json();
            messages.push(ChatMessage::user(step.observation.clone()));
            events.push(TraceEvent::AgentStep(step));
            continue;
        };

        let note = (action.block_count > 1).then(|| multi_block_note(action.block_count));
        let request =
            ExecRequest { code: action.code.clone(), reset_before: regime.resets(), timeout_s: config.exec_timeout_s };
        let mut host = EnvHost::new(&mut state);
        let exec = sandbox.exec(&request, &mut host);
        let EnvHost { calls, finish_called, .. } = host;
        step.tool_calls = calls;
        step.system_note = note.clone();
        let exec = match exec {
            Ok(e) => e,
            Err(e) => {
                live.clear();
                step.globals_after = Vec::new();
                events.push(TraceEvent::AgentStep(step));
                finish = Finish { signal: SIGNAL_ERROR.to_string(), detail: Some(e.to_string()) };
                break;
            }
        };
        let header = RuntimeHeader::from_exec(regime, &exec, note);
        live = header.active_globals.clone();
        last_step = header.last_step_globals.clone();
        step.globals_after = live.clone();
        step.observation = header.to_json();
        step.exec = Some(exec);
        messages.push(ChatMessage::user(step.observation.clone()));
        events.push(TraceEvent::AgentStep(step));
        if finish_called {
            finish = Finish { signal: SIGNAL_FINISH.to_string(), detail: None };
            break;
        }
    }
    sandbox.shutdown();

    let report = state.score(refsol);
    events.push(TraceEvent::Finish(finish.clone()));
    events.push(TraceEvent::Summary(Summary {
        score: report.normalized_optimality,
        solved: report.solved,
        steps,
        tool_calls: state.tool_calls(),
        total_tokens,
        wall_time_s: started.elapsed().as_secs_f64(),
        finish_signal: finish.signal,
        achieved_value: report.achieved_value,
        optimal_value: refsol.total_value,
        capacity_utilization: report.capacity_utilization,
        items_inspected: state.inspections_used(),
    }));
    Trace { events }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::{generate_seeded, DifficultyConfig};
    use crate::sandbox::{SandboxError, StubSandbox};
    use crate::tracekit::tokenize::ApproxTokenizer;

    struct Replay {
        replies: Vec<String>,
        seen: Vec<Vec<ChatMessage>>,
    }

    impl Replay {
        fn new(replies: &[&str]) -> Self {
            Self { replies: replies.iter().map(|s| s.to_string()).collect(), seen: Vec::new() }
        }
    }

    impl Agent for Replay {
        fn name(&self) -> String {
            "replay".into()
        }

        fn train_semantics(&self) -> RuntimeRegime {
            RuntimeRegime::Persistent
        }

        fn next_action(&mut self, messages: &[ChatMessage]) -> Result<AgentReply, AgentError> {
            self.seen.push(messages.to_vec());
            let i = (self.seen.len() - 1).min(self.replies.len() - 1);
            Ok(AgentReply::text(self.replies[i].clone()))
        }
    }

    fn block(code: &str) -> String {
        format!("Reflecting.\n```python\n{code}\n```\n")
    }

    fn setup() -> (Instance, ReferenceSolution) {
        let g = generate_seeded(&DifficultyConfig::easy(), 11).unwrap();
        (g.instance, g.reference)
    }

    fn run(replies: &[String], regime: RuntimeRegime, max_turns: u32) -> (Trace, Replay) {
        let (inst, refsol) = setup();
        let refs: Vec<&str> = replies.iter().map(String::as_str).collect();
        let mut agent = Replay::new(&refs);
        let mut sb = StubSandbox::new();
        let cfg = EpisodeConfig::new(regime).with_max_turns(max_turns);
        let t = run_episode(&mut agent, &inst, &refsol, &mut sb, &cfg, &ApproxTokenizer);
        (t, agent)
    }

    fn headers(t: &Trace) -> Vec<Value> {
        t.steps().map(|s| serde_json::from_str(&s.observation).unwrap()).collect()
    }

    const TURN1: &str = "items = [10, 20]\n\ndef foo(items):\n    return items + items\n\nprint(len(items))";

    #[test]
    fn persistent_header_matches_demo() {
        let replies =
            [block(TURN1), block("items = foo(items)\ntotal = sum(items)\nprint(f\"Total: {total}\")\nfinish()")];
        let (t, _) = run(&replies, RuntimeRegime::Persistent, 5);
        let obs: Vec<&str> = t.steps().map(|s| s.observation.as_str()).collect();
        assert_eq!(
            obs[0],
            r#"{"observation": {"success": true, "result": null, "output": "2\n", "error": null}, "runtime_state": {"runtime": "persistent", "active_globals": ["items", "foo"], "last_step_globals": ["items", "foo"]}}"#
        );
        assert_eq!(
            obs[1],
            r#"{"observation": {"success": true, "result": null, "output": "Total: 60\n", "error": null}, "runtime_state": {"runtime": "persistent", "active_globals": ["items", "foo", "total"], "last_step_globals": ["items", "foo", "total"]}}"#
        );
        assert_eq!(t.finish_signal(), Some(SIGNAL_FINISH));
        assert_eq!(t.summary().unwrap().score, 0.0);
        t.check().unwrap();
    }

    #[test]
    fn reset_header_and_missing_binding() {
        let replies = [block(TURN1), block("items = foo(items)\nfinish()")];
        let (t, _) = run(&replies, RuntimeRegime::Reset, 2);
        let h = headers(&t);
        assert_eq!(h[0]["runtime_state"]["active_globals"], json!([]));
        assert_eq!(h[0]["runtime_state"]["last_step_globals"], json!(["items", "foo"]));
        assert_eq!(h[1]["observation"]["success"], json!(false));
        let err = h[1]["observation"]["error"].as_str().unwrap();
        assert!(err.contains("is not defined"), "{err}");
        // finish() never ran, so the episode hits the turn limit.
        assert_eq!(t.finish_signal(), Some(SIGNAL_MAX_TURNS));
        let steps: Vec<&AgentStep> = t.steps().collect();
        assert!(steps.iter().all(|s| s.globals_before.is_empty() && s.globals_after.is_empty()));
    }

    #[test]
    fn reset_instruction_does_not_change_lifetimes() {
        let (inst, refsol) = setup();
        let replies = [block("x = 1"), block("print(x)\nfinish()")];
        let refs: Vec<&str> = replies.iter().map(String::as_str).collect();
        for (regime, prompt) in
            [(RuntimeRegime::Persistent, RuntimeRegime::Reset), (RuntimeRegime::Reset, RuntimeRegime::Persistent)]
        {
            let mut agent = Replay::new(&refs);
            let mut sb = StubSandbox::new();
            let mut cfg = EpisodeConfig::new(regime).with_max_turns(2);
            cfg.prompt_regime = Some(prompt);
            let t = run_episode(&mut agent, &inst, &refsol, &mut sb, &cfg, &ApproxTokenizer);
            let second = t.steps().nth(1).unwrap();
            assert_eq!(second.error().is_some(), regime == RuntimeRegime::Reset);
            let sys = &agent.seen[0][0].content;
            assert!(sys.contains(prompts::regime_instruction(prompt)));
        }
    }

    #[test]
    fn never_finishing_agent_hits_limit() {
        let (t, agent) = run(&[block("print(1)")], RuntimeRegime::Persistent, 7);
        assert_eq!(t.steps().count(), 7);
        assert_eq!(t.finish_signal(), Some(SIGNAL_MAX_TURNS));
        assert_eq!(agent.seen.len(), 7);
        // system, task, then assistant/observation pairs
        assert_eq!(agent.seen[6].len(), 2 + 2 * 6);
    }

    #[test]
    fn immediate_finish_scores_zero() {
        let (t, _) = run(&[block("finish()")], RuntimeRegime::Reset, 40);
        let s = t.summary().unwrap();
        assert_eq!(s.steps, 1);
        assert_eq!(s.score, 0.0);
        assert!(!s.solved);
        assert_eq!(s.finish_signal, SIGNAL_FINISH);
        assert_eq!(s.tool_calls, 1);
        t.check().unwrap();
    }

    #[test]
    fn oracle_replay_scores_one() {
        let (inst, refsol) = setup();
        let mut code = String::new();
        for id in &refsol.item_ids {
            code.push_str(&format!("inspect(\"{id}\")\ntake_item(\"{id}\")\n"));
        }
        code.push_str("finish()");
        let replies = [block(&code)];
        let refs: Vec<&str> = replies.iter().map(String::as_str).collect();
        let mut agent = Replay::new(&refs);
        let mut sb = StubSandbox::new();
        let t = run_episode(
            &mut agent,
            &inst,
            &refsol,
            &mut sb,
            &EpisodeConfig::new(RuntimeRegime::Persistent),
            &ApproxTokenizer,
        );
        let s = t.summary().unwrap();
        assert_eq!(s.score, 1.0);
        assert!(s.solved);
        assert_eq!(s.achieved_value, refsol.total_value);
        assert_eq!(s.tool_calls as usize, 2 * refsol.item_ids.len() + 1);
    }

    #[test]
    fn multi_block_gets_note_and_runs_first_only() {
        let text = "Two blocks.\n```python\na = 1\n```\n```python\nb = 2\n```";
        let (t, _) = run(&[text.to_string(), block("finish()")], RuntimeRegime::Persistent, 3);
        let first = t.steps().next().unwrap();
        assert_eq!(first.block_count, 2);
        assert_eq!(first.system_note.as_deref(), Some(multi_block_note(2).as_str()));
        let h: Value = serde_json::from_str(&first.observation).unwrap();
        assert_eq!(h["observation"]["system_note"], json!(multi_block_note(2)));
        assert_eq!(h["runtime_state"]["active_globals"], json!(["a"]));
    }

    #[test]
    fn prose_reply_executes_nothing() {
        let (t, _) = run(&["Let me think.".to_string(), block("finish()")], RuntimeRegime::Persistent, 3);
        let first = t.steps().next().unwrap();
        assert!(first.code.is_none() && first.exec.is_none());
        assert_eq!(first.block_count, 0);
        assert!(first.tool_calls.is_empty());
        let h: Value = serde_json::from_str(&first.observation).unwrap();
        assert_eq!(h["observation"]["success"], json!(false));
        assert_eq!(h["observation"]["error"], json!(NO_CODE_ERROR));
        assert_eq!(t.steps().count(), 2);
        assert_eq!(t.finish_signal(), Some(SIGNAL_FINISH));
    }

    #[test]
    fn tool_errors_become_observations() {
        let (t, _) = run(&[block("take_item(\"item_nope\")"), block("finish()")], RuntimeRegime::Persistent, 3);
        let first = t.steps().next().unwrap();
        let err = first.error().unwrap();
        assert!(err.starts_with("ToolRuntimeException"), "{err}");
        assert_eq!(first.tool_calls.len(), 1);
        assert!(first.tool_calls[0].error.as_deref().unwrap().contains("unknown item"));
        assert_eq!(t.summary().unwrap().tool_calls, 2);
    }

    #[test]
    fn token_counts_accumulate() {
        let (t, _) = run(&[block("print(1)"), block("finish()")], RuntimeRegime::Persistent, 3);
        let total: u64 = t.steps().map(|s| s.tokens_prompt + s.tokens_completion).sum();
        assert_eq!(t.summary().unwrap().total_tokens, total);
        let steps: Vec<&AgentStep> = t.steps().collect();
        assert!(steps[1].tokens_prompt > steps[0].tokens_prompt);
    }

    struct Broken;

    impl Sandbox for Broken {
        fn exec(&mut self, _: &ExecRequest, _: &mut dyn ToolHost) -> Result<ExecResult, SandboxError> {
            Err(SandboxError::Unreachable("worker exited".into()))
        }

        fn shutdown(&mut self) {}
    }

    #[test]
    fn sandbox_failure_ends_with_error_signal() {
        let (inst, refsol) = setup();
        let mut agent = Replay::new(&["```python\nx = 1\n```"]);
        let t = run_episode(
            &mut agent,
            &inst,
            &refsol,
            &mut Broken,
            &EpisodeConfig::new(RuntimeRegime::Reset),
            &ApproxTokenizer,
        );
        assert_eq!(t.finish_signal(), Some(SIGNAL_ERROR));
        assert!(t.finish().unwrap().detail.as_deref().unwrap().contains("worker exited"));
        assert_eq!(t.steps().count(), 1);
        t.check().unwrap();
    }

    #[test]
    fn headers_never_leak_values() {
        let (inst, _) = setup();
        let code = "import json\nids = json.loads(list_items())\nattrs = {i: json.loads(inspect(i)) for i in ids[:3]}";
        let (t, _) = run(&[block(code), block("finish()")], RuntimeRegime::Persistent, 2);
        let obs = &t.steps().next().unwrap().observation;
        for it in &inst.items {
            assert!(!obs.contains(&it.id));
        }
        assert!(obs.contains(r#""active_globals": ["json", "ids", "attrs"]"#), "{obs}");
    }
}
