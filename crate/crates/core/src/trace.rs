//! Append-only JSONL event log of one episode.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::ExecResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub instance_id: String,
    pub difficulty: String,
    /// Runtime semantics the episode ran under.
    pub regime: String,
    pub agent: String,
    /// Semantics the agent's coding idiom was built for.
    pub train_semantics: String,
    pub max_turns: u32,
    pub seed: u64,
}

/// A system prompt recorded as its parts; the prompt text is the parts
/// joined with blank lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemPrompt {
    Parts { parts: Vec<String> },
    Content { content: String },
}

impl SystemPrompt {
    pub fn strings(&self) -> Vec<&str> {
        match self {
            SystemPrompt::Parts { parts } => parts.iter().map(String::as_str).collect(),
            SystemPrompt::Content { content } => vec![content.as_str()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub tool: String,
    pub args: Vec<serde_json::Value>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub turn: u32,
    pub raw_text: String,
    /// First fenced block; `None` when the response had none.
    pub code: Option<String>,
    pub block_count: usize,
    pub exec: Option<ExecResult>,
    /// Names live in the interpreter when the block started.
    pub globals_before: Vec<String>,
    /// Names still live for the next block.
    pub globals_after: Vec<String>,
    /// Observation message appended to the conversation, verbatim.
    pub observation: String,
    pub tokens_prompt: u64,
    pub tokens_completion: u64,
    #[serde(default)]
    pub system_note: Option<String>,
    #[serde(default)]
    pub tool_calls: Vec<ToolCallRecord>,
}

impl AgentStep {
    /// Error text of the executed block, if any.
    pub fn error(&self) -> Option<&str> {
        self.exec.as_ref().and_then(|e| e.error.as_deref()).filter(|e| !e.is_empty())
    }

    pub fn output(&self) -> Option<&str> {
        self.exec.as_ref().map(|e| e.output.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finish {
    pub signal: String,
    #[serde(default)]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub score: f64,
    pub solved: bool,
    pub steps: u32,
    pub tool_calls: u64,
    pub total_tokens: u64,
    pub wall_time_s: f64,
    pub finish_signal: String,
    #[serde(default)]
    pub achieved_value: u64,
    #[serde(default)]
    pub optimal_value: u64,
    #[serde(default)]
    pub capacity_utilization: f64,
    #[serde(default)]
    pub items_inspected: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEvent {
    Meta(Meta),
    SystemPrompt(SystemPrompt),
    Task { content: String },
    AgentStep(AgentStep),
    Finish(Finish),
    Summary(Summary),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Parse { path: String, line: usize, source: serde_json::Error },
    #[error("malformed trace: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn meta(&self) -> Option<&Meta> {
        self.events.iter().find_map(|e| match e {
            TraceEvent::Meta(m) => Some(m),
            _ => None,
        })
    }

    pub fn system_prompts(&self) -> impl Iterator<Item = &SystemPrompt> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::SystemPrompt(s) => Some(s),
            _ => None,
        })
    }

    pub fn task(&self) -> Option<&str> {
        self.events.iter().find_map(|e| match e {
            TraceEvent::Task { content } => Some(content.as_str()),
            _ => None,
        })
    }

    pub fn steps(&self) -> impl Iterator<Item = &AgentStep> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::AgentStep(s) => Some(s),
            _ => None,
        })
    }

    pub fn finish(&self) -> Option<&Finish> {
        self.events.iter().find_map(|e| match e {
            TraceEvent::Finish(f) => Some(f),
            _ => None,
        })
    }

    pub fn summary(&self) -> Option<&Summary> {
        self.events.iter().rev().find_map(|e| match e {
            TraceEvent::Summary(s) => Some(s),
            _ => None,
        })
    }

    /// Finish signal from the summary, falling back to the finish event.
    pub fn finish_signal(&self) -> Option<&str> {
        self.summary().map(|s| s.finish_signal.as_str()).or_else(|| self.finish().map(|f| f.signal.as_str()))
    }

    /// Checks the event-order invariants: one meta first, one summary last,
    /// strictly increasing turns, score in [0, 1].
    pub fn check(&self) -> Result<(), TraceError> {
        let bad = |m: &str| Err(TraceError::Malformed(m.to_string()));
        if !matches!(self.events.first(), Some(TraceEvent::Meta(_))) {
            return bad("first event must be meta");
        }
        if self.events.iter().filter(|e| matches!(e, TraceEvent::Meta(_))).count() != 1 {
            return bad("exactly one meta event required");
        }
        if !matches!(self.events.last(), Some(TraceEvent::Summary(_))) {
            return bad("last event must be summary");
        }
        if self.events.iter().filter(|e| matches!(e, TraceEvent::Summary(_))).count() != 1 {
            return bad("exactly one summary event required");
        }
        let mut last = 0u32;
        for s in self.steps() {
            if s.turn <= last {
                return bad("agent_step turns must be strictly increasing");
            }
            last = s.turn;
        }
        let score = self.summary().map(|s| s.score).unwrap_or(0.0);
        if !(0.0..=1.0).contains(&score) {
            return bad("summary score outside [0, 1]");
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, path: &str) -> Result<Trace, TraceError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(line).map_err(|source| TraceError::Parse {
                path: path.to_string(),
                line: i + 1,
                source,
            })?;
            events.push(e);
        }
        Ok(Trace { events })
    }

    pub fn read(path: &Path) -> Result<Trace, TraceError> {
        let shown = path.display().to_string();
        let file = File::open(path).map_err(|source| TraceError::Io { path: shown.clone(), source })?;
        let mut text = String::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|source| TraceError::Io { path: shown.clone(), source })?;
            text.push_str(&line);
            text.push('\n');
        }
        Trace::from_jsonl(&text, &shown)
    }

    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        let shown = path.display().to_string();
        let file = File::create(path).map_err(|source| TraceError::Io { path: shown.clone(), source })?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|source| TraceError::Io { path: shown, source })
    }
}

/// Assembles synthetic traces, for fixtures and tooling.
#[derive(Debug, Clone)]
pub struct TraceBuilder {
    meta: Meta,
    system: Vec<String>,
    task: Option<String>,
    steps: Vec<AgentStep>,
    score: f64,
    signal: String,
}

impl TraceBuilder {
    pub fn new(instance_id: &str, regime: &str) -> Self {
        Self {
            meta: Meta {
                instance_id: instance_id.to_string(),
                difficulty: "easy".into(),
                regime: regime.to_string(),
                agent: "synthetic".into(),
                train_semantics: regime.to_string(),
                max_turns: 40,
                seed: 0,
            },
            system: vec!["system".into()],
            task: Some("task".into()),
            steps: Vec::new(),
            score: 1.0,
            signal: "finish tool".into(),
        }
    }

    pub fn score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    pub fn signal(mut self, signal: &str) -> Self {
        self.signal = signal.to_string();
        self
    }

    pub fn system(mut self, parts: &[&str]) -> Self {
        self.system = parts.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn task(mut self, task: Option<&str>) -> Self {
        self.task = task.map(str::to_string);
        self
    }

    /// Adds a step executing `code` with the given outcome.
    pub fn step(self, raw_text: &str, code: &str, output: Option<&str>, error: Option<&str>) -> Self {
        self.step_with_globals(raw_text, code, output, error, Vec::new(), Vec::new())
    }

    pub fn step_with_globals(
        mut self,
        raw_text: &str,
        code: &str,
        output: Option<&str>,
        error: Option<&str>,
        globals_before: Vec<String>,
        globals_after: Vec<String>,
    ) -> Self {
        // No outcome at all stands for a block that never ran.
        let exec = (output.is_some() || error.is_some()).then(|| ExecResult {
            success: error.is_none(),
            output: output.unwrap_or_default().to_string(),
            result: None,
            error: error.map(str::to_string),
            globals_manifest: globals_after.clone(),
        });
        self.steps.push(AgentStep {
            turn: self.steps.len() as u32 + 1,
            raw_text: raw_text.to_string(),
            code: Some(code.to_string()),
            block_count: 1,
            exec,
            globals_before,
            globals_after,
            observation: String::new(),
            tokens_prompt: 0,
            tokens_completion: 0,
            system_note: None,
            tool_calls: Vec::new(),
        });
        self
    }

    pub fn build(self) -> Trace {
        let mut events = vec![TraceEvent::Meta(self.meta)];
        events.push(TraceEvent::SystemPrompt(SystemPrompt::Parts { parts: self.system }));
        if let Some(task) = self.task {
            events.push(TraceEvent::Task { content: task });
        }
        let steps = self.steps.len() as u32;
        events.extend(self.steps.into_iter().map(TraceEvent::AgentStep));
        events.push(TraceEvent::Finish(Finish { signal: self.signal.clone(), detail: None }));
        events.push(TraceEvent::Summary(Summary {
            score: self.score,
            solved: self.score >= 1.0,
            steps,
            tool_calls: 0,
            total_tokens: 0,
            wall_time_s: 0.0,
            finish_signal: self.signal,
            achieved_value: 0,
            optimal_value: 0,
            capacity_utilization: 0.0,
            items_inspected: 0,
        }));
        Trace { events }
    }
}

/// Lists `*.jsonl` files in `dir`, sorted by path.
pub fn list_trace_files(dir: &Path) -> Result<Vec<std::path::PathBuf>, TraceError> {
    let shown = dir.display().to_string();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|source| TraceError::Io { path: shown.clone(), source })? {
        let entry = entry.map_err(|source| TraceError::Io { path: shown.clone(), source })?;
        let p = entry.path();
        if p.extension().is_some_and(|e| e == "jsonl") && p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        Trace {
            events: vec![
                TraceEvent::Meta(Meta {
                    instance_id: "easy_1".into(),
                    difficulty: "easy".into(),
                    regime: "reset".into(),
                    agent: "scripted-stateless".into(),
                    train_semantics: "stateless".into(),
                    max_turns: 40,
                    seed: 1,
                }),
                TraceEvent::SystemPrompt(SystemPrompt::Parts { parts: vec!["a".into(), "b".into()] }),
                TraceEvent::Task { content: "goal".into() },
                TraceEvent::AgentStep(AgentStep {
                    turn: 1,
                    raw_text: "r".into(),
                    code: Some("finish()".into()),
                    block_count: 1,
                    exec: None,
                    globals_before: vec![],
                    globals_after: vec![],
                    observation: "{}".into(),
                    tokens_prompt: 3,
                    tokens_completion: 1,
                    system_note: None,
                    tool_calls: vec![],
                }),
                TraceEvent::Finish(Finish { signal: "finish tool".into(), detail: None }),
                TraceEvent::Summary(Summary {
                    score: 1.0,
                    solved: true,
                    steps: 1,
                    tool_calls: 1,
                    total_tokens: 4,
                    wall_time_s: 0.0,
                    finish_signal: "finish tool".into(),
                    achieved_value: 5,
                    optimal_value: 5,
                    capacity_utilization: 0.5,
                    items_inspected: 1,
                }),
            ],
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let t = sample();
        let text = t.to_jsonl();
        assert!(text.lines().next().unwrap().starts_with(r#"{"type":"meta""#));
        assert_eq!(Trace::from_jsonl(&text, "x").unwrap(), t);
        t.check().unwrap();
    }

    #[test]
    fn system_prompt_accepts_plain_string() {
        let e: TraceEvent = serde_json::from_str(r#"{"type":"system_prompt","content":"hello"}"#).unwrap();
        match e {
            TraceEvent::SystemPrompt(sp) => assert_eq!(sp.strings(), vec!["hello"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn check_rejects_bad_order() {
        let mut t = sample();
        t.events.swap(0, 1);
        assert!(t.check().is_err());
        let mut t = sample();
        t.events.pop();
        assert!(t.check().is_err());
    }
}
