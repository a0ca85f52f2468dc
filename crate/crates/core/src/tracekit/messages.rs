//! Conversion of a trace into a chat-format example.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::pyjson;
use crate::trace::{ChatMessage, Role, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExample {
    pub messages: Vec<ChatMessage>,
}

impl ChatExample {
    pub fn last_role(&self) -> Option<Role> {
        self.messages.last().map(|m| m.role)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtractReject {
    MissingTask,
    NoSteps,
    TooFewMessages,
}

impl ExtractReject {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractReject::MissingTask => "missing_task",
            ExtractReject::NoSteps => "no_steps",
            ExtractReject::TooFewMessages => "too_few_messages",
        }
    }
}

impl fmt::Display for ExtractReject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Observation content for a step, or `None` when it has neither output nor
/// a nonempty error.
pub fn observation_content(output: Option<&str>, error: Option<&str>) -> Option<String> {
    let mut obj = Map::new();
    if let Some(o) = output {
        obj.insert("output".into(), Value::from(o));
    }
    if let Some(e) = error.filter(|e| !e.is_empty()) {
        obj.insert("error".into(), Value::from(e));
    }
    (!obj.is_empty()).then(|| pyjson::dumps(&Value::Object(obj)))
}

pub fn extract_messages(trace: &Trace) -> Result<ChatExample, ExtractReject> {
    let task = trace.task().ok_or(ExtractReject::MissingTask)?;
    let steps: Vec<_> = trace.steps().collect();
    if steps.is_empty() {
        return Err(ExtractReject::NoSteps);
    }
    let mut messages = Vec::new();
    let system: Vec<&str> = trace.system_prompts().flat_map(|s| s.strings()).collect();
    if !system.is_empty() {
        messages.push(ChatMessage::system(system.join("\n\n")));
    }
    messages.push(ChatMessage::user(task));
    for (i, step) in steps.iter().enumerate() {
        if !step.raw_text.trim().is_empty() {
            messages.push(ChatMessage::assistant(step.raw_text.clone()));
        }
        if i + 1 == steps.len() {
            break;
        }
        if let Some(obs) = observation_content(step.output(), step.error()) {
            messages.push(ChatMessage::user(obs));
        }
    }
    if messages.len() < 3 {
        return Err(ExtractReject::TooFewMessages);
    }
    Ok(ChatExample { messages })
}
