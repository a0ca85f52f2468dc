//! Budgeted, partially observable episode environment behind the tool API.
//!
//! Every tool call is transactional: a call that errors leaves the state
//! untouched. Error messages carry fixed lowercase phrases that downstream
//! trace diagnostics match on.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::instgen::Instance;
use crate::pyjson;
use crate::solver::ReferenceSolution;

/// Exception type name tools raise inside executed code.
pub const TOOL_EXCEPTION: &str = "ToolRuntimeException";

/// Runtime-provided tool names. Never user bindings.
pub const TOOL_NAMES: [&str; 4] = ["list_items", "inspect", "take_item", "finish"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tool", content = "arg", rename_all = "snake_case")]
pub enum ToolCall {
    ListItems,
    Inspect(String),
    TakeItem(String),
    Finish,
}

impl ToolCall {
    /// Builds a call from a tool name and its positional string arguments.
    pub fn parse(name: &str, args: &[String]) -> Result<Self, ToolError> {
        let arity = |want: usize| {
            if args.len() == want {
                Ok(())
            } else {
                Err(ToolError::BadArguments {
                    tool: name.to_string(),
                    detail: format!("takes {want} argument(s), got {}", args.len()),
                })
            }
        };
        match name {
            "list_items" => arity(0).map(|_| ToolCall::ListItems),
            "inspect" => arity(1).map(|_| ToolCall::Inspect(args[0].clone())),
            "take_item" => arity(1).map(|_| ToolCall::TakeItem(args[0].clone())),
            "finish" => arity(0).map(|_| ToolCall::Finish),
            other => Err(ToolError::BadArguments { tool: other.to_string(), detail: "unknown tool".into() }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ToolCall::ListItems => "list_items",
            ToolCall::Inspect(_) => "inspect",
            ToolCall::TakeItem(_) => "take_item",
            ToolCall::Finish => "finish",
        }
    }
}

/// Successful tool return: a JSON string or `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolPayload {
    Json(String),
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolError {
    UnknownItem(String),
    BudgetExhausted { budget: u32 },
    AlreadyTaken(String),
    NotInspected(String),
    DisallowedClass(String),
    ExceedsCapacity { id: String, weight: u64, current: u64, capacity: u64 },
    EpisodeFinished,
    BadArguments { tool: String, detail: String },
}

impl ToolError {
    /// Message without the exception tag.
    pub fn message(&self) -> String {
        match self {
            ToolError::UnknownItem(id) => format!("unknown item id '{id}'"),
            ToolError::BudgetExhausted { budget } => {
                format!("Tool call limit exceeded: inspection budget of {budget} distinct items is used up")
            }
            ToolError::AlreadyTaken(id) => format!("item '{id}' is already taken"),
            ToolError::NotInspected(id) => format!("item '{id}' must be inspected before it can be taken"),
            ToolError::DisallowedClass(id) => format!("item '{id}' belongs to a disallowed class"),
            ToolError::ExceedsCapacity { id, weight, current, capacity } => format!(
                "taking item '{id}' (weight {weight}) exceeds capacity: current weight {current}, capacity {capacity}"
            ),
            ToolError::EpisodeFinished => "episode already finished".into(),
            ToolError::BadArguments { tool, detail } => format!("{tool}: {detail}"),
        }
    }
}

impl fmt::Display for ToolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{TOOL_EXCEPTION}: {}", self.message())
    }
}

impl std::error::Error for ToolError {}

/// Live state of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeState<'a> {
    instance: &'a Instance,
    inspected: BTreeSet<String>,
    taken: Vec<String>,
    current_weight: u64,
    current_value: u64,
    finished: bool,
    tool_calls: u64,
}

impl<'a> EpisodeState<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        Self {
            instance,
            inspected: BTreeSet::new(),
            taken: Vec::new(),
            current_weight: 0,
            current_value: 0,
            finished: false,
            tool_calls: 0,
        }
    }

    pub fn instance(&self) -> &Instance {
        self.instance
    }

    pub fn inspected(&self) -> &BTreeSet<String> {
        &self.inspected
    }

    /// Taken ids in take order.
    pub fn taken(&self) -> &[String] {
        &self.taken
    }

    pub fn current_weight(&self) -> u64 {
        self.current_weight
    }

    pub fn current_value(&self) -> u64 {
        self.current_value
    }

    pub fn inspections_used(&self) -> u32 {
        self.inspected.len() as u32
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn tool_calls(&self) -> u64 {
        self.tool_calls
    }

    pub fn apply_tool(&mut self, call: &ToolCall) -> Result<ToolPayload, ToolError> {
        if self.finished {
            return Err(ToolError::EpisodeFinished);
        }
        self.tool_calls += 1;
        match call {
            ToolCall::ListItems => {
                let mut ids: Vec<&str> = self.instance.items.iter().map(|it| it.id.as_str()).collect();
                ids.sort_unstable();
                Ok(ToolPayload::Json(pyjson::dumps(&json!(ids))))
            }
            ToolCall::Inspect(id) => {
                let item = self.instance.item(id).ok_or_else(|| ToolError::UnknownItem(id.clone()))?;
                if !self.inspected.contains(id) {
                    if self.inspected.len() as u32 >= self.instance.inspection_budget {
                        return Err(ToolError::BudgetExhausted { budget: self.instance.inspection_budget });
                    }
                    self.inspected.insert(id.clone());
                }
                let payload = json!({"class": item.class, "value": item.value, "weight": item.weight});
                Ok(ToolPayload::Json(pyjson::dumps(&payload)))
            }
            ToolCall::TakeItem(id) => {
                let item = self.instance.item(id).ok_or_else(|| ToolError::UnknownItem(id.clone()))?;
                if self.taken.contains(id) {
                    return Err(ToolError::AlreadyTaken(id.clone()));
                }
                if !self.inspected.contains(id) {
                    return Err(ToolError::NotInspected(id.clone()));
                }
                if !self.instance.allowed_classes.contains(&item.class) {
                    return Err(ToolError::DisallowedClass(id.clone()));
                }
                if self.current_weight + item.weight > self.instance.capacity {
                    return Err(ToolError::ExceedsCapacity {
                        id: id.clone(),
                        weight: item.weight,
                        current: self.current_weight,
                        capacity: self.instance.capacity,
                    });
                }
                self.taken.push(id.clone());
                self.current_weight += item.weight;
                self.current_value += item.value;
                Ok(ToolPayload::Null)
            }
            ToolCall::Finish => {
                self.finished = true;
                Ok(ToolPayload::Null)
            }
        }
    }

    pub fn score(&self, refsol: &ReferenceSolution) -> ScoreReport {
        score(self.current_value, self.current_weight, self.instance.capacity, refsol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub normalized_optimality: f64,
    pub solved: bool,
    pub capacity_utilization: f64,
    pub achieved_value: u64,
}

/// Normalized optimality `achieved / optimal`; solved iff the optimum is hit.
pub fn score(achieved_value: u64, achieved_weight: u64, capacity: u64, refsol: &ReferenceSolution) -> ScoreReport {
    let s = if refsol.total_value == 0 {
        if achieved_value == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        achieved_value as f64 / refsol.total_value as f64
    };
    let utilization = if capacity == 0 { 0.0 } else { achieved_weight as f64 / capacity as f64 };
    ScoreReport {
        normalized_optimality: s,
        solved: achieved_value == refsol.total_value,
        capacity_utilization: utilization,
        achieved_value,
    }
}
