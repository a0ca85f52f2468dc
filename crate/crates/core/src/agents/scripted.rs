//! Deterministic scripted policies.
//!
//! Both styles run the same four phases: list item ids, inspect in id order
//! up to the budget, take greedily by value density, finish. They differ in
//! where the working state lives between turns. The persistent style keeps
//! it in interpreter bindings; the stateless style prints it at the end of
//! every block and rebuilds it from the latest printed state.
//!
//! Policies read everything from the conversation, so one value can drive
//! any number of episodes.

use serde_json::Value;

use crate::harness::{Agent, AgentError, AgentReply, RuntimeRegime};
use crate::pyjson;
use crate::trace::{ChatMessage, Role};

pub const STATE_PREFIX: &str = "STATE: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentStyle {
    PersistentStyle,
    StatelessStyle,
}

impl AgentStyle {
    pub fn reuse_bindings(self) -> bool {
        self == AgentStyle::PersistentStyle
    }

    pub fn reimport_each_step(self) -> bool {
        self == AgentStyle::StatelessStyle
    }

    pub fn print_state_each_step(self) -> bool {
        self == AgentStyle::StatelessStyle
    }

    pub fn semantics(self) -> RuntimeRegime {
        match self {
            AgentStyle::PersistentStyle => RuntimeRegime::Persistent,
            AgentStyle::StatelessStyle => RuntimeRegime::Reset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    List,
    Inspect,
    Take,
    Finish,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::List => "list",
            Phase::Inspect => "inspect",
            Phase::Take => "take",
            Phase::Finish => "finish",
        }
    }

    fn parse(s: &str) -> Option<Phase> {
        [Phase::List, Phase::Inspect, Phase::Take, Phase::Finish].into_iter().find(|p| p.name() == s)
    }

    fn next(self) -> Phase {
        match self {
            Phase::List => Phase::Inspect,
            Phase::Inspect => Phase::Take,
            Phase::Take | Phase::Finish => Phase::Finish,
        }
    }
}

/// Public task constants read from the task message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskConstants {
    pub capacity: u64,
    pub budget: u64,
}

fn number_after(text: &str, label: &str) -> Option<u64> {
    let start = text.find(label)? + label.len();
    let digits: String = text[start..].chars().skip_while(|c| *c == ' ').take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

pub fn task_constants(messages: &[ChatMessage]) -> TaskConstants {
    let task = messages.iter().find(|m| m.role == Role::User).map_or("", |m| m.content.as_str());
    TaskConstants {
        capacity: number_after(task, "Capacity C:").unwrap_or(0),
        budget: number_after(task, "Inspection budget B:").unwrap_or(0),
    }
}

/// Turn label written on the first line of every scripted reply.
fn label(phase: Phase, recovery: bool) -> String {
    if recovery {
        format!("Phase {} (recovery)", phase.name())
    } else {
        format!("Phase {}", phase.name())
    }
}

fn parse_label(text: &str) -> Option<(Phase, bool)> {
    let rest = text.lines().next()?.strip_prefix("Phase ")?;
    let name: String = rest.chars().take_while(char::is_ascii_alphabetic).collect();
    Some((Phase::parse(&name)?, rest.contains("(recovery)")))
}

/// Parsed runtime header of the latest observation.
fn last_header(messages: &[ChatMessage]) -> Option<Value> {
    let last = messages.last().filter(|m| m.role == Role::User)?;
    serde_json::from_str(&last.content).ok()
}

fn header_error(header: &Value) -> Option<String> {
    header["observation"]["error"].as_str().filter(|e| !e.is_empty()).map(str::to_string)
}

/// Phase to run next and whether it is a recovery turn. An erroring turn
/// is retried once with a self-contained block; the policy then moves on.
fn plan(messages: &[ChatMessage]) -> (Phase, bool, Option<String>) {
    let Some(prev) = messages.iter().rev().find(|m| m.role == Role::Assistant) else {
        return (Phase::List, false, None);
    };
    let (phase, was_recovery) = parse_label(&prev.content).unwrap_or((Phase::Finish, true));
    let error = last_header(messages).as_ref().and_then(header_error);
    match error {
        Some(e) if !was_recovery => (phase, true, Some(e)),
        _ => (phase.next(), false, None),
    }
}

fn reply(label: String, reflection: &str, code: &str) -> AgentReply {
    AgentReply::text(format!("{label}: {reflection}\n```python\n{code}\n```"))
}

const LIST_CODE: &str = "item_ids = json.loads(list_items())";

fn inspect_loop(budget: u64) -> String {
    format!("for item_id in item_ids[:{budget}]:\n    attrs[item_id] = json.loads(inspect(item_id))")
}

fn take_loop(capacity: u64) -> String {
    format!(
        "ranked = sorted(attrs, key=lambda i: attrs[i][\"value\"] / attrs[i][\"weight\"], reverse=True)\n\
for item_id in ranked:\n\
\x20   a = attrs[item_id]\n\
\x20   if a[\"class\"] in blocked_classes or current_weight + a[\"weight\"] > {capacity}:\n\
\x20       continue\n\
\x20   try:\n\
\x20       take_item(item_id)\n\
\x20       current_weight += a[\"weight\"]\n\
\x20       taken.append(item_id)\n\
\x20   except Exception as e:\n\
\x20       if \"disallowed class\" in str(e):\n\
\x20           blocked_classes.append(a[\"class\"])"
    )
}

/// Keeps its table in interpreter bindings defined once and reused.
pub fn persistent_next(messages: &[ChatMessage]) -> AgentReply {
    let k = task_constants(messages);
    let (phase, recovery, error) = plan(messages);
    let lbl = label(phase, recovery);
    if recovery {
        let reason = error.unwrap_or_default();
        let why = format!("The last block failed ({reason}). I rebuild what this step needs in one block.");
        let code = match phase {
            Phase::List => format!("import json\n{LIST_CODE}\nattrs = {{}}\nprint(len(item_ids))"),
            Phase::Inspect => format!(
                "import json\n{LIST_CODE}\nattrs = {{}}\n{}\nprint(len(attrs))",
                inspect_loop(k.budget)
            ),
            Phase::Take => format!(
                "import json\n{LIST_CODE}\nattrs = {{}}\n{}\ncurrent_weight = 0\ntaken = []\nblocked_classes = []\n{}\nprint(current_weight, taken)",
                inspect_loop(k.budget),
                take_loop(k.capacity)
            ),
            Phase::Finish => "finish()".to_string(),
        };
        return reply(lbl, &why, &code);
    }
    match phase {
        Phase::List => reply(
            lbl,
            "I list the item ids and set up the globals I will reuse in later turns.",
            &format!("import json\n{LIST_CODE}\nattrs = {{}}\nprint(len(item_ids))"),
        ),
        Phase::Inspect => reply(
            lbl,
            "`item_ids` and `attrs` are in active_globals, so I reuse them directly and inspect up to the budget.",
            &format!("{}\nprint(len(attrs))", inspect_loop(k.budget)),
        ),
        Phase::Take => reply(
            lbl,
            "I take items by value density from `attrs`, tracking current_weight and classes that get rejected.",
            &format!(
                "current_weight = 0\ntaken = []\nblocked_classes = []\n{}\nprint(current_weight, taken)",
                take_loop(k.capacity)
            ),
        ),
        Phase::Finish => reply(
            lbl,
            "The selection is complete, so I report it and finish.",
            "print(json.dumps({\"taken\": taken, \"current_weight\": current_weight}))\nfinish()",
        ),
    }
}

/// Latest printed state across all observations, newest first.
pub fn latest_state(messages: &[ChatMessage]) -> serde_json::Map<String, Value> {
    for m in messages.iter().rev().filter(|m| m.role == Role::User) {
        let Ok(header) = serde_json::from_str::<Value>(&m.content) else { continue };
        let Some(output) = header["observation"]["output"].as_str() else { continue };
        let line = output.lines().rev().find_map(|l| l.strip_prefix(STATE_PREFIX));
        if let Some(Ok(Value::Object(map))) = line.map(serde_json::from_str::<Value>) {
            return map;
        }
    }
    serde_json::Map::new()
}

fn print_state(names: &[&str]) -> String {
    let fields: Vec<String> = names.iter().map(|n| format!("\"{n}\": {n}")).collect();
    format!("print(\"{STATE_PREFIX}\" + json.dumps({{{}}}))", fields.join(", "))
}

/// Rebuilds its table every turn from the latest printed state.
pub fn stateless_next(messages: &[ChatMessage]) -> AgentReply {
    let k = task_constants(messages);
    let (phase, recovery, _) = plan(messages);
    let lbl = label(phase, recovery);
    let state = latest_state(messages);
    let restore = |names: &[&str]| -> String {
        let mut out = vec!["# Re-initializing from previous observation".to_string()];
        for n in names {
            let v = state.get(*n).cloned().unwrap_or_else(|| match *n {
                "attrs" => Value::Object(Default::default()),
                "current_weight" => Value::from(0),
                _ => Value::Array(Vec::new()),
            });
            out.push(format!("{n} = {}", pyjson::dumps(&v)));
        }
        out.join("\n")
    };
    let have_ids = state.contains_key("item_ids");
    match phase {
        Phase::List => reply(
            lbl,
            "I list the item ids and print them so they survive the reset.",
            &format!(
                "import json\n{LIST_CODE}\n# State must be printed to survive the reset\n{}",
                print_state(&["item_ids"])
            ),
        ),
        Phase::Inspect => {
            let ids = if have_ids { restore(&["item_ids"]) } else { LIST_CODE.to_string() };
            reply(
                lbl,
                "active_globals is empty, so I rebuild `item_ids` from the previous observation and inspect up to the budget.",
                &format!(
                    "import json\n{ids}\nattrs = {{}}\n{}\n{}",
                    inspect_loop(k.budget),
                    print_state(&["attrs"])
                ),
            )
        }
        Phase::Take => reply(
            lbl,
            "I rebuild `attrs` from the previous observation and take items by value density.",
            &format!(
                "import json\n{}\ncurrent_weight = 0\ntaken = []\nblocked_classes = []\n{}\n{}",
                restore(&["attrs"]),
                take_loop(k.capacity),
                print_state(&["taken", "current_weight"])
            ),
        ),
        Phase::Finish => reply(
            lbl,
            "I rebuild the selection from the previous observation, report it and finish.",
            &format!(
                "import json\n{}\n{}\nfinish()",
                restore(&["taken", "current_weight"]),
                print_state(&["taken", "current_weight"])
            ),
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedAgent {
    pub style: AgentStyle,
}

impl ScriptedAgent {
    pub fn new(style: AgentStyle) -> Self {
        Self { style }
    }
}

impl Agent for ScriptedAgent {
    fn name(&self) -> String {
        match self.style {
            AgentStyle::PersistentStyle => "scripted-persistent".into(),
            AgentStyle::StatelessStyle => "scripted-stateless".into(),
        }
    }

    fn train_semantics(&self) -> RuntimeRegime {
        self.style.semantics()
    }

    fn next_action(&mut self, messages: &[ChatMessage]) -> Result<AgentReply, AgentError> {
        Ok(match self.style {
            AgentStyle::PersistentStyle => persistent_next(messages),
            AgentStyle::StatelessStyle => stateless_next(messages),
        })
    }
}

/// Replays a known item set: inspect and take each id, then finish.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleAgent {
    pub item_ids: Vec<String>,
}

impl Agent for OracleAgent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn train_semantics(&self) -> RuntimeRegime {
        RuntimeRegime::Persistent
    }

    fn next_action(&mut self, _messages: &[ChatMessage]) -> Result<AgentReply, AgentError> {
        let ids: Vec<Value> = self.item_ids.iter().map(|s| Value::from(s.as_str())).collect();
        let code = format!(
            "for item_id in {}:\n    inspect(item_id)\n    take_item(item_id)\nfinish()",
            pyjson::dumps(&Value::Array(ids))
        );
        Ok(AgentReply::text(format!("I take the known item set and finish.\n```python\n{code}\n```")))
    }
}
