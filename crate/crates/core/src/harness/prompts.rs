//! Prompt texts and assembly.

use super::RuntimeRegime;
use crate::instgen::Instance;

/// Base agent instructions, shared by both regimes.
pub const BASE_SYSTEM: &str = r#"You are a CodeAct-style autonomous agent.

You solve tasks by alternating between:
1. Natural-language reasoning (plain text), and
2. Executable simple Python code blob (inside fenced code blocks).

Each step (output) can include at most 1 (one) code block.

Be concise in your reasoning and code.

When you are finished solving the task, ensure that you output a Python
code block which calls the `finish` tool.
Call the `finish` tool ONLY after completely solving the task, NOT on every turn.

Execution rules:
- Python code blocks are executed sequentially.
- Only expressions that are printed or explicitly returned are visible to you.
- Variable assignments alone do NOT produce observable output.
- Do not use variable names that conflict with tool names.

Output discipline:
- If a value will be needed for later reasoning or decisions,
  you MUST print it (e.g., via `print(...)`) or make it the final expression
  in the code block.
- Do not rely on implicit interpreter state visibility.

Tool usage:
- All tool calls must occur inside Python code blocks.
- Do not fabricate tool outputs; rely only on observed execution results.

Error handling:
- If execution fails or a needed value is missing,
  explain why and rerun with corrected code.

Completion:
- When the task is complete, provide a final plain-text answer.
- Do not emit further code after completion.

Output Structure:
You must strictly follow this format for every single turn:

1. Reflect upon the previous observation.
2. A single executable Python block.

You prioritize observability and correctness over brevity."#;

/// Regime instruction for persistent runtimes.
pub const PERSISTENT_INSTRUCTION: &str = r#"Runtime state: PERSISTENT.

1. Globals persist eternally.
   Once you define `x = 1`, it is available forever.
2. NEVER re-import libraries.
3. NEVER paste code from previous steps."#;

/// Regime instruction for reset runtimes.
pub const RESET_INSTRUCTION: &str = r#"Runtime state: RESET.

1. Runtime state resets every turn.
   Python variables DO NOT persist.
   You must redefine variables and re-import libraries every step."#;

/// Format demonstration for persistent runtimes.
pub const PERSISTENT_DEMO: &str = r#"--- EXAMPLE: PERSISTENT STATE ---
Task: Store items and sum values.

Turn 1
Assistant:
I will initialize the global list `items` and a helper function.
```python
items = [10, 20]

def foo(items):
    return items + items

print(len(items))
```
User: {"observation": {"success": true, "result": null,
       "output": "2\n", "error": null},
       "runtime_state": {"runtime": "persistent",
       "active_globals": ["items", "foo"],
       "last_step_globals": ["items", "foo"]}}

Turn 2
Assistant:
I can see `items` and `foo` in active_globals, so I reuse them directly.
```python
items = foo(items)
total = sum(items)
print(f"Total: {total}")
finish()
```
User: {"observation": {"success": true, "result": null,
       "output": "Total: 60\n", "error": null},
       "runtime_state": {"runtime": "persistent",
       "active_globals": ["items", "foo", "total"],
       "last_step_globals": ["items", "foo", "total"]}}
--- EXAMPLE END ---"#;

/// Format demonstration for reset runtimes.
pub const RESET_DEMO: &str = r#"--- EXAMPLE: RESET STATE ---
Task: Store items and sum values.

Turn 1
Assistant:
I will initialize `items` and print its contents so I can retrieve
them next turn, since state will reset.
```python
items = [10, 20]

def foo(items):
    return items + items

# State must be printed to survive the reset
print(f"STATE: items={items}")
print(len(items))
```
User: {"observation": {"success": true, "result": null,
       "output": "STATE: items=[10, 20]\n2\n", "error": null},
       "runtime_state": {"runtime": "reset",
       "active_globals": [],
       "last_step_globals": ["items", "foo"]}}

Turn 2
Assistant:
The environment has reset and active_globals is empty. I reconstruct
`items` and `foo` from the previous observation, then compute the total.
```python
# Re-initializing from previous observation
items = [10, 20]

def foo(items):
    return items + items

items = foo(items)
total = sum(items)
print(f"Total: {total}")
finish()
```
User: {"observation": {"success": true, "result": null,
       "output": "Total: 60\n", "error": null},
       "runtime_state": {"runtime": "reset",
       "active_globals": [],
       "last_step_globals": ["items", "foo", "total"]}}
--- EXAMPLE END ---"#;

/// Task goal and rules.
pub const GOAL: &str = r#"Goal: Select a subset of items to maximize total value,
subject to a hard capacity constraint.

Rules:
- Do not assume any item properties without inspecting.
- Never take an item unless you have inspected it.
- Never exceed capacity C.
  Maintain an explicit running total of current_weight
  in a variable and update it immediately after each take."#;

/// Tool reference appended to the task message.
pub const TOOL_REFERENCE: &str = r#"Tools (callable inside Python code blocks):
- list_items() -> JSON string: array of all item ids. Does not use the inspection budget.
- inspect(item_id) -> JSON string: {"class": ..., "value": ..., "weight": ...}.
  The first inspection of an item uses one unit of the inspection budget; repeated inspections are free.
- take_item(item_id) -> None. Adds an inspected item to the knapsack.
- finish() -> None. Ends the episode.
Failed tool calls raise ToolRuntimeException and change nothing."#;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    /// Base instructions, regime instruction, regime demonstration.
    pub system_parts: Vec<String>,
    pub task: String,
}

impl PromptBundle {
    pub fn system(&self) -> String {
        self.system_parts.join("\n\n")
    }
}

pub fn regime_instruction(regime: RuntimeRegime) -> &'static str {
    match regime {
        RuntimeRegime::Persistent => PERSISTENT_INSTRUCTION,
        RuntimeRegime::Reset => RESET_INSTRUCTION,
    }
}

pub fn regime_demo(regime: RuntimeRegime) -> &'static str {
    match regime {
        RuntimeRegime::Persistent => PERSISTENT_DEMO,
        RuntimeRegime::Reset => RESET_DEMO,
    }
}

/// Task message: goal, tool reference and the instance's public constants.
pub fn task_message(instance: &Instance) -> String {
    format!(
        "{GOAL}\n\n{TOOL_REFERENCE}\n\nCapacity C: {}\nInspection budget B: {}",
        instance.capacity, instance.inspection_budget
    )
}

pub fn build_prompt(regime: RuntimeRegime, instance: &Instance) -> PromptBundle {
    PromptBundle {
        system_parts: vec![
            BASE_SYSTEM.to_string(),
            regime_instruction(regime).to_string(),
            regime_demo(regime).to_string(),
        ],
        task: task_message(instance),
    }
}
