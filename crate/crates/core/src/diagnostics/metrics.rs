//! Per-trace behavioral metrics, unresolved-reference scan and failure labels.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::lex::{lex_action, LexReport};
use crate::env::TOOL_EXCEPTION;
use crate::trace::{AgentStep, Trace};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BehavioralMetrics {
    /// Mean turn span of user-defined names across generated code.
    pub context_lifespan: f64,
    /// Mean turn span of names across live-binding manifests.
    pub interpreter_lifespan: f64,
    pub imports_per_step: f64,
    /// Long-range reuses: `(name, t, t')` with a reference at `t' >= t + 2`
    /// to a binding made at `t` and not re-bound in between.
    pub state_utilization: u64,
    pub redefinitions_per_step: f64,
    pub total_turns: u64,
}

fn mean_span(spans: &BTreeMap<&str, (u32, u32)>) -> f64 {
    if spans.is_empty() {
        return 0.0;
    }
    spans.values().map(|(a, b)| f64::from(b - a)).sum::<f64>() / spans.len() as f64
}

fn widen<'a>(spans: &mut BTreeMap<&'a str, (u32, u32)>, name: &'a str, turn: u32) {
    let e = spans.entry(name).or_insert((turn, turn));
    e.0 = e.0.min(turn);
    e.1 = e.1.max(turn);
}

pub fn behavioral_metrics(trace: &Trace) -> BehavioralMetrics {
    let steps: Vec<&AgentStep> = trace.steps().collect();
    let lexed: Vec<(u32, LexReport)> =
        steps.iter().map(|s| (s.turn, s.code.as_deref().map(lex_action).unwrap_or_default())).collect();
    let n = steps.len();
    if n == 0 {
        return BehavioralMetrics::default();
    }

    let user_defined: BTreeSet<&str> = lexed.iter().flat_map(|(_, r)| r.bound().map(String::as_str)).collect();
    let mut context = BTreeMap::new();
    for (turn, r) in &lexed {
        for name in r.mentions.iter().filter(|m| user_defined.contains(m.as_str())) {
            widen(&mut context, name, *turn);
        }
    }

    let mut live = BTreeMap::new();
    for s in &steps {
        for name in &s.globals_after {
            widen(&mut live, name, s.turn);
        }
    }

    let mut last_bound: BTreeMap<&str, u32> = BTreeMap::new();
    let mut utilization = 0u64;
    for (turn, r) in &lexed {
        for name in &r.references {
            if let Some(&t) = last_bound.get(name.as_str()) {
                if *turn >= t + 2 {
                    utilization += 1;
                }
            }
        }
        for name in r.bound() {
            last_bound.insert(name, *turn);
        }
    }

    let imports: usize = lexed.iter().map(|(_, r)| r.imports).sum();
    let redefinitions: usize = steps
        .iter()
        .zip(&lexed)
        .map(|(s, (_, r))| r.definitions.iter().filter(|d| s.globals_before.contains(d)).count())
        .sum();

    BehavioralMetrics {
        context_lifespan: mean_span(&context),
        interpreter_lifespan: mean_span(&live),
        imports_per_step: imports as f64 / n as f64,
        state_utilization: utilization,
        redefinitions_per_step: redefinitions as f64 / n as f64,
        total_turns: n as u64,
    }
}

const UNRESOLVED_MARKERS: [&str; 3] = ["nameerror", "unboundlocalerror", "is not defined"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnresolvedScan {
    pub count: u64,
    pub affected: bool,
}

/// True for interpreter errors that signal a missing binding.
pub fn is_unresolved_ref(error: &str) -> bool {
    if error.contains(TOOL_EXCEPTION) {
        return false;
    }
    let lower = error.to_lowercase();
    UNRESOLVED_MARKERS.iter().any(|m| lower.contains(m))
}

pub fn scan_unresolved_refs(trace: &Trace) -> UnresolvedScan {
    let count = trace.steps().filter_map(AgentStep::error).filter(|e| is_unresolved_ref(e)).count() as u64;
    UnresolvedScan { count, affected: count > 0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhaustion,
    Abnormal,
    Normal,
    Other,
}

impl Termination {
    pub const ALL: [Termination; 4] =
        [Termination::Normal, Termination::BudgetExhaustion, Termination::Abnormal, Termination::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::BudgetExhaustion => "budget_exhaustion",
            Termination::Abnormal => "abnormal",
            Termination::Normal => "normal",
            Termination::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Capacity,
    Class,
    Protocol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    Optimal,
    ConstraintViolation(ConstraintKind),
    ExecutionInstability,
    SilentSuboptimality,
    Unclassified,
}

impl Failure {
    pub const ALL: [Failure; 7] = [
        Failure::Optimal,
        Failure::ConstraintViolation(ConstraintKind::Capacity),
        Failure::ConstraintViolation(ConstraintKind::Class),
        Failure::ConstraintViolation(ConstraintKind::Protocol),
        Failure::ExecutionInstability,
        Failure::SilentSuboptimality,
        Failure::Unclassified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Failure::Optimal => "optimal",
            Failure::ConstraintViolation(ConstraintKind::Capacity) => "constraint_capacity",
            Failure::ConstraintViolation(ConstraintKind::Class) => "constraint_class",
            Failure::ConstraintViolation(ConstraintKind::Protocol) => "constraint_protocol",
            Failure::ExecutionInstability => "execution_instability",
            Failure::SilentSuboptimality => "silent_suboptimality",
            Failure::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureLabel {
    pub termination: Termination,
    /// Assigned for normal terminations only.
    pub failure: Option<Failure>,
    /// Execution errors per step.
    pub rho: f64,
    /// Execution errors among the final five steps.
    pub tau: u32,
}

pub const RHO_THRESHOLD: f64 = 0.5;
pub const TAU_THRESHOLD: u32 = 3;
pub const TAU_WINDOW: usize = 5;

pub fn termination_of(signal: &str) -> Termination {
    let s = signal.to_lowercase().replace('_', " ");
    if ["max turns", "max steps", "length", "context length"].iter().any(|k| s.contains(k)) {
        Termination::BudgetExhaustion
    } else if ["error", "exception", "tool error"].iter().any(|k| s.contains(k)) {
        Termination::Abnormal
    } else if s.contains("finish tool") {
        Termination::Normal
    } else {
        Termination::Other
    }
}

const CONSTRAINT_MARKERS: [(&str, ConstraintKind); 4] = [
    ("exceeds capacity", ConstraintKind::Capacity),
    ("disallowed class", ConstraintKind::Class),
    ("must be inspected", ConstraintKind::Protocol),
    ("already taken", ConstraintKind::Protocol),
];

pub fn classify(trace: &Trace, score: f64) -> FailureLabel {
    let steps: Vec<&AgentStep> = trace.steps().collect();
    let errors: Vec<&str> = steps.iter().filter_map(|s| s.error()).collect();
    let t = steps.len().max(1);
    let rho = errors.len() as f64 / t as f64;
    let tau = steps.iter().rev().take(TAU_WINDOW).filter(|s| s.error().is_some()).count() as u32;
    let termination = termination_of(trace.finish_signal().unwrap_or(""));
    let failure = (termination == Termination::Normal).then(|| {
        if score >= 1.0 {
            return Failure::Optimal;
        }
        let joined = errors.join("\n");
        if let Some((_, kind)) = CONSTRAINT_MARKERS.iter().find(|(m, _)| joined.contains(m)) {
            Failure::ConstraintViolation(*kind)
        } else if rho > RHO_THRESHOLD || tau >= TAU_THRESHOLD {
            Failure::ExecutionInstability
        } else if score < 1.0 {
            Failure::SilentSuboptimality
        } else {
            Failure::Unclassified
        }
    });
    FailureLabel { termination, failure, rho, tau }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceBuilder;

    fn names(ns: &[&str]) -> Vec<String> {
        ns.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn long_range_reuse_counted() {
        let t = TraceBuilder::new("u", "persistent")
            .step("a", "x = 1", Some(""), None)
            .step("b", "y = 2", Some(""), None)
            .step("c", "print(x)\nfinish()", Some("1"), None)
            .build();
        let m = behavioral_metrics(&t);
        assert_eq!(m.state_utilization, 1);
        assert_eq!(m.total_turns, 3);
        assert_eq!(m.context_lifespan, 1.0); // x spans 2 turns, y spans 0
    }

    #[test]
    fn intervening_assignment_breaks_reuse() {
        let t = TraceBuilder::new("u", "persistent")
            .step("a", "x = 1", Some(""), None)
            .step("b", "x = 2", Some(""), None)
            .step("c", "print(x)", Some(""), None)
            .step("d", "print(x)", Some(""), None)
            .build();
        // reuse at turn 4 of the turn-2 binding counts; turn 3 is adjacent
        assert_eq!(behavioral_metrics(&t).state_utilization, 1);
    }

    #[test]
    fn single_step_has_zero_lifespan() {
        let t = TraceBuilder::new("u", "reset").step("a", "import json\nx = 1\ny = x", Some(""), None).build();
        let m = behavioral_metrics(&t);
        assert_eq!(m.context_lifespan, 0.0);
        assert_eq!(m.imports_per_step, 1.0);
        assert_eq!(m.state_utilization, 0);
    }

    #[test]
    fn interpreter_lifespan_and_redefinitions() {
        let t = TraceBuilder::new("u", "persistent")
            .step_with_globals("a", "x = 1", Some(""), None, vec![], names(&["x"]))
            .step_with_globals("b", "x = 2\nz = 3", Some(""), None, names(&["x"]), names(&["x", "z"]))
            .step_with_globals("c", "print(z)", Some(""), None, names(&["x", "z"]), names(&["x", "z"]))
            .build();
        let m = behavioral_metrics(&t);
        assert_eq!(m.interpreter_lifespan, (2.0 + 1.0) / 2.0);
        assert!((m.redefinitions_per_step - 1.0 / 3.0).abs() < 1e-12);
        let empty = TraceBuilder::new("u", "reset").step("a", "x = 1", Some(""), None).build();
        assert_eq!(behavioral_metrics(&empty).interpreter_lifespan, 0.0);
    }

    #[test]
    fn unresolved_scan() {
        let t = TraceBuilder::new("s", "reset")
            .step("a", "x", None, Some("NameError: name 'items' is not defined"))
            .step("b", "take_item(i)", None, Some("ToolRuntimeException: item 'i' belongs to a disallowed class"))
            .step("c", "y", None, Some("UnboundLocalError: cannot access local variable 'y'"))
            .step("d", "1/0", None, Some("ZeroDivisionError: division by zero"))
            .build();
        assert_eq!(scan_unresolved_refs(&t), UnresolvedScan { count: 2, affected: true });
        assert!(!is_unresolved_ref("ToolRuntimeException: disallowed class"));
        let clean = TraceBuilder::new("s", "reset").step("a", "x", Some(""), None).build();
        assert_eq!(scan_unresolved_refs(&clean), UnresolvedScan { count: 0, affected: false });
    }

    #[test]
    fn termination_mapping() {
        assert_eq!(termination_of("max turns"), Termination::BudgetExhaustion);
        assert_eq!(termination_of("max_turns"), Termination::BudgetExhaustion);
        assert_eq!(termination_of("context length"), Termination::BudgetExhaustion);
        assert_eq!(termination_of("error"), Termination::Abnormal);
        assert_eq!(termination_of("Tool Error"), Termination::Abnormal);
        assert_eq!(termination_of("finish tool"), Termination::Normal);
        assert_eq!(termination_of("timeout"), Termination::Other);
    }

    fn with_errors(errors: &[Option<&str>], signal: &str) -> Trace {
        let mut b = TraceBuilder::new("c", "reset").signal(signal);
        for (i, e) in errors.iter().enumerate() {
            b = b.step(&format!("s{i}"), "x", Some(""), *e);
        }
        b.build()
    }

    #[test]
    fn classify_decision_order() {
        let t = with_errors(&[None], "max turns");
        let l = classify(&t, 0.3);
        assert_eq!(l.termination, Termination::BudgetExhaustion);
        assert_eq!(l.failure, None);

        assert_eq!(classify(&with_errors(&[Some("NameError: x")], "finish tool"), 1.0).failure, Some(Failure::Optimal));

        let t = with_errors(&[Some("E1"), Some("E2"), Some("E3"), None], "finish tool");
        let l = classify(&t, 0.5);
        assert_eq!(l.rho, 0.75);
        assert_eq!(l.failure, Some(Failure::ExecutionInstability));

        let t = with_errors(&[None, None, None], "finish tool");
        assert_eq!(classify(&t, 0.9).failure, Some(Failure::SilentSuboptimality));

        let t = with_errors(
            &[
                Some("ToolRuntimeException: item 'a' is already taken"),
                Some("ToolRuntimeException: taking item 'b' (weight 9) exceeds capacity"),
                None,
                None,
                None,
            ],
            "finish tool",
        );
        assert_eq!(classify(&t, 0.9).failure, Some(Failure::ConstraintViolation(ConstraintKind::Capacity)));
        let t = with_errors(
            &[Some("ToolRuntimeException: item 'a' must be inspected before it can be taken"), None, None, None],
            "finish tool",
        );
        assert_eq!(classify(&t, 0.9).failure, Some(Failure::ConstraintViolation(ConstraintKind::Protocol)));
    }

    #[test]
    fn tau_counts_recent_errors() {
        let mut errs = vec![None; 10];
        for e in errs.iter_mut().skip(7) {
            *e = Some("SyntaxError: bad");
        }
        let l = classify(&with_errors(&errs, "finish tool"), 0.5);
        assert_eq!(l.tau, 3);
        assert!(l.rho <= 0.5);
        assert_eq!(l.failure, Some(Failure::ExecutionInstability));
    }
}
