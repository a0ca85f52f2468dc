//! In-process interpreter for a Python subset.
//!
//! Covers the statements, builtins and the `json`/`math` modules that the
//! scripted policies emit, with CPython-compatible error text for the cases
//! trace diagnostics depend on (`NameError: name 'x' is not defined`, tool
//! exceptions, tracebacks reduced to `Kind: message`).

mod ast;
mod eval;
mod lexer;
pub(crate) mod parser;
mod value;

use std::rc::Rc;
use std::time::{Duration, Instant};

use super::{ExecRequest, ExecResult, Sandbox, SandboxError, ToolHost};
use crate::env::TOOL_NAMES;
use eval::{run_block, Scope};

pub use value::PyErr;

/// Upper bound on evaluation steps per block, independent of wall clock.
pub const DEFAULT_MAX_STEPS: u64 = 20_000_000;

pub struct StubSandbox {
    globals: Rc<Scope>,
    max_steps: u64,
    closed: bool,
}

impl Default for StubSandbox {
    fn default() -> Self {
        Self::new()
    }
}

impl StubSandbox {
    pub fn new() -> Self {
        Self { globals: Scope::root(), max_steps: DEFAULT_MAX_STEPS, closed: false }
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    /// Clears all user bindings.
    pub fn reset(&mut self) {
        self.globals.vars.borrow_mut().clear();
    }

    pub fn manifest(&self) -> Vec<String> {
        self.globals.vars.borrow().keys().filter(|k| !TOOL_NAMES.contains(&k.as_str())).cloned().collect()
    }
}

impl Sandbox for StubSandbox {
    fn exec(&mut self, req: &ExecRequest, host: &mut dyn ToolHost) -> Result<ExecResult, SandboxError> {
        if self.closed {
            return Err(SandboxError::Unreachable("sandbox was shut down".into()));
        }
        if req.reset_before {
            self.reset();
        }
        let deadline = Duration::try_from_secs_f64(req.timeout_s).ok().map(|d| Instant::now() + d);
        let out = run_block(&self.globals, &req.code, host, deadline, self.max_steps);
        Ok(ExecResult {
            success: out.error.is_none(),
            output: out.output,
            result: out.result,
            error: out.error,
            globals_manifest: self.manifest(),
        })
    }

    fn shutdown(&mut self) {
        self.reset();
        self.closed = true;
    }
}

impl Drop for StubSandbox {
    fn drop(&mut self) {
        // Closures hold their defining scope, so break the cycle explicitly.
        self.reset();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value as J;

    #[derive(Default)]
    struct Recorder {
        calls: Vec<(String, Vec<J>)>,
    }

    impl ToolHost for Recorder {
        fn call_tool(&mut self, tool: &str, args: &[J]) -> Result<Option<String>, String> {
            self.calls.push((tool.to_string(), args.to_vec()));
            match tool {
                "list_items" => Ok(Some(r#"["item_a", "item_b"]"#.into())),
                "inspect" => Ok(Some(r#"{"class": "A", "value": 13, "weight": 12}"#.into())),
                "take_item" => Err("item 'item_b' belongs to a disallowed class".into()),
                _ => Ok(None),
            }
        }
    }

    fn run(sb: &mut StubSandbox, code: &str, reset: bool) -> ExecResult {
        sb.exec(&ExecRequest::new(code, reset), &mut Recorder::default()).unwrap()
    }

    fn out(code: &str) -> String {
        let r = run(&mut StubSandbox::new(), code, false);
        assert!(r.success, "{code}: {:?}", r.error);
        r.output
    }

    fn err(code: &str) -> String {
        let r = run(&mut StubSandbox::new(), code, false);
        assert!(!r.success, "{code} unexpectedly succeeded");
        r.error.unwrap()
    }

    #[test]
    fn persistence_and_reset() {
        let mut sb = StubSandbox::new();
        assert!(run(&mut sb, "x = 1", false).success);
        assert_eq!(run(&mut sb, "print(x)", false).output, "1\n");
        let r = run(&mut sb, "print(x)", true);
        assert_eq!(r.error.as_deref(), Some("NameError: name 'x' is not defined"));
        assert!(r.globals_manifest.is_empty());
    }

    #[test]
    fn imports_join_manifest() {
        let mut sb = StubSandbox::new();
        let r = run(&mut sb, "import math\nprint(math.floor(2.5))", false);
        assert_eq!(r.output, "2\n");
        assert_eq!(r.globals_manifest, vec!["math"]);
    }

    #[test]
    fn manifest_keeps_definition_order_and_skips_tools() {
        let mut sb = StubSandbox::new();
        let r = run(&mut sb, "items = list_items()\nfoo = 1\nitems = 2\nfinish()", false);
        assert_eq!(r.globals_manifest, vec!["items", "foo"]);
    }

    #[test]
    fn tool_errors_are_catchable_and_tagged() {
        let code = "try:\n    take_item('item_b')\nexcept Exception as e:\n    print('caught', e)\n";
        assert_eq!(out(code), "caught item 'item_b' belongs to a disallowed class\n");
        let e = err("take_item('item_b')");
        assert_eq!(e, "ToolRuntimeException: item 'item_b' belongs to a disallowed class");
        let mut sb = StubSandbox::new();
        let r = run(&mut sb, "try:\n    take_item('x')\nexcept ToolRuntimeException as e:\n    pass\n", false);
        assert!(r.success);
        assert!(r.globals_manifest.is_empty(), "except-as name must be unbound afterwards");
    }

    #[test]
    fn tool_arguments_forwarded_as_json() {
        let mut host = Recorder::default();
        let mut sb = StubSandbox::new();
        sb.exec(&ExecRequest::new("inspect('item_a')\nlist_items()", false), &mut host).unwrap();
        assert_eq!(host.calls[0], ("inspect".to_string(), vec![J::String("item_a".into())]));
        assert_eq!(host.calls[1].0, "list_items");
    }

    #[test]
    fn final_expression_is_result() {
        let mut sb = StubSandbox::new();
        let r = run(&mut sb, "x = 2\nx * 21", false);
        assert_eq!(r.result.as_deref(), Some("42"));
        assert_eq!(run(&mut sb, "x = 3", false).result, None);
        assert_eq!(run(&mut sb, "'a'", false).result.as_deref(), Some("'a'"));
        assert_eq!(run(&mut sb, "finish()", false).result, None);
    }

    #[test]
    fn policy_idioms() {
        let code = r#"
import json
item_ids = json.loads(list_items())
attrs = {}
for item_id in item_ids[:2]:
    attrs[item_id] = json.loads(inspect(item_id))
ranked = sorted(attrs, key=lambda i: attrs[i]["value"] / attrs[i]["weight"], reverse=True)
current_weight = 0
taken = []
blocked_classes = []
for item_id in ranked:
    a = attrs[item_id]
    if a["class"] in blocked_classes or current_weight + a["weight"] > 100:
        continue
    try:
        take_item(item_id)
        taken.append(item_id)
        current_weight += a["weight"]
    except Exception as e:
        if "disallowed class" in str(e):
            blocked_classes.append(a["class"])
print("STATE: " + json.dumps({"taken": taken, "blocked": blocked_classes, "w": current_weight}))
print(f"Inspected {len(attrs)} of {len(item_ids)}; ratio {13/12:.3f}")
"#;
        assert_eq!(
            out(code),
            "STATE: {\"taken\": [], \"blocked\": [\"A\"], \"w\": 0}\nInspected 2 of 2; ratio 1.083\n"
        );
    }

    #[test]
    fn arithmetic_matches_python() {
        assert_eq!(out("print(7 // -2, 7 % -2, -7 // 2, -7 % 2, 2 ** 10, 7 / 2)"), "-4 -1 -4 1 1024 3.5\n");
        assert_eq!(out("print(round(2.5), round(3.5), round(2.675, 2), abs(-3))"), "2 4 2.67 3\n");
        assert_eq!(out("print(0.1 + 0.2, 1e20, 1/3)"), "0.30000000000000004 1e+20 0.3333333333333333\n");
        assert_eq!(out("print(True + 1, 3 == 3.0, 'ab' * 2, [0] * 3)"), "2 True abab [0, 0, 0]\n");
    }

    #[test]
    fn containers_and_methods() {
        assert_eq!(
            out("d = {'b': 1, 'a': 2}\nd['c'] = 3\nprint(d, list(d.keys()), sorted(d))"),
            "{'b': 1, 'a': 2, 'c': 3} ['b', 'a', 'c'] ['a', 'b', 'c']\n"
        );
        assert_eq!(out("xs = [3, 1, 2]\nxs.sort(reverse=True)\nprint(xs, xs.pop(), xs)"), "[3, 2] 1 [3, 2]\n");
        assert_eq!(out("print(', '.join(['a', 'b']), 'a,b'.split(','), ' x '.strip())"), "a, b ['a', 'b'] x\n");
        assert_eq!(
            out("print({k: v * 2 for k, v in [('a', 1)]}, [i for i in range(5) if i % 2])"),
            "{'a': 2} [1, 3]\n"
        );
        assert_eq!(out("print(max([1, 5, 2]), min([4, 2], key=lambda v: -v), sum([1, 2.5]))"), "5 4 3.5\n");
        assert_eq!(out("a, (b, c) = 1, (2, 3)\nprint(a + b + c, (1,), ())"), "6 (1,) ()\n");
        assert_eq!(
            out("print(list(enumerate('ab')), list(zip([1, 2], 'xy')))"),
            "[(0, 'a'), (1, 'b')] [(1, 'x'), (2, 'y')]\n"
        );
    }

    #[test]
    fn sorted_stability_with_reverse() {
        assert_eq!(
            out("print(sorted([(1, 'a'), (0, 'b'), (1, 'c')], key=lambda p: p[0], reverse=True))"),
            "[(1, 'a'), (1, 'c'), (0, 'b')]\n"
        );
    }

    #[test]
    fn functions_and_closures() {
        let code = "def f(a, b=2):\n    total = a + b\n    return total\nprint(f(1), f(1, b=5))\ndef g(n):\n    return 1 if n <= 1 else n * g(n - 1)\nprint(g(5))";
        assert_eq!(out(code), "3 6\n120\n");
        let mut sb = StubSandbox::new();
        let r = run(&mut sb, "def f():\n    local = 1\n    return local\nf()", false);
        assert_eq!(r.globals_manifest, vec!["f"]);
    }

    #[test]
    fn error_texts() {
        assert_eq!(err("{}['k']"), "KeyError: 'k'");
        assert_eq!(err("[][0]"), "IndexError: list index out of range");
        assert_eq!(err("1 / 0"), "ZeroDivisionError: division by zero");
        assert_eq!(err("'a' + 1"), "TypeError: can only concatenate str (not \"int\") to str");
        assert_eq!(err("import numpy"), "ModuleNotFoundError: No module named 'numpy'");
        assert!(err("x = = 1").starts_with("SyntaxError"));
        assert_eq!(err("raise ValueError('bad')"), "ValueError: bad");
        assert_eq!(err("int('x')"), "ValueError: invalid literal for int() with base 10: 'x'");
        assert!(err("json.loads('{')").starts_with("NameError"));
        assert!(err("import json\njson.loads('')").starts_with("JSONDecodeError: Expecting value"));
    }

    #[test]
    fn output_kept_on_error() {
        let r = run(&mut StubSandbox::new(), "print('a')\nundefined_name", false);
        assert_eq!(r.output, "a\n");
        assert!(r.error.unwrap().contains("is not defined"));
    }

    #[test]
    fn runaway_loops_time_out() {
        let mut sb = StubSandbox::new().with_max_steps(10_000);
        let r = run(&mut sb, "while True:\n    pass", false);
        assert_eq!(r.error.as_deref(), Some("execution timeout"));
        let r = sb
            .exec(
                &ExecRequest { code: "while True:\n    pass".into(), reset_before: false, timeout_s: 0.0 },
                &mut Recorder::default(),
            )
            .unwrap();
        assert_eq!(r.error.as_deref(), Some("execution timeout"));
        let r = run(&mut sb, "try:\n    while True:\n        pass\nexcept Exception:\n    print('no')", false);
        assert_eq!(r.error.as_deref(), Some("execution timeout"));
    }

    #[test]
    fn deep_recursion_is_an_error_not_a_crash() {
        let e = err("def f(n):\n    return f(n + 1)\nf(0)");
        assert!(e.starts_with("RecursionError"));
    }

    #[test]
    fn format_specs() {
        assert_eq!(
            out("print(f'{3.14159:.2f}|{42:5d}|{\"ab\":>4}|{0.25:.1%}|{1234567:,}|{7:03d}')"),
            "3.14|   42|  ab|25.0%|1,234,567|007\n"
        );
        assert_eq!(out("print('{} and {x}'.format(1, x='y'))"), "1 and y\n");
    }

    #[test]
    fn shutdown_is_idempotent() {
        let mut sb = StubSandbox::new();
        sb.shutdown();
        sb.shutdown();
        assert!(sb.exec(&ExecRequest::new("1", false), &mut Recorder::default()).is_err());
    }
}
