//! Fenced code block extraction from agent responses.

use std::sync::LazyLock;

use regex::Regex;

static FENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z0-9_+.-]*[ \t]*\r?\n(.*?)```").expect("fence regex"));

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    /// Contents of the first fenced block.
    pub code: String,
    pub block_count: usize,
}

/// First fenced block and the total number of blocks, or `None` when the
/// text has no complete fenced block.
pub fn extract_action(text: &str) -> Option<Action> {
    let mut blocks = FENCE.captures_iter(text);
    let first = blocks.next()?;
    let body = first.get(1).map_or("", |m| m.as_str());
    let code = body.strip_suffix('\n').unwrap_or(body);
    let code = code.strip_suffix('\r').unwrap_or(code);
    Some(Action { code: code.to_string(), block_count: 1 + blocks.count() })
}
