//! Context-aware truncation of chat examples to a token budget.

use std::fmt;

use super::messages::ChatExample;
use super::tokenize::Tokenizer;
use crate::trace::{ChatMessage, Role};

pub const DEFAULT_CONTEXT_LIMIT: usize = 16384;
/// Headroom subtracted from the context limit.
pub const RESERVE: usize = 100;
pub const OMITTED_PLACEHOLDER: &str = r#"{"output": "[... Output Omitted for Brevity ...]"}"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TruncateReject {
    EndsWithUserUnfixable,
    HeadTailTooLarge,
    EmptyAfterTruncation,
}

impl TruncateReject {
    pub fn as_str(self) -> &'static str {
        match self {
            TruncateReject::EndsWithUserUnfixable => "ends_with_user_unfixable",
            TruncateReject::HeadTailTooLarge => "head_tail_too_large",
            TruncateReject::EmptyAfterTruncation => "empty_after_truncation",
        }
    }
}

impl fmt::Display for TruncateReject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn budget(context_limit: usize) -> usize {
    context_limit.saturating_sub(RESERVE)
}

pub fn count_messages(messages: &[ChatMessage], tokenizer: &dyn Tokenizer) -> usize {
    messages.iter().map(|m| tokenizer.count(&m.content)).sum()
}

fn ends_user_after_assistant(m: &[ChatMessage]) -> bool {
    m.len() >= 2 && m[m.len() - 1].role == Role::User && m[m.len() - 2].role == Role::Assistant
}

pub fn truncate_messages(
    example: &ChatExample,
    context_limit: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<ChatExample, TruncateReject> {
    let b = budget(context_limit);
    let msgs = &example.messages;
    let n = msgs.len();
    if n == 0 {
        return Err(TruncateReject::EmptyAfterTruncation);
    }
    let finish = |out: Vec<ChatMessage>| {
        if out.len() < 2 || out.last().map(|m| m.role) != Some(Role::Assistant) {
            Err(TruncateReject::EmptyAfterTruncation)
        } else {
            Ok(ChatExample { messages: out })
        }
    };

    if count_messages(msgs, tokenizer) <= b {
        if msgs[n - 1].role == Role::Assistant {
            return Ok(example.clone());
        }
        if ends_user_after_assistant(msgs) {
            return finish(msgs[..n - 1].to_vec());
        }
        return Err(TruncateReject::EndsWithUserUnfixable);
    }

    let head_len = if n > 1 && msgs[1].role == Role::User { 2 } else { 1 };
    let tail_start = if msgs[n - 1].role == Role::Assistant {
        n.saturating_sub(2).max(head_len)
    } else if ends_user_after_assistant(msgs) {
        (n - 2).max(head_len)
    } else {
        return Err(TruncateReject::EndsWithUserUnfixable);
    };
    let tail_end = if msgs[n - 1].role == Role::Assistant { n } else { n - 1 };
    let head = &msgs[..head_len.min(n)];
    let tail = if tail_start < tail_end { &msgs[tail_start..tail_end] } else { &[][..] };
    let mut used = count_messages(head, tokenizer) + count_messages(tail, tokenizer);
    if used > b {
        return Err(TruncateReject::HeadTailTooLarge);
    }

    let placeholder_cost = tokenizer.count(OMITTED_PLACEHOLDER);
    let mut middle = Vec::new();
    for m in msgs[head_len.min(tail_start)..tail_start].iter().rev() {
        let cost = tokenizer.count(&m.content);
        if used + cost <= b {
            used += cost;
            middle.push(m.clone());
        } else if m.role == Role::User && used + placeholder_cost <= b {
            used += placeholder_cost;
            middle.push(ChatMessage::user(OMITTED_PLACEHOLDER));
        } else {
            break;
        }
    }
    middle.reverse();
    let mut out = head.to_vec();
    out.extend(middle);
    out.extend_from_slice(tail);
    finish(out)
}
