//! Trace quality filters applied before extraction.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::similarity::similarity_ratio;
use crate::trace::{Trace, TraceError};

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    pub min_score: f64,
    /// Trailing steps searched for a finish call.
    pub finish_window: usize,
    /// Earlier assistant texts compared against the most recent one.
    pub loop_window: usize,
    pub loop_similarity: f64,
    pub max_bad_error_ratio: f64,
    /// Errors containing any of these are not counted as bad.
    pub whitelist: Vec<String>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            min_score: 0.5,
            finish_window: 3,
            loop_window: 4,
            loop_similarity: 0.9,
            max_bad_error_ratio: 0.1,
            whitelist: vec!["ToolRuntimeException".into(), "Tool call limit exceeded".into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ScoreTooLow,
    NoFinish,
    RepetitiveLoop,
    HighErrorDensity,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::ScoreTooLow => "score_too_low",
            RejectReason::NoFinish => "no_finish",
            RejectReason::RepetitiveLoop => "repetitive_loop",
            RejectReason::HighErrorDensity => "high_error_density",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Errors not covered by the whitelist over the number of steps.
pub fn bad_error_ratio(trace: &Trace, cfg: &ValidationConfig) -> f64 {
    let steps = trace.steps().count();
    if steps == 0 {
        return 0.0;
    }
    let bad = trace
        .steps()
        .filter_map(|s| s.error())
        .filter(|e| !cfg.whitelist.iter().any(|w| e.contains(w.as_str())))
        .count();
    bad as f64 / steps as f64
}

/// True when the latest assistant text is near-identical to every earlier
/// text in the window. Needs at least one earlier text.
pub fn is_repetitive(texts: &[&str], cfg: &ValidationConfig) -> bool {
    let Some((last, earlier)) = texts.split_last() else { return false };
    let window = &earlier[earlier.len().saturating_sub(cfg.loop_window)..];
    !window.is_empty() && window.iter().all(|prev| similarity_ratio(last, prev) > cfg.loop_similarity)
}

/// `Ok(None)` accepts; otherwise the first failing check, in fixed order.
pub fn validate_trace(trace: &Trace, cfg: &ValidationConfig) -> Result<Option<RejectReason>, TraceError> {
    trace.check()?;
    let summary = trace.summary().expect("checked trace has a summary");
    if summary.score < cfg.min_score {
        return Ok(Some(RejectReason::ScoreTooLow));
    }
    let codes: Vec<Option<&str>> = trace.steps().map(|s| s.code.as_deref()).collect();
    let tail = &codes[codes.len().saturating_sub(cfg.finish_window)..];
    if !tail.iter().any(|c| c.is_some_and(|c| c.contains("finish()"))) {
        return Ok(Some(RejectReason::NoFinish));
    }
    let texts: Vec<&str> = trace.steps().map(|s| s.raw_text.as_str()).filter(|t| !t.trim().is_empty()).collect();
    if is_repetitive(&texts, cfg) {
        return Ok(Some(RejectReason::RepetitiveLoop));
    }
    if bad_error_ratio(trace, cfg) > cfg.max_bad_error_ratio {
        return Ok(Some(RejectReason::HighErrorDensity));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceBuilder;

    fn cfg() -> ValidationConfig {
        ValidationConfig::default()
    }

    fn varied(n: usize) -> TraceBuilder {
        let mut b = TraceBuilder::new("v", "persistent");
        for i in 0..n {
            let text = format!("turn {i}: {}", "abcdefghij".chars().cycle().skip(i * 3).take(20).collect::<String>());
            let code = if i + 1 == n { "finish()".to_string() } else { format!("step_{i}()") };
            b = b.step(&text, &code, Some(""), None);
        }
        b
    }

    #[test]
    fn accepts_clean_trace() {
        assert_eq!(validate_trace(&varied(5).build(), &cfg()).unwrap(), None);
    }

    #[test]
    fn score_threshold() {
        assert_eq!(validate_trace(&varied(3).score(0.49).build(), &cfg()).unwrap(), Some(RejectReason::ScoreTooLow));
        assert_eq!(validate_trace(&varied(3).score(0.5).build(), &cfg()).unwrap(), None);
    }

    #[test]
    fn finish_must_be_in_last_three() {
        let mut b = TraceBuilder::new("f", "reset").step("a", "finish()", Some(""), None);
        for i in 0..3 {
            b = b.step(&format!("different text {i} {}", "x".repeat(i * 10)), "print(1)", Some("1"), None);
        }
        assert_eq!(validate_trace(&b.clone().build(), &cfg()).unwrap(), Some(RejectReason::NoFinish));
        let ok = TraceBuilder::new("f", "reset")
            .step("alpha", "finish()", Some(""), None)
            .step("bravo charlie", "print(1)", Some(""), None)
            .step("delta echo foxtrot", "print(2)", Some(""), None);
        assert_eq!(validate_trace(&ok.build(), &cfg()).unwrap(), None);
    }

    #[test]
    fn repeated_text_is_a_loop() {
        let mut b = TraceBuilder::new("l", "reset");
        for _ in 0..5 {
            b = b.step("I will retry the same thing again.", "finish()", Some(""), None);
        }
        assert_eq!(validate_trace(&b.build(), &cfg()).unwrap(), Some(RejectReason::RepetitiveLoop));
    }

    #[test]
    fn loop_needs_all_in_window() {
        let same = "I will retry the same thing again.";
        let texts = ["something quite unrelated here", same, same, same, same, same];
        assert!(is_repetitive(&texts, &cfg()));
        let texts = [same, "something quite unrelated here", same, same, same];
        assert!(!is_repetitive(&texts, &cfg()));
        assert!(!is_repetitive(&[same], &cfg()));
        assert!(!is_repetitive(&[], &cfg()));
    }

    #[test]
    fn error_density() {
        let mut b = varied(8);
        b = b.step("nine", "print(x)", None, Some("NameError: name 'x' is not defined"));
        b = b.step("ten", "finish()", None, Some("SyntaxError: invalid syntax"));
        assert_eq!(validate_trace(&b.build(), &cfg()).unwrap(), Some(RejectReason::HighErrorDensity));

        let mut b = varied(8);
        b = b.step("nine", "take_item(a)", None, Some("ToolRuntimeException: item 'a' belongs to a disallowed class"));
        b = b.step("ten", "finish()", None, Some("ToolRuntimeException: Tool call limit exceeded: budget used up"));
        assert_eq!(validate_trace(&b.build(), &cfg()).unwrap(), None);

        let mut b = varied(9);
        b = b.step("ten", "finish()", None, Some("NameError: name 'x' is not defined"));
        assert_eq!(validate_trace(&b.build(), &cfg()).unwrap(), None);
    }

    #[test]
    fn first_failure_wins() {
        let mut b = TraceBuilder::new("o", "reset").score(0.1);
        for _ in 0..5 {
            b = b.step("same text", "print(x)", None, Some("NameError: name 'x' is not defined"));
        }
        let t = b.build();
        assert_eq!(validate_trace(&t, &cfg()).unwrap(), Some(RejectReason::ScoreTooLow));
        let mut relaxed = cfg();
        relaxed.min_score = 0.0;
        assert_eq!(validate_trace(&t, &relaxed).unwrap(), Some(RejectReason::NoFinish));
    }

    #[test]
    fn malformed_trace_is_an_error() {
        let mut t = varied(2).build();
        t.events.pop();
        assert!(validate_trace(&t, &cfg()).is_err());
    }
}
