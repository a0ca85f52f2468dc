//! Dataset preparation: shuffle, validate, extract, truncate, cap.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::messages::{extract_messages, ChatExample};
use super::tokenize::Tokenizer;
use super::truncate::{count_messages, truncate_messages, DEFAULT_CONTEXT_LIMIT};
use super::validate::{validate_trace, ValidationConfig};
use crate::trace::{list_trace_files, Trace, TraceError};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MAX_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct PrepConfig {
    pub validation: ValidationConfig,
    pub context_limit: usize,
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            validation: ValidationConfig::default(),
            context_limit: DEFAULT_CONTEXT_LIMIT,
            max_samples: DEFAULT_MAX_SAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub total: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepStats {
    pub found: usize,
    pub processed: usize,
    pub retained: usize,
    pub skipped: usize,
    pub unprocessed: usize,
    /// Skip counts by reason, over processed traces only.
    pub skip_reasons: BTreeMap<String, usize>,
    pub tokens: TokenStats,
}

impl PrepStats {
    pub fn retained_over_processed(&self) -> f64 {
        pct(self.retained, self.processed)
    }

    pub fn retained_over_found(&self) -> f64 {
        pct(self.retained, self.found)
    }

    /// Two-column summary table in markdown.
    pub fn to_markdown(&self) -> String {
        let mut rows = vec![
            ("Traces available (found)".to_string(), self.found.to_string()),
            ("Processed until cap".into(), self.processed.to_string()),
            ("Retained (training examples)".into(), self.retained.to_string()),
            ("Skipped (within processed)".into(), self.skipped.to_string()),
            ("Unprocessed due to cap".into(), self.unprocessed.to_string()),
            ("Retained / processed (%)".into(), format!("{:.2}", self.retained_over_processed())),
            ("Retained / available (%)".into(), format!("{:.2}", self.retained_over_found())),
            ("Min tokens".into(), self.tokens.min.to_string()),
            ("Max tokens".into(), self.tokens.max.to_string()),
            ("Mean tokens".into(), format!("{:.2}", self.tokens.mean)),
            ("Total tokens".into(), self.tokens.total.to_string()),
        ];
        for (reason, n) in &self.skip_reasons {
            rows.push((format!("Skipped: {reason}"), n.to_string()));
        }
        let mut out = String::from("| Statistic | Value |\n|---|---|\n");
        for (k, v) in rows {
            out.push_str(&format!("| {k} | {v} |\n"));
        }
        out
    }
}

fn pct(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        100.0 * a as f64 / b as f64
    }
}

/// Validation, extraction and truncation for one trace.
pub fn prepare_trace(trace: &Trace, cfg: &PrepConfig, tokenizer: &dyn Tokenizer) -> Result<ChatExample, String> {
    match validate_trace(trace, &cfg.validation) {
        Err(_) => return Err("malformed_trace".into()),
        Ok(Some(reason)) => return Err(reason.as_str().into()),
        Ok(None) => {}
    }
    let example = extract_messages(trace).map_err(|r| r.as_str().to_string())?;
    truncate_messages(&example, cfg.context_limit, tokenizer).map_err(|r| r.as_str().to_string())
}

/// Shuffles `paths` with the seed, then processes in order until the cap.
pub fn prepare_files(paths: &[PathBuf], cfg: &PrepConfig, tokenizer: &dyn Tokenizer) -> (Vec<ChatExample>, PrepStats) {
    let mut order = paths.to_vec();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut stats = PrepStats { found: order.len(), ..Default::default() };
    let mut kept = Vec::new();
    for path in &order {
        if kept.len() >= cfg.max_samples {
            break;
        }
        stats.processed += 1;
        let outcome = Trace::read(path)
            .map_err(|_| "malformed_trace".to_string())
            .and_then(|t| prepare_trace(&t, cfg, tokenizer));
        match outcome {
            Ok(ex) => kept.push(ex),
            Err(reason) => {
                stats.skipped += 1;
                *stats.skip_reasons.entry(reason).or_default() += 1;
            }
        }
    }
    stats.retained = kept.len();
    stats.unprocessed = stats.found - stats.processed;
    let counts: Vec<usize> = kept.iter().map(|e| count_messages(&e.messages, tokenizer)).collect();
    if !counts.is_empty() {
        let total: usize = counts.iter().sum();
        stats.tokens = TokenStats {
            min: *counts.iter().min().unwrap(),
            max: *counts.iter().max().unwrap(),
            mean: total as f64 / counts.len() as f64,
            total,
        };
    }
    (kept, stats)
}

pub fn to_jsonl(examples: &[ChatExample]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&serde_json::to_string(e).expect("examples serialize"));
        out.push('\n');
    }
    out
}

/// Prepares every `*.jsonl` trace in `dir` and writes the dataset to `out`.
pub fn prepare_dataset(
    dir: &Path,
    out: &Path,
    cfg: &PrepConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<PrepStats, TraceError> {
    let files = list_trace_files(dir)?;
    let (examples, stats) = prepare_files(&files, cfg, tokenizer);
    let shown = out.display().to_string();
    let mut f = std::fs::File::create(out).map_err(|source| TraceError::Io { path: shown.clone(), source })?;
    f.write_all(to_jsonl(&examples).as_bytes()).map_err(|source| TraceError::Io { path: shown, source })?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceBuilder;
    use crate::tracekit::tokenize::ApproxTokenizer;

    fn write_corpus(dir: &Path, good: usize, bad: usize) {
        for i in 0..good {
            let t = TraceBuilder::new(&format!("good_{i}"), "persistent")
                .step(&format!("inspect number {i}"), "print(1)", Some("1\n"), None)
                .step("finishing now", "finish()", Some(""), None)
                .build();
            t.write(&dir.join(format!("good_{i:03}.jsonl"))).unwrap();
        }
        for i in 0..bad {
            let t = TraceBuilder::new(&format!("bad_{i}"), "persistent")
                .score(0.0)
                .step("x", "finish()", Some(""), None)
                .build();
            t.write(&dir.join(format!("bad_{i:03}.jsonl"))).unwrap();
        }
    }

    #[test]
    fn deterministic_output() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), 20, 10);
        std::fs::write(dir.path().join("broken.jsonl"), "{not json\n").unwrap();
        let cfg = PrepConfig { max_samples: 8, ..Default::default() };
        let a = dir.path().join("a.out");
        let b = dir.path().join("b.out");
        let sa = prepare_dataset(dir.path(), &a, &cfg, &ApproxTokenizer).unwrap();
        let sb = prepare_dataset(dir.path(), &b, &cfg, &ApproxTokenizer).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(sa, sb);
        assert_eq!(sa.found, 31);
        assert_eq!(sa.retained, 8);
        assert_eq!(sa.processed, sa.retained + sa.skipped);
        assert_eq!(sa.unprocessed, sa.found - sa.processed);
        let text = std::fs::read_to_string(&a).unwrap();
        assert_eq!(text.lines().count(), 8);
        for line in text.lines() {
            let ex: ChatExample = serde_json::from_str(line).unwrap();
            assert_eq!(ex.messages.last().unwrap().role, crate::trace::Role::Assistant);
        }
    }

    #[test]
    fn cap_counts_unprocessed_separately() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), 50, 0);
        let files = list_trace_files(dir.path()).unwrap();
        let cfg = PrepConfig { max_samples: 10, ..Default::default() };
        let (ex, stats) = prepare_files(&files, &cfg, &ApproxTokenizer);
        assert_eq!(ex.len(), 10);
        assert_eq!(stats.processed, 10);
        assert_eq!(stats.skipped, 0);
        assert_eq!(stats.unprocessed, 40);
        assert!(stats.tokens.min <= stats.tokens.max);
        assert_eq!(stats.tokens.total, ex.iter().map(|e| count_messages(&e.messages, &ApproxTokenizer)).sum::<usize>());
    }

    #[test]
    fn all_low_scores() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), 0, 7);
        let files = list_trace_files(dir.path()).unwrap();
        let (ex, stats) = prepare_files(&files, &PrepConfig::default(), &ApproxTokenizer);
        assert!(ex.is_empty());
        assert_eq!(stats.skip_reasons.get("score_too_low"), Some(&7));
        assert_eq!(stats.skip_reasons.len(), 1);
        assert!(stats.to_markdown().contains("| Retained (training examples) | 0 |"));
    }

    #[test]
    fn different_seed_changes_order() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), 30, 0);
        let files = list_trace_files(dir.path()).unwrap();
        let a =
            prepare_files(&files, &PrepConfig { max_samples: 5, seed: 42, ..Default::default() }, &ApproxTokenizer).0;
        let b =
            prepare_files(&files, &PrepConfig { max_samples: 5, seed: 7, ..Default::default() }, &ApproxTokenizer).0;
        assert_ne!(a, b);
    }
}
