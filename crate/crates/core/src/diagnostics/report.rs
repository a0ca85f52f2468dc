//! Grouped performance, failure and behavior tables with pairwise tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use super::metrics::{
    behavioral_metrics, classify, scan_unresolved_refs, BehavioralMetrics, Failure, FailureLabel, Termination,
};
use super::stats::{bootstrap_ci, mean, wilcoxon_signed_rank, WilcoxonResult, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use crate::trace::{list_trace_files, Trace, TraceError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no traces to analyze")]
    Empty,
    #[error("trace {0} has no meta or summary")]
    Incomplete(String),
    #[error("unknown group dimension '{0}' (expected train, runtime, difficulty or agent)")]
    Dimension(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dim {
    Train,
    Runtime,
    Difficulty,
    Agent,
}

impl Dim {
    pub fn as_str(self) -> &'static str {
        match self {
            Dim::Train => "train",
            Dim::Runtime => "runtime",
            Dim::Difficulty => "difficulty",
            Dim::Agent => "agent",
        }
    }

    /// Parses a comma separated list such as `train,runtime,difficulty`.
    pub fn parse_list(s: &str) -> Result<Vec<Dim>, ReportError> {
        s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(Dim::from_str).collect()
    }
}

impl FromStr for Dim {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" | "train_semantics" => Ok(Dim::Train),
            "runtime" | "regime" => Ok(Dim::Runtime),
            "difficulty" => Ok(Dim::Difficulty),
            "agent" => Ok(Dim::Agent),
            other => Err(ReportError::Dimension(other.to_string())),
        }
    }
}

pub const DEFAULT_GROUP_BY: [Dim; 3] = [Dim::Train, Dim::Runtime, Dim::Difficulty];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub group_by: Vec<Dim>,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { group_by: DEFAULT_GROUP_BY.to_vec(), resamples: DEFAULT_RESAMPLES, level: DEFAULT_LEVEL, seed: 0 }
    }
}

/// Everything the tables need from one trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub instance_id: String,
    pub train: String,
    pub runtime: String,
    pub difficulty: String,
    pub agent: String,
    pub score: f64,
    pub solved: bool,
    pub steps: u32,
    pub total_tokens: u64,
    pub wall_time_s: f64,
    pub label: FailureLabel,
    pub unresolved_refs: u64,
    pub metrics: BehavioralMetrics,
}

impl TraceRecord {
    pub fn from_trace(trace: &Trace) -> Result<Self, ReportError> {
        let (Some(meta), Some(sum)) = (trace.meta(), trace.summary()) else {
            let id = trace.meta().map(|m| m.instance_id.clone()).unwrap_or_else(|| "?".into());
            return Err(ReportError::Incomplete(id));
        };
        Ok(Self {
            instance_id: meta.instance_id.clone(),
            train: meta.train_semantics.clone(),
            runtime: meta.regime.clone(),
            difficulty: meta.difficulty.clone(),
            agent: meta.agent.clone(),
            score: sum.score,
            solved: sum.solved,
            steps: sum.steps,
            total_tokens: sum.total_tokens,
            wall_time_s: sum.wall_time_s,
            label: classify(trace, sum.score),
            unresolved_refs: scan_unresolved_refs(trace).count,
            metrics: behavioral_metrics(trace),
        })
    }

    fn dim(&self, d: Dim) -> &str {
        match d {
            Dim::Train => &self.train,
            Dim::Runtime => &self.runtime,
            Dim::Difficulty => &self.difficulty,
            Dim::Agent => &self.agent,
        }
    }
}

/// Group key as `dim=value` pairs in the configured order.
pub type GroupKey = Vec<(Dim, String)>;

pub fn key_label(key: &GroupKey) -> String {
    if key.is_empty() {
        return "all".into();
    }
    key.iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>().join("/")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceRow {
    pub group: String,
    pub n: usize,
    /// Mean score in percent.
    pub score: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub solved: usize,
    pub steps: f64,
    pub tokens: f64,
    pub time_s: f64,
    /// Percent score per 1,000 mean tokens; absent when no tokens were counted.
    pub score_per_1k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRow {
    pub group: String,
    pub n: usize,
    pub terminations: BTreeMap<&'static str, usize>,
    /// Labels over normal terminations.
    pub failures: BTreeMap<&'static str, usize>,
    pub unresolved_events: u64,
    /// Percent of traces with at least one unresolved-reference error.
    pub unresolved_affected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BehaviorRow {
    pub group: String,
    pub n: usize,
    pub context_lifespan: f64,
    pub interpreter_lifespan: f64,
    pub imports_per_step: f64,
    pub state_utilization: f64,
    pub redefinitions_per_step: f64,
    pub total_turns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseRow {
    pub a: String,
    pub b: String,
    /// Instances present in both groups.
    pub pairs: usize,
    /// Mean percent score of `a` minus `b` over the paired instances.
    pub delta: f64,
    pub test: Option<WilcoxonResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatReport {
    pub group_by: Vec<Dim>,
    pub performance: Vec<PerformanceRow>,
    pub failures: Vec<FailureRow>,
    pub behavior: Vec<BehaviorRow>,
    pub pairwise: Vec<PairwiseRow>,
}

pub fn group_records<'a>(records: &'a [TraceRecord], dims: &[Dim]) -> BTreeMap<Vec<String>, Vec<&'a TraceRecord>> {
    let mut groups: BTreeMap<Vec<String>, Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(dims.iter().map(|d| r.dim(*d).to_string()).collect()).or_default().push(r);
    }
    groups
}

fn performance_row(group: String, rs: &[&TraceRecord], cfg: &ReportConfig) -> PerformanceRow {
    let scores: Vec<f64> = rs.iter().map(|r| r.score).collect();
    let (lo, hi) = bootstrap_ci(&scores, cfg.level, cfg.resamples, cfg.seed);
    let score = mean(&scores) * 100.0;
    let tokens = mean(&rs.iter().map(|r| r.total_tokens as f64).collect::<Vec<_>>());
    PerformanceRow {
        group,
        n: rs.len(),
        score,
        ci_lo: lo * 100.0,
        ci_hi: hi * 100.0,
        solved: rs.iter().filter(|r| r.solved).count(),
        steps: mean(&rs.iter().map(|r| f64::from(r.steps)).collect::<Vec<_>>()),
        tokens,
        time_s: mean(&rs.iter().map(|r| r.wall_time_s).collect::<Vec<_>>()),
        score_per_1k: (tokens > 0.0).then(|| score / (tokens / 1000.0)),
    }
}

fn failure_row(group: String, rs: &[&TraceRecord]) -> FailureRow {
    let mut terminations: BTreeMap<&'static str, usize> = Termination::ALL.iter().map(|t| (t.as_str(), 0)).collect();
    let mut failures: BTreeMap<&'static str, usize> = Failure::ALL.iter().map(|f| (f.as_str(), 0)).collect();
    for r in rs {
        *terminations.get_mut(r.label.termination.as_str()).expect("all terminations listed") += 1;
        if let Some(f) = r.label.failure {
            *failures.get_mut(f.as_str()).expect("all failures listed") += 1;
        }
    }
    let affected = rs.iter().filter(|r| r.unresolved_refs > 0).count();
    FailureRow {
        group,
        n: rs.len(),
        terminations,
        failures,
        unresolved_events: rs.iter().map(|r| r.unresolved_refs).sum(),
        unresolved_affected: 100.0 * affected as f64 / rs.len().max(1) as f64,
    }
}

fn behavior_row(group: String, rs: &[&TraceRecord]) -> BehaviorRow {
    let m = |f: fn(&BehavioralMetrics) -> f64| mean(&rs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
    BehaviorRow {
        group,
        n: rs.len(),
        context_lifespan: m(|b| b.context_lifespan),
        interpreter_lifespan: m(|b| b.interpreter_lifespan),
        imports_per_step: m(|b| b.imports_per_step),
        state_utilization: m(|b| b.state_utilization as f64),
        redefinitions_per_step: m(|b| b.redefinitions_per_step),
        total_turns: m(|b| b.total_turns as f64),
    }
}

/// Mean score per instance, so repeated episodes collapse to one pair member.
fn per_instance<'a>(rs: &[&'a TraceRecord]) -> BTreeMap<&'a str, f64> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in rs {
        let e = acc.entry(r.instance_id.as_str()).or_insert((0.0, 0));
        e.0 += r.score;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn pairwise_row(a: String, ra: &[&TraceRecord], b: String, rb: &[&TraceRecord]) -> PairwiseRow {
    let (ma, mb) = (per_instance(ra), per_instance(rb));
    let pairs: Vec<(f64, f64)> = ma.iter().filter_map(|(id, x)| mb.get(id).map(|y| (*x, *y))).collect();
    let delta =
        if pairs.is_empty() { 0.0 } else { 100.0 * pairs.iter().map(|(x, y)| x - y).sum::<f64>() / pairs.len() as f64 };
    PairwiseRow { a, b, pairs: pairs.len(), delta, test: (!pairs.is_empty()).then(|| wilcoxon_signed_rank(&pairs)) }
}

pub fn aggregate_report(records: &[TraceRecord], cfg: &ReportConfig) -> Result<StatReport, ReportError> {
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let groups = group_records(records, &cfg.group_by);
    let labelled: Vec<(String, &Vec<&TraceRecord>)> = groups
        .iter()
        .map(|(k, rs)| (key_label(&cfg.group_by.iter().copied().zip(k.iter().cloned()).collect()), rs))
        .collect();
    let mut report = StatReport {
        group_by: cfg.group_by.clone(),
        performance: Vec::new(),
        failures: Vec::new(),
        behavior: Vec::new(),
        pairwise: Vec::new(),
    };
    for (label, rs) in &labelled {
        report.performance.push(performance_row(label.clone(), rs, cfg));
        report.failures.push(failure_row(label.clone(), rs));
        report.behavior.push(behavior_row(label.clone(), rs));
    }
    for (i, (la, ra)) in labelled.iter().enumerate() {
        for (lb, rb) in &labelled[i + 1..] {
            report.pairwise.push(pairwise_row(la.clone(), ra, lb.clone(), rb));
        }
    }
    Ok(report)
}

/// Reads every `*.jsonl` trace under `dir`.
pub fn load_records(dir: &Path) -> Result<Vec<TraceRecord>, ReportError> {
    let paths = list_trace_files(dir)?;
    paths.iter().map(|p| TraceRecord::from_trace(&Trace::read(p)?)).collect()
}

fn f2(x: f64) -> String {
    format!("{x:.2}")
}

fn opt2(x: Option<f64>) -> String {
    x.map(f2).unwrap_or_else(|| "-".into())
}

fn p_text(p: f64) -> String {
    if p < 1e-3 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

fn md_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", header.iter().map(|_| "---|").collect::<String>());
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl StatReport {
    fn performance_table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = strings(&["Group", "n", "Score", "CI", "Solved", "Steps", "Tokens", "Time (s)", "Score/1k"]);
        let rows = self
            .performance
            .iter()
            .map(|r| {
                vec![
                    r.group.clone(),
                    r.n.to_string(),
                    f2(r.score),
                    format!("[{}, {}]", f2(r.ci_lo), f2(r.ci_hi)),
                    format!("{}/{}", r.solved, r.n),
                    f2(r.steps),
                    format!("{:.0}", r.tokens),
                    f2(r.time_s),
                    opt2(r.score_per_1k),
                ]
            })
            .collect();
        (header, rows)
    }

    fn failure_table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = strings(&["Group", "n"]);
        header.extend(Termination::ALL.iter().map(|t| t.as_str().to_string()));
        header.extend(Failure::ALL.iter().map(|f| f.as_str().to_string()));
        header.extend(strings(&["unresolved_events", "unresolved_affected_pct"]));
        let rows = self
            .failures
            .iter()
            .map(|r| {
                let mut row = vec![r.group.clone(), r.n.to_string()];
                row.extend(Termination::ALL.iter().map(|t| r.terminations[t.as_str()].to_string()));
                row.extend(Failure::ALL.iter().map(|f| r.failures[f.as_str()].to_string()));
                row.push(r.unresolved_events.to_string());
                row.push(f2(r.unresolved_affected));
                row
            })
            .collect();
        (header, rows)
    }

    fn behavior_table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = strings(&[
            "Group",
            "n",
            "Context Lifespan",
            "Interpreter Lifespan",
            "Imports/Step",
            "State Utilization",
            "Redefinitions/Step",
            "Total Turns",
        ]);
        let rows = self
            .behavior
            .iter()
            .map(|r| {
                vec![
                    r.group.clone(),
                    r.n.to_string(),
                    f2(r.context_lifespan),
                    f2(r.interpreter_lifespan),
                    f2(r.imports_per_step),
                    f2(r.state_utilization),
                    f2(r.redefinitions_per_step),
                    f2(r.total_turns),
                ]
            })
            .collect();
        (header, rows)
    }

    fn pairwise_table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = strings(&["A", "B", "Pairs", "Delta", "W", "r", "p", "Note"]);
        let rows = self
            .pairwise
            .iter()
            .map(|r| {
                let (w, rb, p, note) = match &r.test {
                    None => ("-".into(), "-".into(), "-".into(), "no shared instances".to_string()),
                    Some(t) if t.degenerate => (f2(t.statistic), f2(t.r), p_text(t.p), "degenerate".into()),
                    Some(t) => (
                        f2(t.statistic),
                        format!("{:.3}", t.r),
                        p_text(t.p),
                        if t.exact { "exact" } else { "normal" }.into(),
                    ),
                };
                vec![r.a.clone(), r.b.clone(), r.pairs.to_string(), f2(r.delta), w, rb, p, note]
            })
            .collect();
        (header, rows)
    }

    pub fn to_markdown(&self) -> String {
        let dims: Vec<&str> = self.group_by.iter().map(|d| d.as_str()).collect();
        let mut out =
            format!("# Report\n\nGrouped by: {}\n\n", if dims.is_empty() { "none".into() } else { dims.join(", ") });
        for (title, (h, rows)) in [
            ("Performance", self.performance_table()),
            ("Failure breakdown", self.failure_table()),
            ("Behavioral metrics", self.behavior_table()),
            ("Pairwise Wilcoxon signed-rank", self.pairwise_table()),
        ] {
            let _ = writeln!(out, "## {title}\n");
            if rows.is_empty() {
                out.push_str("(none)\n\n");
            } else {
                md_table(&mut out, &h, &rows);
            }
        }
        out
    }

    /// Writes `report.md` and one CSV per table into `dir`; returns the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
        let io = |p: &Path| {
            let path = p.display().to_string();
            move |source| ReportError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let md = dir.join("report.md");
        fs::write(&md, self.to_markdown()).map_err(io(&md))?;
        let mut written = vec![md];
        for (name, (h, rows)) in [
            ("performance.csv", self.performance_csv()),
            ("failures.csv", self.failure_table()),
            ("behavior.csv", self.behavior_csv()),
            ("pairwise.csv", self.pairwise_csv()),
        ] {
            let path = dir.join(name);
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(&h)?;
            for r in rows {
                w.write_record(&r)?;
            }
            w.flush().map_err(io(&path))?;
            written.push(path);
        }
        Ok(written)
    }

    fn performance_csv(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header =
            strings(&["group", "n", "score", "ci_lo", "ci_hi", "solved", "steps", "tokens", "time_s", "score_per_1k"]);
        let rows = self
            .performance
            .iter()
            .map(|r| {
                vec![
                    r.group.clone(),
                    r.n.to_string(),
                    r.score.to_string(),
                    r.ci_lo.to_string(),
                    r.ci_hi.to_string(),
                    r.solved.to_string(),
                    r.steps.to_string(),
                    r.tokens.to_string(),
                    r.time_s.to_string(),
                    r.score_per_1k.map(|x| x.to_string()).unwrap_or_default(),
                ]
            })
            .collect();
        (header, rows)
    }

    fn behavior_csv(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = strings(&[
            "group",
            "n",
            "context_lifespan",
            "interpreter_lifespan",
            "imports_per_step",
            "state_utilization",
            "redefinitions_per_step",
            "total_turns",
        ]);
        let rows = self
            .behavior
            .iter()
            .map(|r| {
                vec![
                    r.group.clone(),
                    r.n.to_string(),
                    r.context_lifespan.to_string(),
                    r.interpreter_lifespan.to_string(),
                    r.imports_per_step.to_string(),
                    r.state_utilization.to_string(),
                    r.redefinitions_per_step.to_string(),
                    r.total_turns.to_string(),
                ]
            })
            .collect();
        (header, rows)
    }

    fn pairwise_csv(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header =
            strings(&["a", "b", "pairs", "delta", "statistic", "w_plus", "w_minus", "r", "p", "exact", "degenerate"]);
        let rows = self
            .pairwise
            .iter()
            .map(|r| {
                let mut row = vec![r.a.clone(), r.b.clone(), r.pairs.to_string(), r.delta.to_string()];
                match &r.test {
                    Some(t) => row.extend([
                        t.statistic.to_string(),
                        t.w_plus.to_string(),
                        t.w_minus.to_string(),
                        t.r.to_string(),
                        t.p.to_string(),
                        t.exact.to_string(),
                        t.degenerate.to_string(),
                    ]),
                    None => row.extend(std::iter::repeat_n(String::new(), 7)),
                }
                row
            })
            .collect();
        (header, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceBuilder;

    fn record(id: &str, train: &str, runtime: &str, score: f64, tokens: u64) -> TraceRecord {
        let t = TraceBuilder::new(id, runtime).score(score).step("a", "finish()", Some(""), None).build();
        let mut r = TraceRecord::from_trace(&t).unwrap();
        r.train = train.into();
        r.total_tokens = tokens;
        r.solved = score >= 1.0;
        r
    }

    #[test]
    fn score_per_1k_uses_percent_scale() {
        let rs: Vec<TraceRecord> = (0..4).map(|i| record(&format!("i{i}"), "p", "p", 1.0, 20_000)).collect();
        let rep = aggregate_report(&rs, &ReportConfig::default()).unwrap();
        let row = &rep.performance[0];
        assert_eq!(row.n, 4);
        assert_eq!(row.solved, 4);
        assert!((row.score_per_1k.unwrap() - 5.0).abs() < 1e-12);
        assert_eq!((row.ci_lo, row.ci_hi), (100.0, 100.0));
    }

    #[test]
    fn single_trace_group_is_degenerate_but_emitted() {
        let rs = vec![record("a", "p", "p", 0.5, 100)];
        let rep = aggregate_report(&rs, &ReportConfig::default()).unwrap();
        assert_eq!((rep.performance[0].ci_lo, rep.performance[0].ci_hi), (50.0, 50.0));
        assert!(rep.pairwise.is_empty());
        let md = rep.to_markdown();
        assert!(md.contains("## Performance") && md.contains("## Behavioral metrics"));
    }

    #[test]
    fn identical_groups_give_degenerate_pairwise_cell() {
        let mut rs = Vec::new();
        for i in 0..5 {
            let s = f64::from(i) / 5.0;
            rs.push(record(&format!("i{i}"), "persistent", "persistent", s, 10));
            rs.push(record(&format!("i{i}"), "persistent", "reset", s, 10));
        }
        let rep = aggregate_report(&rs, &ReportConfig::default()).unwrap();
        assert_eq!(rep.pairwise.len(), 1);
        let cell = &rep.pairwise[0];
        assert_eq!(cell.pairs, 5);
        assert!(cell.test.unwrap().degenerate);
        assert_eq!(cell.delta, 0.0);
    }

    #[test]
    fn pairing_is_by_instance_id() {
        let rs = vec![
            record("x", "t", "persistent", 1.0, 10),
            record("y", "t", "persistent", 1.0, 10),
            record("x", "t", "reset", 0.0, 10),
            record("z", "t", "reset", 0.0, 10),
        ];
        let rep = aggregate_report(&rs, &ReportConfig::default()).unwrap();
        assert_eq!(rep.pairwise[0].pairs, 1);
        assert!((rep.pairwise[0].delta - 100.0).abs() < 1e-12);
    }

    #[test]
    fn failure_counts_cover_every_label() {
        let mut rs = vec![record("a", "t", "p", 1.0, 10), record("b", "t", "p", 0.4, 10)];
        rs[1].unresolved_refs = 2;
        let rep = aggregate_report(&rs, &ReportConfig { group_by: vec![], ..Default::default() }).unwrap();
        let f = &rep.failures[0];
        assert_eq!(f.group, "all");
        assert_eq!(f.terminations["normal"], 2);
        assert_eq!(f.failures["optimal"], 1);
        assert_eq!(f.failures["silent_suboptimality"], 1);
        assert_eq!(f.unresolved_events, 2);
        assert_eq!(f.unresolved_affected, 50.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(aggregate_report(&[], &ReportConfig::default()), Err(ReportError::Empty)));
    }

    #[test]
    fn dims_parse() {
        assert_eq!(Dim::parse_list("train,runtime,difficulty").unwrap(), DEFAULT_GROUP_BY.to_vec());
        assert!(Dim::parse_list("train,colour").is_err());
    }

    #[test]
    fn writes_markdown_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let rs = vec![record("a", "t", "persistent", 1.0, 10), record("a", "t", "reset", 0.0, 10)];
        let rep = aggregate_report(&rs, &ReportConfig::default()).unwrap();
        let files = rep.write(dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        let perf = fs::read_to_string(dir.path().join("performance.csv")).unwrap();
        assert!(perf.starts_with("group,n,score,ci_lo"));
        assert_eq!(perf.lines().count(), 3);
    }
}
