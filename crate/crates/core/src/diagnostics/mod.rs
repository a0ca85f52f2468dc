//! Trace diagnostics: behavioral metrics, failure labels and statistics.

pub mod lex;
pub mod metrics;
pub mod report;
pub mod stats;

pub use lex::{lex_action, LexReport};
pub use metrics::{
    behavioral_metrics, classify, scan_unresolved_refs, BehavioralMetrics, ConstraintKind, Failure, FailureLabel,
    Termination, UnresolvedScan,
};
pub use report::{aggregate_report, load_records, Dim, ReportConfig, ReportError, StatReport, TraceRecord};
pub use stats::{bootstrap_ci, wilcoxon_signed_rank, WilcoxonResult};
