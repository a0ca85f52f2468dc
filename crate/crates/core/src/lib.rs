//! Opaque Knapsack benchmark: instance generation, exact solving, the tool
//! environment, the episode harness with its runtime regimes, trace
//! preparation for fine-tuning and trace diagnostics.

pub mod agents;
pub mod diagnostics;
pub mod env;
pub mod harness;
pub mod instgen;
pub mod pyjson;
pub mod sandbox;
pub mod solver;
pub mod store;
pub mod trace;
pub mod tracekit;

pub use env::{EpisodeState, ScoreReport, ToolCall, ToolError};
pub use harness::{run_episode, Agent, AgentError, EpisodeConfig, RuntimeHeader, RuntimeRegime};
pub use instgen::{generate_seeded, Difficulty, DifficultyConfig, Instance, Item, ReferenceSidecar};
pub use sandbox::{ExecRequest, ExecResult, Sandbox, SandboxError};
pub use solver::{solve_bruteforce, solve_dp, ProblemView, ReferenceSolution};
pub use trace::{AgentStep, ChatMessage, Role, Summary, Trace, TraceError};
