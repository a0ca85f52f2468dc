//! Code execution backends for agent action blocks.
//!
//! Two backends implement [`Sandbox`]: the in-process [`stub::StubSandbox`]
//! (a Python-subset interpreter sufficient for the scripted policies) and
//! [`rpc::RpcSandbox`], which drives an external worker process over the
//! newline-delimited JSON protocol in [`rpc`].

pub mod rpc;
pub mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default wall-clock limit for one block, in seconds.
pub const DEFAULT_TIMEOUT_S: f64 = 20.0;

/// Answers tool calls made by executing code.
pub trait ToolHost {
    /// Returns the payload (`None` for a null result) or the error message
    /// to raise inside the code as a tool exception.
    fn call_tool(&mut self, tool: &str, args: &[serde_json::Value]) -> Result<Option<String>, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecRequest {
    pub code: String,
    pub reset_before: bool,
    pub timeout_s: f64,
}

impl ExecRequest {
    pub fn new(code: impl Into<String>, reset_before: bool) -> Self {
        Self { code: code.into(), reset_before, timeout_s: DEFAULT_TIMEOUT_S }
    }
}

/// Outcome of one executed block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecResult {
    pub success: bool,
    pub output: String,
    pub result: Option<String>,
    pub error: Option<String>,
    /// User-defined binding names after execution, tool names excluded.
    pub globals_manifest: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SandboxError {
    #[error("sandbox unreachable: {0}")]
    Unreachable(String),
    #[error("sandbox protocol violation: {0}")]
    Protocol(String),
    #[error("failed to start sandbox worker: {0}")]
    Spawn(String),
}

pub trait Sandbox {
    fn exec(&mut self, req: &ExecRequest, host: &mut dyn ToolHost) -> Result<ExecResult, SandboxError>;

    /// Idempotent.
    fn shutdown(&mut self);
}

pub use rpc::RpcSandbox;
pub use stub::StubSandbox;
