//! Action-producing policies.

pub mod model;
pub mod scripted;

pub use model::{ModelAgent, ModelClientConfig};
pub use scripted::{AgentStyle, OracleAgent, ScriptedAgent};
