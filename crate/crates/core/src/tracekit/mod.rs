//! Trace validation and conversion into chat-format training examples.

pub mod messages;
pub mod prepare;
pub mod similarity;
pub mod tokenize;
pub mod truncate;
pub mod validate;

pub use messages::{extract_messages, ChatExample, ExtractReject};
pub use prepare::{prepare_dataset, prepare_files, PrepConfig, PrepStats};
pub use similarity::similarity_ratio;
pub use tokenize::{ApproxTokenizer, Tokenizer};
pub use truncate::{truncate_messages, TruncateReject, OMITTED_PLACEHOLDER};
pub use validate::{validate_trace, RejectReason, ValidationConfig};
