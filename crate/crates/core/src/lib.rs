//! Repository-aware line completion around a black-box code model.
//!
//! The crate builds a per-repository API knowledge base (signatures, synthesized
//! usage examples, functional summaries and their embeddings), runs a
//! draft → retrieve → regenerate completion pipeline, and ships the benchmark
//! harness used to evaluate it (import-masked task mining plus code/identifier
//! match metrics).

pub mod api;
pub mod bench;
pub mod config;
pub mod corpus;
pub mod error;
pub mod jsonl;
pub mod kb;
pub mod pipeline;
pub mod providers;
pub mod retrieval;
pub mod suite;
pub mod usage;

pub use config::RunConfig;
pub use corpus::{CodeWindow, Language, SourceFile, Token};
pub use error::{Error, Result};
