use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bench::IdMatchMode;
use crate::corpus::Language;
use crate::error::{Error, Result};
use crate::pipeline::Mode;

/// Which implementation backs each provider port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    /// `hash` or `http`.
    pub embedder: String,
    /// `rule`, `http`, or `few-shot` (few-shot prompts the completion model).
    pub summarizer: String,
    /// `mock` or `http`.
    pub llm: String,
    /// Base URL of the model sidecar, e.g. `http://127.0.0.1:8080`.
    pub endpoint: Option<String>,
    /// Oracle table for the mock completion model.
    pub mock_oracle: Option<PathBuf>,
    pub hash_dim: usize,
    pub timeout_ms: u64,
    pub retries: u32,
    /// Characters of code sent to a remote summarizer; longer code is cut.
    pub summarize_char_budget: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            embedder: "hash".into(),
            summarizer: "rule".into(),
            llm: "mock".into(),
            endpoint: None,
            mock_oracle: None,
            hash_dim: 256,
            timeout_ms: 30_000,
            retries: 2,
            summarize_char_budget: 4_000,
        }
    }
}

/// Every knob of a run. Defaults follow the published experimental setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub repo_root: PathBuf,
    pub language: Language,
    pub excludes: Vec<String>,
    pub window_len: usize,
    pub slide: usize,
    /// Top-k per API retrieval route (so up to `2k` API blocks).
    pub k: usize,
    /// Maximum prompt context in budget tokens.
    pub total_budget: usize,
    pub max_new_tokens: usize,
    pub mode: Mode,
    pub seed: u64,
    pub workers: usize,
    /// Draft/retrieve rounds before the final generation.
    pub rounds: usize,
    /// Place UER blocks before FSR blocks in the API section.
    pub uer_first: bool,
    /// Also retrieve similar snippets when bolting API retrieval onto an
    /// external draft.
    pub aim_include_snippets: bool,
    pub id_match: IdMatchMode,
    pub providers: ProviderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            repo_root: PathBuf::from("."),
            language: Language::Python,
            excludes: Vec::new(),
            window_len: 20,
            slide: 10,
            k: 4,
            total_budget: 4096,
            max_new_tokens: 128,
            mode: Mode::Full,
            seed: 0,
            workers: 1,
            rounds: 1,
            uer_first: true,
            aim_include_snippets: false,
            id_match: IdMatchMode::Multiset,
            providers: ProviderConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window_len", self.window_len),
            ("slide", self.slide),
            ("k", self.k),
            ("total_budget", self.total_budget),
            ("max_new_tokens", self.max_new_tokens),
            ("workers", self.workers),
            ("rounds", self.rounds),
            ("providers.hash_dim", self.providers.hash_dim),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.max_new_tokens >= self.total_budget - self.retrieved_budget() {
            return Err(Error::Config(
                "max_new_tokens must be smaller than half of total_budget".into(),
            ));
        }
        Ok(())
    }

    /// Budget for retrieved context: half of the prompt length.
    pub fn retrieved_budget(&self) -> usize {
        self.total_budget / 2
    }

    /// Budget for the unfinished code when retrieved context is present.
    pub fn infile_budget(&self) -> usize {
        self.total_budget - self.retrieved_budget() - self.max_new_tokens
    }

    /// Budget for the unfinished code when nothing is retrieved.
    pub fn infile_only_budget(&self) -> usize {
        self.total_budget - self.max_new_tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_experimental_setup() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.window_len, 20);
        assert_eq!(cfg.slide, 10);
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.total_budget, 4096);
        assert_eq!(cfg.max_new_tokens, 128);
        assert_eq!(cfg.retrieved_budget(), 2048);
        assert_eq!(cfg.infile_budget(), 1920);
        assert_eq!(cfg.rounds, 1);
        cfg.validate().unwrap();
    }

    #[test]
    fn zero_knobs_rejected() {
        let cfg = RunConfig {
            k: 0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn partial_document_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"k": 2, "mode": "plus_uer"}"#).unwrap();
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.mode, Mode::PlusUer);
        assert_eq!(cfg.window_len, 20);
    }
}
