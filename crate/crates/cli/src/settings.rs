//! Run configuration from a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use repocomplete_core::bench::IdMatchMode;
use repocomplete_core::pipeline::Mode;
use repocomplete_core::{Language, RunConfig};

/// Flags that override fields of the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML file with run settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub repo: Option<PathBuf>,
    #[arg(long, global = true)]
    pub language: Option<Language>,
    /// Glob of repository paths to skip; repeatable.
    #[arg(long = "exclude", global = true)]
    pub excludes: Vec<String>,
    #[arg(long, global = true)]
    pub window_len: Option<usize>,
    #[arg(long, global = true)]
    pub slide: Option<usize>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub total_budget: Option<usize>,
    #[arg(long, global = true)]
    pub max_new_tokens: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    #[arg(long, global = true)]
    pub uer_first: Option<bool>,
    #[arg(long, global = true)]
    pub aim_include_snippets: Option<bool>,
    #[arg(long, global = true, value_parser = parse_id_match)]
    pub id_match: Option<IdMatchMode>,
    /// `hash` or `http`.
    #[arg(long, global = true)]
    pub embedder: Option<String>,
    /// `rule`, `few-shot` or `http`.
    #[arg(long, global = true)]
    pub summarizer: Option<String>,
    /// `mock` or `http`.
    #[arg(long, global = true)]
    pub llm: Option<String>,
    /// Model sidecar base URL (REPOCOMPLETE_ENDPOINT takes precedence).
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    #[arg(long, global = true)]
    pub mock_oracle: Option<PathBuf>,
    #[arg(long, global = true)]
    pub hash_dim: Option<usize>,
    #[arg(long, global = true)]
    pub timeout_ms: Option<u64>,
    #[arg(long, global = true)]
    pub retries: Option<u32>,
}

fn parse_id_match(s: &str) -> std::result::Result<IdMatchMode, String> {
    match s {
        "set" => Ok(IdMatchMode::Set),
        "multiset" => Ok(IdMatchMode::Multiset),
        "sequence" => Ok(IdMatchMode::Sequence),
        other => Err(format!("expected set, multiset or sequence, got `{other}`")),
    }
}

pub fn load_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

impl Overrides {
    /// File settings (or defaults) with every given flag applied.
    pub fn resolve(&self, mode: Option<Mode>) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            repo => cfg.repo_root,
            language => cfg.language,
            window_len => cfg.window_len,
            slide => cfg.slide,
            k => cfg.k,
            total_budget => cfg.total_budget,
            max_new_tokens => cfg.max_new_tokens,
            seed => cfg.seed,
            workers => cfg.workers,
            rounds => cfg.rounds,
            uer_first => cfg.uer_first,
            aim_include_snippets => cfg.aim_include_snippets,
            id_match => cfg.id_match,
            embedder => cfg.providers.embedder,
            summarizer => cfg.providers.summarizer,
            llm => cfg.providers.llm,
            hash_dim => cfg.providers.hash_dim,
            timeout_ms => cfg.providers.timeout_ms,
            retries => cfg.providers.retries,
        }
        if let Some(v) = &self.endpoint {
            cfg.providers.endpoint = Some(v.clone());
        }
        if let Some(v) = &self.mock_oracle {
            cfg.providers.mock_oracle = Some(v.clone());
        }
        if !self.excludes.is_empty() {
            cfg.excludes = self.excludes.clone();
        }
        if let Some(m) = mode {
            cfg.mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "k = 2\nwindow_len = 30\n[providers]\nhash_dim = 64\n",
        )
        .unwrap();
        let o = Overrides {
            config: Some(path),
            k: Some(3),
            ..Overrides::default()
        };
        let cfg = o.resolve(Some(Mode::Base)).unwrap();
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.window_len, 30);
        assert_eq!(cfg.providers.hash_dim, 64);
        assert_eq!(cfg.mode, Mode::Base);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "windw_len = 3\n").unwrap();
        assert!(load_file(&path).is_err());
    }
}
