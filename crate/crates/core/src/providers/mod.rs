//! Provider ports for the three model roles, plus offline implementations.
//!
//! The pipeline only sees the traits below. Offline implementations are
//! deterministic; [`HttpSidecar`] speaks the JSON protocol of the model
//! sidecar.

mod hash;
mod http;
mod mock;
mod summarize;

use std::sync::Arc;

use crate::config::ProviderConfig;
use crate::corpus::Language;
use crate::error::{Error, Result};

pub use hash::{fnv1a, HashEmbedder};
pub use http::{HttpSidecar, PROTOCOL_VERSION};
pub use mock::{MockLlm, MockOracle, MockTask};
pub use summarize::{rule_summary, FewShotSummarizer, RuleSummarizer, SummaryExemplar};

/// Encodes texts as vectors. Implementations return one unit-norm (or all
/// zero) vector per input, all of the same dimension.
pub trait Embedder: Send + Sync {
    fn id(&self) -> String;
    /// Dimension if known before the first call.
    fn dim(&self) -> Option<usize>;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Produces a natural-language summary of a piece of code.
pub trait Summarizer: Send + Sync {
    fn id(&self) -> String;
    fn summarize(&self, code: &str, language: Language) -> Result<String>;
}

/// Black-box code model.
pub trait CompletionModel: Send + Sync {
    fn id(&self) -> String;
    /// Continuation of `prompt`, at most `max_new_tokens` budget tokens long.
    fn complete(&self, prompt: &str, max_new_tokens: usize) -> Result<String>;
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit length; zero vectors stay zero.
pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = l2_norm(&v);
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// The three ports a run needs.
#[derive(Clone)]
pub struct Providers {
    pub embedder: Arc<dyn Embedder>,
    pub summarizer: Arc<dyn Summarizer>,
    pub llm: Arc<dyn CompletionModel>,
}

impl Providers {
    /// Fully offline set: hash embedder, rule summarizer and the given model.
    pub fn offline(language: Language, dim: usize, llm: Arc<dyn CompletionModel>) -> Providers {
        Providers {
            embedder: Arc::new(HashEmbedder::new(dim, language)),
            summarizer: Arc::new(RuleSummarizer),
            llm,
        }
    }

    /// Builds providers from configuration. `endpoint` (or the
    /// `REPOCOMPLETE_ENDPOINT` environment variable) is required for any
    /// `http` role.
    pub fn from_config(cfg: &ProviderConfig, language: Language) -> Result<Providers> {
        let endpoint = std::env::var("REPOCOMPLETE_ENDPOINT")
            .ok()
            .or_else(|| cfg.endpoint.clone());
        let sidecar = || -> Result<Arc<HttpSidecar>> {
            let url = endpoint.clone().ok_or_else(|| {
                Error::Config("an http provider needs `providers.endpoint`".into())
            })?;
            Ok(Arc::new(HttpSidecar::new(
                &url,
                std::time::Duration::from_millis(cfg.timeout_ms),
                cfg.retries,
                cfg.summarize_char_budget,
            )?))
        };

        let llm: Arc<dyn CompletionModel> = match cfg.llm.as_str() {
            "mock" => {
                let oracle = match &cfg.mock_oracle {
                    Some(path) => MockOracle::load(path)?,
                    None => MockOracle::default(),
                };
                Arc::new(MockLlm::new(oracle))
            }
            "http" => sidecar()?,
            other => return Err(Error::Config(format!("unknown llm provider `{other}`"))),
        };
        let embedder: Arc<dyn Embedder> = match cfg.embedder.as_str() {
            "hash" => Arc::new(HashEmbedder::new(cfg.hash_dim, language)),
            "http" => sidecar()?,
            other => return Err(Error::Config(format!("unknown embedder `{other}`"))),
        };
        let summarizer: Arc<dyn Summarizer> = match cfg.summarizer.as_str() {
            "rule" => Arc::new(RuleSummarizer),
            "http" => sidecar()?,
            "few-shot" => Arc::new(FewShotSummarizer::new(llm.clone())),
            other => return Err(Error::Config(format!("unknown summarizer `{other}`"))),
        };
        Ok(Providers {
            embedder,
            summarizer,
            llm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_edge_cases() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-12);
        assert!((cosine(&[1.0, 0.0], &[-1.0, 0.0]) + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
    }

    #[test]
    fn normalize_unit_or_zero() {
        let v = normalize(vec![3.0, 4.0]);
        assert!((l2_norm(&v) - 1.0).abs() < 1e-12);
        assert_eq!(normalize(vec![0.0; 3]), vec![0.0; 3]);
    }

    #[test]
    fn config_selects_offline_defaults() {
        let p = Providers::from_config(&ProviderConfig::default(), Language::Python).unwrap();
        assert_eq!(p.embedder.id(), "hash-256");
        assert_eq!(p.summarizer.id(), "rule");
        assert_eq!(p.llm.id(), "mock");
    }

    #[test]
    fn unknown_provider_rejected() {
        let cfg = ProviderConfig {
            embedder: "quantum".into(),
            ..ProviderConfig::default()
        };
        assert!(Providers::from_config(&cfg, Language::Python).is_err());
    }
}
