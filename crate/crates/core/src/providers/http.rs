//! Client for the model sidecar.
//!
//! Wire protocol (JSON over HTTP POST, versioned by `v`):
//!
//! ```text
//! /embed      {"v":1,"texts":[..]}                      -> {"dim":D,"vectors":[[..],..]}
//! /summarize  {"v":1,"code":"..","language":"python"}   -> {"docstring":".."}
//! /complete   {"v":1,"prompt":"..","max_new_tokens":N}  -> {"text":".."}
//! ```
//!
//! Errors come back with a non-2xx status and `{"error":".."}`.

use std::sync::OnceLock;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{prefix_within_budget, Language};
use crate::error::{Error, Result};

use super::{normalize, CompletionModel, Embedder, Summarizer};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    v: u32,
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct SummarizeRequest<'a> {
    v: u32,
    code: &'a str,
    language: Language,
}

#[derive(Debug, Deserialize)]
struct SummarizeResponse {
    docstring: String,
}

#[derive(Debug, Serialize)]
struct CompleteRequest<'a> {
    v: u32,
    prompt: &'a str,
    max_new_tokens: usize,
}

#[derive(Debug, Deserialize)]
struct CompleteResponse {
    text: String,
}

#[derive(Debug, Deserialize)]
struct ErrorResponse {
    error: String,
}

pub struct HttpSidecar {
    base: String,
    client: Client,
    retries: u32,
    summarize_char_budget: usize,
    dim: OnceLock<usize>,
}

impl HttpSidecar {
    pub fn new(
        base_url: &str,
        timeout: Duration,
        retries: u32,
        summarize_char_budget: usize,
    ) -> Result<HttpSidecar> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::provider("http", e.to_string()))?;
        Ok(HttpSidecar {
            base: base_url.trim_end_matches('/').to_string(),
            client,
            retries,
            summarize_char_budget,
            dim: OnceLock::new(),
        })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        route: &str,
        body: &Req,
    ) -> Result<Resp> {
        let url = format!("{}{}", self.base, route);
        let mut last_error = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
            }
            let response = match self.client.post(&url).json(body).send() {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = response.status();
            let text = response
                .text()
                .map_err(|e| Error::provider(&url, e.to_string()))?;
            if status.is_success() {
                return serde_json::from_str(&text)
                    .map_err(|e| Error::provider(&url, format!("malformed response: {e}")));
            }
            let detail = serde_json::from_str::<ErrorResponse>(&text)
                .map(|e| e.error)
                .unwrap_or(text);
            last_error = format!("status {status}: {detail}");
            if status.is_client_error() {
                break;
            }
        }
        Err(Error::provider(url, last_error))
    }

    fn truncate_code<'a>(&self, code: &'a str) -> &'a str {
        match code.char_indices().nth(self.summarize_char_budget) {
            Some((i, _)) => &code[..i],
            None => code,
        }
    }
}

impl Embedder for HttpSidecar {
    fn id(&self) -> String {
        format!("http:{}", self.base)
    }

    fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let resp: EmbedResponse = self.post(
            "/embed",
            &EmbedRequest {
                v: PROTOCOL_VERSION,
                texts,
            },
        )?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::provider(
                Embedder::id(self),
                format!(
                    "expected {} vectors, got {}",
                    texts.len(),
                    resp.vectors.len()
                ),
            ));
        }
        let dim = *self.dim.get_or_init(|| resp.dim);
        if resp.dim != dim || resp.vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::provider(
                Embedder::id(self),
                format!("vector dimension differs from {dim}"),
            ));
        }
        Ok(resp.vectors.into_iter().map(normalize).collect())
    }
}

impl Summarizer for HttpSidecar {
    fn id(&self) -> String {
        format!("http:{}", self.base)
    }

    fn summarize(&self, code: &str, language: Language) -> Result<String> {
        let resp: SummarizeResponse = self.post(
            "/summarize",
            &SummarizeRequest {
                v: PROTOCOL_VERSION,
                code: self.truncate_code(code),
                language,
            },
        )?;
        Ok(resp.docstring)
    }
}

impl CompletionModel for HttpSidecar {
    fn id(&self) -> String {
        format!("http:{}", self.base)
    }

    fn complete(&self, prompt: &str, max_new_tokens: usize) -> Result<String> {
        let resp: CompleteResponse = self.post(
            "/complete",
            &CompleteRequest {
                v: PROTOCOL_VERSION,
                prompt,
                max_new_tokens,
            },
        )?;
        Ok(prefix_within_budget(&resp.text, max_new_tokens).to_string())
    }
}
