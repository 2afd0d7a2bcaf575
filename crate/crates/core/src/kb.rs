//! The per-repository API knowledge base and its JSON-Lines persistence.
//!
//! Line 1 of a KB file is the header, every following line one entry.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::api::{extract_all, internal_filter, ApiRecord};
use crate::corpus::{build_excludes, repo_fingerprint, SourceFile};
use crate::error::{Error, Result};
use crate::providers::{l2_norm, normalize, Providers};
use crate::usage::{synth_usage_examples, UsageExample};

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbHeader {
    pub dim: usize,
    pub embedder_id: String,
    pub summarizer_id: String,
    pub repo_fingerprint: String,
    /// Number of entry lines that follow.
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbEntry {
    pub qualified_name: String,
    pub api: ApiRecord,
    pub usage_examples: Vec<UsageExample>,
    pub ue_embeddings: Vec<Vec<f64>>,
    pub docstring: String,
    pub doc_embedding: Vec<f64>,
    /// A provider failed for this entry. Degraded entries stay reachable
    /// through usage examples but never rank by docstring.
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub header: KbHeader,
    pub entries: Vec<KbEntry>,
}

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|x| *x == 0.0)
}

fn is_unit(v: &[f64]) -> bool {
    (l2_norm(v) - 1.0).abs() <= NORM_TOLERANCE
}

struct Draft {
    api: ApiRecord,
    usage_examples: Vec<UsageExample>,
    ue_embeddings: Vec<Vec<f64>>,
    docstring: String,
    doc_embedding: Vec<f64>,
    failures: Vec<String>,
}

fn build_entry(api: ApiRecord, providers: &Providers) -> Draft {
    let usage_examples = synth_usage_examples(&api);
    let mut failures = Vec::new();

    let ue_texts: Vec<String> = usage_examples.iter().map(|u| u.text.clone()).collect();
    let ue_embeddings = match providers.embedder.embed(&ue_texts) {
        Ok(vectors) if vectors.len() == ue_texts.len() => {
            vectors.into_iter().map(normalize).collect()
        }
        Ok(vectors) => {
            failures.push(format!(
                "embedder returned {} vectors for {} usage examples",
                vectors.len(),
                ue_texts.len()
            ));
            Vec::new()
        }
        Err(e) => {
            failures.push(e.to_string());
            Vec::new()
        }
    };

    let (docstring, doc_embedding) = match providers.summarizer.summarize(&api.source, api.language)
    {
        Ok(doc) if !doc.trim().is_empty() => {
            match providers.embedder.embed(std::slice::from_ref(&doc)) {
                Ok(mut v) if v.len() == 1 => {
                    let vector = normalize(v.remove(0));
                    if is_zero(&vector) {
                        failures.push("docstring embedding is zero".into());
                    }
                    (doc, vector)
                }
                Ok(_) => {
                    failures.push("embedder returned wrong vector count for docstring".into());
                    (doc, Vec::new())
                }
                Err(e) => {
                    failures.push(e.to_string());
                    (doc, Vec::new())
                }
            }
        }
        Ok(_) => {
            failures.push("summarizer returned an empty docstring".into());
            (String::new(), Vec::new())
        }
        Err(e) => {
            failures.push(e.to_string());
            (String::new(), Vec::new())
        }
    };

    Draft {
        api,
        usage_examples,
        ue_embeddings,
        docstring,
        doc_embedding,
        failures,
    }
}

/// Builds the knowledge base for the scanned repository.
///
/// One entry per internal API. A provider failure degrades only the affected
/// entry: its missing vectors are stored as zeros and the entry is flagged.
pub fn build_kb(
    files: &[SourceFile],
    excludes: &[String],
    providers: &Providers,
) -> Result<KnowledgeBase> {
    let globs = build_excludes(excludes)?;
    let paths: BTreeSet<String> = files.iter().map(|f| f.path.clone()).collect();
    let records = internal_filter(extract_all(files), &paths, &globs);

    let drafts: Vec<Draft> = records
        .into_par_iter()
        .map(|api| build_entry(api, providers))
        .collect();

    let dim = providers
        .embedder
        .dim()
        .or_else(|| {
            drafts
                .iter()
                .flat_map(|d| {
                    d.ue_embeddings
                        .iter()
                        .chain(std::iter::once(&d.doc_embedding))
                })
                .find(|v| !v.is_empty())
                .map(Vec::len)
        })
        .unwrap_or(0);

    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut entries = Vec::with_capacity(drafts.len());
    for mut draft in drafts {
        let check = |v: &Vec<f64>, what: &str| -> Result<()> {
            if !v.is_empty() && v.len() != dim {
                return Err(Error::provider(
                    providers.embedder.id(),
                    format!("{what} has dimension {} but the KB uses {dim}", v.len()),
                ));
            }
            Ok(())
        };
        for v in &draft.ue_embeddings {
            check(v, "usage example embedding")?;
        }
        check(&draft.doc_embedding, "docstring embedding")?;

        if draft.ue_embeddings.len() != draft.usage_examples.len() {
            draft.ue_embeddings = vec![vec![0.0; dim]; draft.usage_examples.len()];
        }
        if draft.doc_embedding.is_empty() {
            draft.doc_embedding = vec![0.0; dim];
        }

        let base = draft.api.qualified_name();
        let count = seen.entry(base.clone()).or_insert(0);
        *count += 1;
        let qualified_name = if *count == 1 {
            base
        } else {
            format!("{base}~{count}")
        };

        let degraded = !draft.failures.is_empty();
        if degraded {
            tracing::warn!(api = %qualified_name, "degraded KB entry: {}", draft.failures.join("; "));
        }
        entries.push(KbEntry {
            qualified_name,
            api: draft.api,
            usage_examples: draft.usage_examples,
            ue_embeddings: draft.ue_embeddings,
            docstring: draft.docstring,
            doc_embedding: draft.doc_embedding,
            degraded,
            degraded_reason: degraded.then(|| draft.failures.join("; ")),
        });
    }

    Ok(KnowledgeBase {
        header: KbHeader {
            dim,
            embedder_id: providers.embedder.id(),
            summarizer_id: providers.summarizer.id(),
            repo_fingerprint: repo_fingerprint(files),
            entries: entries.len(),
        },
        entries,
    })
}

impl KnowledgeBase {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks the structural invariants; returns a message for the first
    /// violation.
    pub fn validate_entry(&self, entry: &KbEntry) -> std::result::Result<(), String> {
        let dim = self.header.dim;
        if entry.ue_embeddings.len() != entry.usage_examples.len() {
            return Err(format!(
                "{} usage examples but {} embeddings",
                entry.usage_examples.len(),
                entry.ue_embeddings.len()
            ));
        }
        for v in entry
            .ue_embeddings
            .iter()
            .chain(std::iter::once(&entry.doc_embedding))
        {
            if v.len() != dim {
                return Err(format!(
                    "vector of dimension {} in a KB of dimension {dim}",
                    v.len()
                ));
            }
            if !is_unit(v) && !(entry.degraded && is_zero(v)) {
                return Err(format!("vector norm {} is not 1", l2_norm(v)));
            }
        }
        Ok(())
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let header = KbHeader {
            entries: self.entries.len(),
            ..self.header.clone()
        };
        let io = |e| Error::io("<kb>", e);
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n").map_err(io)?;
        for entry in &self.entries {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
    }

    pub fn parse_jsonl(text: &str, path: &Path) -> Result<KnowledgeBase> {
        let fail = |line: usize, message: String| Error::KbFormat {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, first) = lines
            .next()
            .ok_or_else(|| fail(1, "empty file, missing header".into()))?;
        let header: KbHeader =
            serde_json::from_str(first).map_err(|e| fail(1, format!("invalid header: {e}")))?;
        let mut kb = KnowledgeBase {
            header,
            entries: Vec::new(),
        };
        let mut names = BTreeSet::new();
        let mut last_valid = 1;
        for (number, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let entry: KbEntry = serde_json::from_str(line).map_err(|e| {
                fail(
                    number,
                    format!("corrupt entry (last valid line {last_valid}): {e}"),
                )
            })?;
            kb.validate_entry(&entry).map_err(|m| fail(number, m))?;
            if !names.insert(entry.qualified_name.clone()) {
                return Err(fail(
                    number,
                    format!("duplicate entry {}", entry.qualified_name),
                ));
            }
            kb.entries.push(entry);
            last_valid = number;
        }
        if kb.entries.len() != kb.header.entries {
            return Err(fail(
                last_valid,
                format!(
                    "truncated: header announces {} entries, found {} (last valid line {last_valid})",
                    kb.header.entries,
                    kb.entries.len()
                ),
            ));
        }
        Ok(kb)
    }
}

/// Writes the KB atomically (temporary file, then rename).
pub fn save_kb(kb: &KnowledgeBase, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    kb.write_to(&mut buf)?;
    crate::jsonl::write_atomic(path, &buf)
}

pub fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    KnowledgeBase::parse_jsonl(&text, path)
}
