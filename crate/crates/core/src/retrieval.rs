//! Similar-snippet retrieval over sliding windows and the two knowledge-base
//! routes: usage-example retrieval (UER) and functional-semantic retrieval
//! (FSR).

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{count_tokens, token_texts, CodeWindow, Language};
use crate::error::Result;
use crate::kb::KnowledgeBase;
use crate::providers::{cosine, rule_summary, Embedder, Summarizer};
use crate::usage::FormId;

/// |A ∩ B| / |A ∪ B|; 0 when both sets are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    }
}

/// A score with a tie-breaking key. Greater means better: higher score, then
/// smaller key.
#[derive(Debug, Clone, PartialEq)]
struct Scored<K> {
    score: f64,
    key: K,
}

impl<K: Ord> Eq for Scored<K> {}

impl<K: Ord> PartialOrd for Scored<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K: Ord> Ord for Scored<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.key.cmp(&self.key))
    }
}

/// The `k` best items, best first, using a bounded heap.
fn top_k<K: Ord>(items: impl IntoIterator<Item = Scored<K>>, k: usize) -> Vec<Scored<K>> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Reverse<Scored<K>>> = BinaryHeap::with_capacity(k + 1);
    for item in items {
        heap.push(Reverse(item));
        if heap.len() > k {
            heap.pop();
        }
    }
    heap.into_sorted_vec()
        .into_iter()
        .map(|Reverse(s)| s)
        .collect()
}

// ------------------------------------------------------------- snippets --

/// Windows of a corpus with a link from each window to the one after it.
#[derive(Debug, Clone, Default)]
pub struct WindowIndex {
    windows: Vec<CodeWindow>,
    next: Vec<Option<usize>>,
}

impl WindowIndex {
    pub fn new(mut windows: Vec<CodeWindow>) -> WindowIndex {
        windows.sort_by(|a, b| (&a.file, a.start_line).cmp(&(&b.file, b.start_line)));
        let next = (0..windows.len())
            .map(|i| {
                windows
                    .get(i + 1)
                    .filter(|w| w.file == windows[i].file)
                    .map(|_| i + 1)
            })
            .collect();
        WindowIndex { windows, next }
    }

    pub fn windows(&self) -> &[CodeWindow] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// The window after `i` in the same file, or `i` itself at the end.
    pub fn subsequent(&self, i: usize) -> usize {
        self.next[i].unwrap_or(i)
    }
}

/// Windows that must not be retrieved: those of `file` containing `line`,
/// or every window of `file` when `line` is `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub file: String,
    pub line: Option<usize>,
}

impl Exclusion {
    fn hits(&self, w: &CodeWindow) -> bool {
        w.file == self.file && self.line.is_none_or(|l| w.contains_line(l))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetHit {
    /// Jaccard index between the query and `matched`.
    pub score: f64,
    /// The window after the matched one; this is what goes in the prompt.
    pub snippet: CodeWindow,
    pub matched: CodeWindow,
}

/// Ranks every window by Jaccard similarity to `query_text` and returns the
/// windows that follow the best matches.
///
/// Hits are ordered by score, then (file, start line) of the matched window.
/// A snippet already returned for a better match is not repeated. With a
/// budget, accumulation stops at the first snippet whose tokens would
/// overflow it.
#[allow(clippy::type_complexity)]
pub fn similar_code(
    query_text: &str,
    language: Language,
    index: &WindowIndex,
    budget_tokens: Option<usize>,
    exclude: Option<&Exclusion>,
) -> Vec<SnippetHit> {
    let query: BTreeSet<String> = token_texts(query_text, language).into_iter().collect();
    let windows = index.windows();
    // (score keyed by matched file and start, matched index, snippet index)
    let mut ranked: Vec<(Scored<(&str, usize)>, usize, usize)> = Vec::new();
    for (i, matched) in windows.iter().enumerate() {
        let s = index.subsequent(i);
        if exclude.is_some_and(|x| x.hits(matched) || x.hits(&windows[s])) {
            continue;
        }
        let score = jaccard(&query, &matched.token_set);
        ranked.push((
            Scored {
                score,
                key: (matched.file.as_str(), matched.start_line),
            },
            i,
            s,
        ));
    }
    ranked.sort_by(|a, b| b.0.cmp(&a.0));

    let mut used = 0;
    let mut seen = HashSet::new();
    let mut hits = Vec::new();
    for (scored, i, s) in ranked {
        if !seen.insert(s) {
            continue;
        }
        if let Some(budget) = budget_tokens {
            let cost = count_tokens(&windows[s].text);
            if used + cost > budget {
                break;
            }
            used += cost;
        }
        hits.push(SnippetHit {
            score: scored.score,
            snippet: windows[s].clone(),
            matched: windows[i].clone(),
        });
    }
    hits
}

// ---------------------------------------------------------------- API --

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitSource {
    Uer,
    Fsr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiHit {
    pub qualified_name: String,
    /// Position of the entry in the KB.
    pub entry: usize,
    pub score: f64,
    pub source: HitSource,
    /// The usage example that scored best (UER only).
    pub best_ue_form: Option<FormId>,
}

fn embed_query(embedder: &dyn Embedder, text: &str) -> Result<Vec<f64>> {
    let mut v = embedder.embed(&[text.to_string()])?;
    Ok(v.pop().unwrap_or_default())
}

/// Ranks KB entries by the best cosine between `query_line` and any of their
/// usage examples.
pub fn uer(
    query_line: &str,
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Vec<ApiHit>> {
    if query_line.trim().is_empty() || kb.is_empty() {
        return Ok(Vec::new());
    }
    let query = embed_query(embedder, query_line)?;
    if query.iter().all(|x| *x == 0.0) {
        return Ok(Vec::new());
    }
    let scored = kb.entries.iter().enumerate().filter_map(|(i, entry)| {
        let (best, score) = entry
            .ue_embeddings
            .iter()
            .enumerate()
            .map(|(j, v)| (j, cosine(&query, v)))
            .fold(None, |acc: Option<(usize, f64)>, (j, s)| match acc {
                Some((_, best)) if best >= s => acc,
                _ => Some((j, s)),
            })?;
        Some(Scored {
            score,
            key: (entry.qualified_name.as_str(), i, best),
        })
    });
    Ok(top_k(scored, k)
        .into_iter()
        .map(|s| {
            let (name, i, best) = s.key;
            ApiHit {
                qualified_name: name.to_string(),
                entry: i,
                score: s.score,
                source: HitSource::Uer,
                best_ue_form: kb.entries[i].usage_examples.get(best).map(|u| u.form_id),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsrResult {
    pub hits: Vec<ApiHit>,
    /// Summary of the draft used as the query.
    pub query_docstring: String,
    /// The summarizer failed and the rule-based summary was used.
    pub fell_back: bool,
}

/// Summarizes `draft_block` and ranks non-degraded KB entries by cosine
/// between that summary and their docstrings.
pub fn fsr(
    draft_block: &str,
    language: Language,
    kb: &KnowledgeBase,
    summarizer: &dyn Summarizer,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<FsrResult> {
    let mut result = FsrResult {
        hits: Vec::new(),
        query_docstring: String::new(),
        fell_back: false,
    };
    if draft_block.trim().is_empty() || kb.is_empty() {
        return Ok(result);
    }
    result.query_docstring = match summarizer.summarize(draft_block, language) {
        Ok(doc) if !doc.trim().is_empty() => doc,
        Ok(_) | Err(_) => {
            result.fell_back = true;
            rule_summary(draft_block, language)
        }
    };
    let query = embed_query(embedder, &result.query_docstring)?;
    if query.iter().all(|x| *x == 0.0) {
        return Ok(result);
    }
    let scored = kb
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.degraded)
        .map(|(i, entry)| Scored {
            score: cosine(&query, &entry.doc_embedding),
            key: (entry.qualified_name.as_str(), i),
        });
    result.hits = top_k(scored, k)
        .into_iter()
        .map(|s| ApiHit {
            qualified_name: s.key.0.to_string(),
            entry: s.key.1,
            score: s.score,
            source: HitSource::Fsr,
            best_ue_form: None,
        })
        .collect();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn jaccard_values() {
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])), 0.5);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 0.0);
    }

    #[test]
    fn top_k_keeps_best_with_tie_order() {
        let items = vec![
            Scored {
                score: 0.5,
                key: "b",
            },
            Scored {
                score: 0.9,
                key: "z",
            },
            Scored {
                score: 0.5,
                key: "a",
            },
            Scored {
                score: 0.1,
                key: "c",
            },
        ];
        let keys: Vec<&str> = top_k(items, 3).into_iter().map(|s| s.key).collect();
        assert_eq!(keys, vec!["z", "a", "b"]);
    }

    fn window(file: &str, start: usize, text: &str) -> CodeWindow {
        let end = start + text.lines().count().max(1) - 1;
        CodeWindow::new(file, start, end, text.to_string(), Language::Python)
    }

    #[test]
    fn verbatim_copy_ranks_first_and_returns_next_window() {
        let index = WindowIndex::new(vec![
            window("a.py", 1, "x = load(path)\ny = x + 1"),
            window("a.py", 11, "print(y)"),
            window("b.py", 1, "z = 3"),
        ]);
        let hits = similar_code(
            "x = load(path)\ny = x + 1",
            Language::Python,
            &index,
            None,
            None,
        );
        assert_eq!(hits[0].score, 1.0);
        assert_eq!(hits[0].matched.start_line, 1);
        assert_eq!(hits[0].snippet.start_line, 11);
    }

    #[test]
    fn budget_smaller_than_first_snippet() {
        let index = WindowIndex::new(vec![window("a.py", 1, "a = b + c")]);
        assert!(similar_code("a = b", Language::Python, &index, Some(2), None).is_empty());
        assert_eq!(
            similar_code("a = b", Language::Python, &index, Some(5), None).len(),
            1
        );
    }

    #[test]
    fn exclusion_drops_cursor_windows() {
        let index = WindowIndex::new(vec![
            window("a.py", 1, "q = 1"),
            window("a.py", 11, "q = 2"),
            window("b.py", 1, "q = 3"),
        ]);
        let x = Exclusion {
            file: "a.py".into(),
            line: Some(11),
        };
        let hits = similar_code("q", Language::Python, &index, None, Some(&x));
        // a.py:1 is dropped too: its subsequent window covers the cursor line.
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].matched.file, "b.py");
        let whole = Exclusion {
            file: "b.py".into(),
            line: None,
        };
        let hits = similar_code("q", Language::Python, &index, None, Some(&whole));
        assert!(hits.iter().all(|h| h.matched.file == "a.py"));
    }

    #[test]
    fn empty_corpus() {
        assert!(
            similar_code("x", Language::Python, &WindowIndex::default(), None, None).is_empty()
        );
    }
}
