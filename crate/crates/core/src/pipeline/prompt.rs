//! Prompt layout: snippet blocks, API blocks, then the unfinished code.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::api::ApiRecord;
use crate::corpus::{count_tokens, suffix_within_budget, Language};
use crate::kb::KnowledgeBase;
use crate::retrieval::{ApiHit, HitSource, SnippetHit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    SimilarSnippet,
    ApiInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBlock {
    pub kind: BlockKind,
    pub file: String,
    /// Block body without the path comment.
    pub text: String,
    pub score: f64,
    /// For API blocks: the route that found it.
    pub source: Option<HitSource>,
    pub qualified_name: Option<String>,
}

impl PromptBlock {
    /// Path comment line followed by the body.
    pub fn render(&self, language: Language) -> String {
        format!("{} {}\n{}", language.line_comment(), self.file, self.text)
    }

    pub fn tokens(&self, language: Language) -> usize {
        count_tokens(&self.render(language))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPlan {
    pub language: Language,
    pub blocks: Vec<PromptBlock>,
    /// Tail of the prefix, ending at the cursor.
    pub infile_context: String,
    pub total_budget: usize,
    pub retrieved_budget: usize,
}

impl PromptPlan {
    pub fn render(&self) -> String {
        let mut parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| b.render(self.language))
            .collect();
        parts.push(self.infile_context.clone());
        parts.join("\n")
    }

    pub fn retrieved_tokens(&self) -> usize {
        self.blocks.iter().map(|b| b.tokens(self.language)).sum()
    }

    pub fn infile_tokens(&self) -> usize {
        count_tokens(&self.infile_context)
    }

    pub fn total_tokens(&self) -> usize {
        count_tokens(&self.render())
    }
}

/// The API as shown to the model: owning class header, then the signature.
pub struct ApiInfoBlock;

impl ApiInfoBlock {
    pub fn render(api: &ApiRecord) -> String {
        match (&api.enclosing_class_decl, api.language) {
            (None, _) => api.signature.clone(),
            (Some(class), Language::Python) => format!("{class}\n    {}", api.signature),
            (Some(class), Language::Java) => format!("{class} {{\n    {};\n}}", api.signature),
        }
    }
}

pub fn snippet_block(hit: &SnippetHit) -> PromptBlock {
    PromptBlock {
        kind: BlockKind::SimilarSnippet,
        file: hit.snippet.file.clone(),
        text: hit.snippet.text.clone(),
        score: hit.score,
        source: None,
        qualified_name: None,
    }
}

/// Merges the two API routes, keeping the higher-scoring hit for an entry
/// found by both. On equal scores the route listed first wins.
pub fn dedup_api_hits(first: &[ApiHit], second: &[ApiHit]) -> Vec<ApiHit> {
    let mut best: BTreeMap<&str, &ApiHit> = BTreeMap::new();
    for hit in first.iter().chain(second) {
        match best.get(hit.qualified_name.as_str()) {
            Some(kept) if kept.score >= hit.score => {}
            _ => {
                best.insert(&hit.qualified_name, hit);
            }
        }
    }
    first
        .iter()
        .chain(second)
        .filter(|h| std::ptr::eq(*h, best[h.qualified_name.as_str()]))
        .cloned()
        .collect()
}

pub struct PromptInputs<'a> {
    pub language: Language,
    pub prefix: &'a str,
    pub snippets: &'a [SnippetHit],
    pub uer_hits: &'a [ApiHit],
    pub fsr_hits: &'a [ApiHit],
    pub kb: Option<&'a KnowledgeBase>,
    pub total_budget: usize,
    pub retrieved_budget: usize,
    pub infile_budget: usize,
    pub uer_first: bool,
}

fn by_score_desc(a: &PromptBlock, b: &PromptBlock) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score)
}

/// Lays out the prompt within the budgets.
///
/// API blocks are admitted first in score order until one does not fit, so
/// the lowest-scoring ones are dropped; snippets then fill what is left of
/// the retrieved budget the same way. Blocks are never split. The in-file
/// tail fills its own budget.
pub fn assemble_prompt(input: &PromptInputs) -> PromptPlan {
    let language = input.language;
    let (first, second) = if input.uer_first {
        (input.uer_hits, input.fsr_hits)
    } else {
        (input.fsr_hits, input.uer_hits)
    };
    let mut api_blocks: Vec<PromptBlock> = match input.kb {
        Some(kb) => dedup_api_hits(first, second)
            .into_iter()
            .filter_map(|hit| {
                let entry = kb.entries.get(hit.entry)?;
                Some(PromptBlock {
                    kind: BlockKind::ApiInfo,
                    file: entry.api.file.clone(),
                    text: ApiInfoBlock::render(&entry.api),
                    score: hit.score,
                    source: Some(hit.source),
                    qualified_name: Some(hit.qualified_name),
                })
            })
            .collect(),
        None => Vec::new(),
    };

    let mut used = 0;
    let mut admitted_api = Vec::new();
    let mut ranked = api_blocks.clone();
    ranked.sort_by(by_score_desc);
    for block in ranked {
        let cost = block.tokens(language);
        if used + cost > input.retrieved_budget {
            break;
        }
        used += cost;
        admitted_api.push(block.qualified_name.clone());
    }
    api_blocks.retain(|b| admitted_api.contains(&b.qualified_name));
    let lead = if input.uer_first {
        HitSource::Uer
    } else {
        HitSource::Fsr
    };
    let route_rank = |b: &PromptBlock| usize::from(b.source != Some(lead));
    api_blocks.sort_by(|a, b| {
        route_rank(a)
            .cmp(&route_rank(b))
            .then_with(|| by_score_desc(a, b))
    });

    let mut snippet_blocks: Vec<PromptBlock> = input.snippets.iter().map(snippet_block).collect();
    snippet_blocks.sort_by(by_score_desc);
    let mut kept = Vec::new();
    for block in snippet_blocks {
        let cost = block.tokens(language);
        if used + cost > input.retrieved_budget {
            break;
        }
        used += cost;
        kept.push(block);
    }

    kept.extend(api_blocks);
    PromptPlan {
        language,
        blocks: kept,
        infile_context: suffix_within_budget(input.prefix, input.infile_budget).to_string(),
        total_budget: input.total_budget,
        retrieved_budget: input.retrieved_budget,
    }
}
