//! Draft, retrieve, regenerate.
//!
//! A first model call drafts the completion from similar snippets and the
//! in-file prefix. The draft then drives retrieval of snippets and of API
//! knowledge, and a second call produces the final line.

mod prompt;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{count_tokens, Language};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::providers::Providers;
use crate::retrieval::{fsr, similar_code, uer, ApiHit, Exclusion, SnippetHit, WindowIndex};

pub use prompt::{
    assemble_prompt, dedup_api_hits, snippet_block, ApiInfoBlock, BlockKind, PromptBlock,
    PromptInputs, PromptPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Prefix only.
    Infile,
    /// The first-pass draft is the answer.
    DraftOnly,
    /// Regenerate with snippets retrieved by the draft.
    Base,
    PlusUer,
    PlusFsr,
    Full,
    /// API knowledge retrieved with a caller-supplied draft.
    AimOverExternalDraft,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Infile,
        Mode::DraftOnly,
        Mode::Base,
        Mode::PlusUer,
        Mode::PlusFsr,
        Mode::Full,
        Mode::AimOverExternalDraft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Infile => "infile",
            Mode::DraftOnly => "draft_only",
            Mode::Base => "base",
            Mode::PlusUer => "plus_uer",
            Mode::PlusFsr => "plus_fsr",
            Mode::Full => "full",
            Mode::AimOverExternalDraft => "aim_over_external_draft",
        }
    }

    /// Which retrieval routes the regeneration step uses.
    pub fn routes(self, aim_include_snippets: bool) -> Routes {
        let (snippets, uer, fsr) = match self {
            Mode::Infile | Mode::DraftOnly => (false, false, false),
            Mode::Base => (true, false, false),
            Mode::PlusUer => (true, true, false),
            Mode::PlusFsr => (true, false, true),
            Mode::Full => (true, true, true),
            Mode::AimOverExternalDraft => (aim_include_snippets, true, true),
        };
        Routes { snippets, uer, fsr }
    }

    pub fn needs_kb(self) -> bool {
        let r = self.routes(false);
        r.uer || r.fsr
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Routes {
    pub snippets: bool,
    pub uer: bool,
    pub fsr: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedLine {
    /// 1-based line in the original file.
    pub line: usize,
    pub text: String,
}

/// One line-completion problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionTask {
    pub task_id: String,
    pub repo_root: PathBuf,
    /// Path relative to the repository root.
    pub file: String,
    pub language: Language,
    /// File text up to the cursor, with the masked imports removed.
    pub prefix: String,
    /// Cursor to end of line.
    pub ground_truth: String,
    pub masked_import_lines: Vec<MaskedLine>,
    /// 1-based cursor line in the original file.
    pub cursor_line: usize,
}

/// Everything retrieved for one draft.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub snippet_query: String,
    pub snippet_hits: Vec<SnippetRef>,
    pub uer_query: String,
    pub uer_hits: Vec<ApiHit>,
    pub fsr_query: String,
    pub fsr_docstring: String,
    pub fsr_fell_back: bool,
    pub fsr_hits: Vec<ApiHit>,
    #[serde(skip)]
    pub snippets: Vec<SnippetHit>,
}

/// Snippet hit as recorded in traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetRef {
    pub file: String,
    pub start_line: usize,
    pub end_line: usize,
    pub matched_start_line: usize,
    pub score: f64,
}

impl From<&SnippetHit> for SnippetRef {
    fn from(h: &SnippetHit) -> SnippetRef {
        SnippetRef {
            file: h.snippet.file.clone(),
            start_line: h.snippet.start_line,
            end_line: h.snippet.end_line,
            matched_start_line: h.matched.start_line,
            score: h.score,
        }
    }
}

/// One model call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmCall {
    pub stage: String,
    pub prompt: String,
    pub prompt_tokens: usize,
    pub retrieved_tokens: usize,
    pub blocks: Vec<BlockRef>,
    pub output: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRef {
    pub kind: BlockKind,
    pub file: String,
    pub score: f64,
    pub qualified_name: Option<String>,
}

impl From<&PromptBlock> for BlockRef {
    fn from(b: &PromptBlock) -> BlockRef {
        BlockRef {
            kind: b.kind,
            file: b.file.clone(),
            score: b.score,
            qualified_name: b.qualified_name.clone(),
        }
    }
}

/// Audit record of one task run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTrace {
    pub task_id: String,
    pub mode: Mode,
    pub config: RunConfig,
    pub llm_id: String,
    pub external_draft: Option<String>,
    pub calls: Vec<LlmCall>,
    pub retrievals: Vec<Retrieved>,
    pub prediction: String,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub prediction: String,
    pub trace: TaskTrace,
}

/// First line of a model output.
pub fn first_line(text: &str) -> &str {
    let line = text.split('\n').next().unwrap_or("");
    line.strip_suffix('\r').unwrap_or(line)
}

/// The last `n` lines of `text`, the partial last line included.
pub fn last_lines(text: &str, n: usize) -> &str {
    if n == 0 {
        return "";
    }
    let mut seen = 0;
    for (i, b) in text.bytes().enumerate().rev() {
        if b == b'\n' {
            seen += 1;
            if seen == n {
                return &text[i + 1..];
            }
        }
    }
    text
}

/// Line that the UER route embeds: the cursor line of the prefix joined with
/// the draft up to the first newline that ends generated text. With no
/// generated text, the last non-blank prefix line.
pub fn uer_query_line(prefix: &str, draft: &str) -> String {
    let cursor_line = last_lines(prefix, 1);
    let mut lines = draft.split('\n');
    let head = lines.next().unwrap_or("");
    if !head.trim().is_empty() {
        return format!("{cursor_line}{head}");
    }
    if let Some(line) = lines.find(|l| !l.trim().is_empty()) {
        return line.to_string();
    }
    prefix
        .split('\n')
        .rev()
        .find(|l| !l.trim().is_empty())
        .unwrap_or("")
        .to_string()
}

/// Read-only state shared by every task of a run.
pub struct Pipeline<'a> {
    pub cfg: &'a RunConfig,
    pub kb: Option<&'a KnowledgeBase>,
    pub index: &'a WindowIndex,
    pub providers: &'a Providers,
}

impl<'a> Pipeline<'a> {
    fn exclusion(task: &CompletionTask) -> Exclusion {
        Exclusion {
            file: task.file.clone(),
            line: None,
        }
    }

    fn call(&self, stage: &str, plan: &PromptPlan) -> LlmCall {
        let prompt = plan.render();
        let (output, error) = match self
            .providers
            .llm
            .complete(&prompt, self.cfg.max_new_tokens)
        {
            Ok(text) => (text, None),
            Err(e) => (String::new(), Some(e.to_string())),
        };
        if let Some(e) = &error {
            tracing::warn!(stage, error = %e, "model call failed");
        }
        LlmCall {
            stage: stage.to_string(),
            prompt_tokens: count_tokens(&prompt),
            retrieved_tokens: plan.retrieved_tokens(),
            blocks: plan.blocks.iter().map(BlockRef::from).collect(),
            prompt,
            output,
            error,
        }
    }

    fn inputs<'b>(&self, task: &'b CompletionTask, infile_budget: usize) -> PromptInputs<'b>
    where
        'a: 'b,
    {
        PromptInputs {
            language: task.language,
            prefix: &task.prefix,
            snippets: &[],
            uer_hits: &[],
            fsr_hits: &[],
            kb: self.kb,
            total_budget: self.cfg.total_budget,
            retrieved_budget: self.cfg.retrieved_budget(),
            infile_budget,
            uer_first: self.cfg.uer_first,
        }
    }

    /// Prompt made of the prefix tail alone.
    pub fn infile_plan(&self, task: &CompletionTask) -> PromptPlan {
        assemble_prompt(&self.inputs(task, self.cfg.infile_only_budget()))
    }

    /// First pass: snippets similar to the last lines of the prefix, plus
    /// the in-file tail. The raw model output is the draft.
    pub fn generate_draft(&self, task: &CompletionTask) -> (String, LlmCall, Retrieved) {
        let query = last_lines(&task.prefix, self.cfg.window_len);
        let hits = similar_code(
            query,
            task.language,
            self.index,
            Some(self.cfg.retrieved_budget()),
            Some(&Self::exclusion(task)),
        );
        let retrieved = Retrieved {
            snippet_query: query.to_string(),
            snippet_hits: hits.iter().map(SnippetRef::from).collect(),
            snippets: hits,
            ..Retrieved::default()
        };
        let mut input = self.inputs(task, self.cfg.infile_budget());
        input.snippets = &retrieved.snippets;
        let call = self.call("draft", &assemble_prompt(&input));
        (call.output.clone(), call, retrieved)
    }

    /// Retrieval driven by a draft over the routes in `routes`.
    pub fn retrieve_knowledge(
        &self,
        task: &CompletionTask,
        draft: &str,
        routes: Routes,
        errors: &mut Vec<String>,
    ) -> Retrieved {
        let mut out = Retrieved::default();
        if routes.snippets {
            let joined = format!("{}{}", task.prefix, draft);
            out.snippet_query =
                last_lines(joined.trim_end_matches('\n'), self.cfg.window_len).to_string();
            out.snippets = similar_code(
                &out.snippet_query,
                task.language,
                self.index,
                Some(self.cfg.retrieved_budget()),
                Some(&Self::exclusion(task)),
            );
            out.snippet_hits = out.snippets.iter().map(SnippetRef::from).collect();
        }
        let Some(kb) = self.kb else {
            return out;
        };
        if routes.uer {
            out.uer_query = uer_query_line(&task.prefix, draft);
            match uer(
                &out.uer_query,
                kb,
                self.providers.embedder.as_ref(),
                self.cfg.k,
            ) {
                Ok(hits) => out.uer_hits = hits,
                Err(e) => errors.push(format!("uer: {e}")),
            }
        }
        if routes.fsr && !draft.trim().is_empty() {
            out.fsr_query = draft.to_string();
            match fsr(
                draft,
                task.language,
                kb,
                self.providers.summarizer.as_ref(),
                self.providers.embedder.as_ref(),
                self.cfg.k,
            ) {
                Ok(r) => {
                    out.fsr_docstring = r.query_docstring;
                    out.fsr_fell_back = r.fell_back;
                    out.fsr_hits = r.hits;
                }
                Err(e) => errors.push(format!("fsr: {e}")),
            }
        }
        out
    }

    /// Prompt for a regeneration step from what was retrieved.
    pub fn final_plan(&self, task: &CompletionTask, retrieved: &Retrieved) -> PromptPlan {
        let mut input = self.inputs(task, self.cfg.infile_budget());
        input.snippets = &retrieved.snippets;
        input.uer_hits = &retrieved.uer_hits;
        input.fsr_hits = &retrieved.fsr_hits;
        assemble_prompt(&input)
    }

    /// Runs one task in `mode`. `external_draft` is required for
    /// [`Mode::AimOverExternalDraft`] and ignored otherwise.
    pub fn complete_task(
        &self,
        task: &CompletionTask,
        mode: Mode,
        external_draft: Option<&str>,
    ) -> Result<TaskOutcome> {
        if mode.needs_kb() && self.kb.is_none() {
            return Err(Error::Config(format!("mode {mode} needs a knowledge base")));
        }
        let mut trace = TaskTrace {
            task_id: task.task_id.clone(),
            mode,
            config: self.cfg.clone(),
            llm_id: self.providers.llm.id(),
            external_draft: None,
            calls: Vec::new(),
            retrievals: Vec::new(),
            prediction: String::new(),
            errors: Vec::new(),
        };

        let mut draft = match mode {
            Mode::Infile => {
                let call = self.call("final", &self.infile_plan(task));
                trace.calls.push(call);
                None
            }
            Mode::AimOverExternalDraft => {
                let Some(d) = external_draft else {
                    return Err(Error::Config(format!(
                        "mode {mode} needs an external draft"
                    )));
                };
                trace.external_draft = Some(d.to_string());
                Some(d.to_string())
            }
            _ => {
                let (draft, call, retrieved) = self.generate_draft(task);
                trace.calls.push(call);
                trace.retrievals.push(retrieved);
                Some(draft)
            }
        };

        if mode != Mode::Infile && mode != Mode::DraftOnly {
            let routes = mode.routes(self.cfg.aim_include_snippets);
            for round in 0..self.cfg.rounds.max(1) {
                let current = draft.take().unwrap_or_default();
                let retrieved = self.retrieve_knowledge(task, &current, routes, &mut trace.errors);
                let plan = self.final_plan(task, &retrieved);
                let stage = if round + 1 == self.cfg.rounds.max(1) {
                    "final".to_string()
                } else {
                    format!("round{}", round + 1)
                };
                let call = self.call(&stage, &plan);
                draft = Some(call.output.clone());
                trace.retrievals.push(retrieved);
                trace.calls.push(call);
            }
        }

        trace.errors.extend(
            trace
                .calls
                .iter()
                .filter_map(|c| c.error.as_ref().map(|e| format!("{}: {e}", c.stage))),
        );
        let last = trace.calls.last().map(|c| c.output.as_str()).unwrap_or("");
        trace.prediction = first_line(last).to_string();
        Ok(TaskOutcome {
            prediction: trace.prediction.clone(),
            trace,
        })
    }
}

/// Reruns the last prompt of a trace and returns the prediction it yields.
pub fn replay_prediction(trace: &TaskTrace, providers: &Providers) -> Result<String> {
    let Some(call) = trace.calls.last() else {
        return Ok(String::new());
    };
    let out = providers
        .llm
        .complete(&call.prompt, trace.config.max_new_tokens)?;
    Ok(first_line(&out).to_string())
}

#[cfg(test)]
mod tests;
