use std::sync::Arc;

use super::*;
use crate::corpus::{corpus_windows, SourceFile};
use crate::kb::build_kb;
use crate::providers::{CompletionModel, MockLlm, MockOracle, MockTask};
use crate::retrieval::HitSource;

const STORE: &str = "\
class RecordStore:
    def fetch_record(
        self, key, default=None
    ):
        return self.rows.get(key, default)


def parse_header(line):
    return line.split(\",\")
";

const SIGNATURE: &str = "def fetch_record(self, key, default=None)";

fn files() -> Vec<SourceFile> {
    vec![
        SourceFile::from_text("store.py", Language::Python, STORE.to_string()),
        SourceFile::from_text(
            "app.py",
            Language::Python,
            "def handler(store, key):\n    row = store.fetch_record(key)\n    return row\n"
                .to_string(),
        ),
    ]
}

fn task() -> CompletionTask {
    CompletionTask {
        task_id: "t1".into(),
        repo_root: PathBuf::from("."),
        file: "app.py".into(),
        language: Language::Python,
        prefix: "def handler(store, key):\n    row = ".into(),
        ground_truth: "store.fetch_record(key)".into(),
        masked_import_lines: vec![],
        cursor_line: 2,
    }
}

fn oracle() -> MockOracle {
    MockOracle {
        tasks: vec![MockTask {
            task_id: "t1".into(),
            anchor: "def handler(store, key):\n    row = ".into(),
            ground_truth: "store.fetch_record(key)".into(),
            distractor: "store.fetch_record(key, default)\nreturn row".into(),
            evidence: vec![SIGNATURE.into()],
        }],
    }
}

struct Fixture {
    cfg: RunConfig,
    kb: KnowledgeBase,
    index: WindowIndex,
    providers: Providers,
}

impl Fixture {
    fn new(llm: Arc<dyn CompletionModel>) -> Fixture {
        let cfg = RunConfig::default();
        let providers = Providers::offline(Language::Python, 256, llm);
        let files = files();
        let kb = build_kb(&files, &[], &providers).unwrap();
        let index = WindowIndex::new(corpus_windows(&files, cfg.window_len, cfg.slide));
        Fixture {
            cfg,
            kb,
            index,
            providers,
        }
    }

    fn mock() -> Fixture {
        Fixture::new(Arc::new(MockLlm::new(oracle())))
    }

    fn pipeline(&self) -> Pipeline<'_> {
        Pipeline {
            cfg: &self.cfg,
            kb: Some(&self.kb),
            index: &self.index,
            providers: &self.providers,
        }
    }
}

struct Failing;

impl CompletionModel for Failing {
    fn id(&self) -> String {
        "failing".into()
    }

    fn complete(&self, _: &str, _: usize) -> Result<String> {
        Err(Error::provider("failing", "down"))
    }
}

fn hit(name: &str, entry: usize, score: f64, source: HitSource) -> ApiHit {
    ApiHit {
        qualified_name: name.into(),
        entry,
        score,
        source,
        best_ue_form: None,
    }
}

#[test]
fn line_helpers() {
    assert_eq!(first_line("a(b)\nc"), "a(b)");
    assert_eq!(first_line("a\r\nb"), "a");
    assert_eq!(first_line(""), "");
    assert_eq!(last_lines("a\nb\nc", 2), "b\nc");
    assert_eq!(last_lines("a\nb", 5), "a\nb");
    assert_eq!(last_lines("a\nb\n", 1), "");
}

#[test]
fn uer_query_merges_cursor_line_with_draft() {
    assert_eq!(
        uer_query_line("x = 1\n    row = ", "load(k)\nmore"),
        "    row = load(k)"
    );
    assert_eq!(
        uer_query_line("x = 1\n    row = ", "\n  load(k)"),
        "  load(k)"
    );
    assert_eq!(uer_query_line("x = 1\n", ""), "x = 1");
}

#[test]
fn mode_names_round_trip() {
    for m in Mode::ALL {
        assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            format!("\"{}\"", m.name())
        );
    }
    assert!("nope".parse::<Mode>().is_err());
}

#[test]
fn api_block_carries_class_and_signature_only() {
    let fx = Fixture::mock();
    let entry = fx
        .kb
        .entries
        .iter()
        .find(|e| e.api.name == "fetch_record")
        .unwrap();
    let text = ApiInfoBlock::render(&entry.api);
    assert_eq!(text, format!("class RecordStore:\n    {SIGNATURE}"));
    assert!(!text.contains("return"));
}

#[test]
fn zero_hits_gives_infile_only() {
    let fx = Fixture::mock();
    let p = fx.pipeline();
    let plan = p.final_plan(&task(), &Retrieved::default());
    assert!(plan.blocks.is_empty());
    assert_eq!(plan.render(), task().prefix);
}

fn snippet(file: &str, start: usize, text: &str, score: f64) -> SnippetHit {
    let w = crate::corpus::CodeWindow::new(file, start, start, text.to_string(), Language::Python);
    SnippetHit {
        score,
        snippet: w.clone(),
        matched: w,
    }
}

#[test]
fn block_order_snippets_then_uer_then_fsr() {
    let fx = Fixture::mock();
    let snippets = vec![
        snippet("a.py", 1, "x = 1", 0.2),
        snippet("b.py", 1, "y = 2", 0.7),
    ];
    let uer_hits = vec![
        hit("e0", 0, 0.3, HitSource::Uer),
        hit("e1", 1, 0.9, HitSource::Uer),
    ];
    let fsr_hits = vec![hit("e2", 0, 0.95, HitSource::Fsr)];
    let t = task();
    let input = PromptInputs {
        language: Language::Python,
        prefix: &t.prefix,
        snippets: &snippets,
        uer_hits: &uer_hits,
        fsr_hits: &fsr_hits,
        kb: Some(&fx.kb),
        total_budget: 4096,
        retrieved_budget: 2048,
        infile_budget: 1920,
        uer_first: true,
    };
    let plan = assemble_prompt(&input);
    let order: Vec<(BlockKind, String)> = plan
        .blocks
        .iter()
        .map(|b| {
            (
                b.kind,
                b.qualified_name.clone().unwrap_or_else(|| b.file.clone()),
            )
        })
        .collect();
    assert_eq!(
        order,
        vec![
            (BlockKind::SimilarSnippet, "b.py".to_string()),
            (BlockKind::SimilarSnippet, "a.py".to_string()),
            (BlockKind::ApiInfo, "e1".to_string()),
            (BlockKind::ApiInfo, "e0".to_string()),
            (BlockKind::ApiInfo, "e2".to_string()),
        ]
    );
    let rendered = plan.render();
    assert!(rendered.starts_with("# b.py\ny = 2\n# a.py\nx = 1\n# store.py\n"));
    assert!(rendered.ends_with(&t.prefix));

    let fsr_first = PromptInputs {
        uer_first: false,
        ..input
    };
    let plan = assemble_prompt(&fsr_first);
    assert_eq!(plan.blocks[2].qualified_name.as_deref(), Some("e2"));
}

#[test]
fn over_budget_drops_lowest_api_first() {
    let fx = Fixture::mock();
    let uer_hits = vec![
        hit("hi", 0, 0.9, HitSource::Uer),
        hit("lo", 1, 0.1, HitSource::Uer),
    ];
    let one_block = PromptBlock {
        kind: BlockKind::ApiInfo,
        file: fx.kb.entries[0].api.file.clone(),
        text: ApiInfoBlock::render(&fx.kb.entries[0].api),
        score: 0.0,
        source: None,
        qualified_name: None,
    }
    .tokens(Language::Python);
    let t = task();
    let plan = assemble_prompt(&PromptInputs {
        language: Language::Python,
        prefix: &t.prefix,
        snippets: &[],
        uer_hits: &uer_hits,
        fsr_hits: &[],
        kb: Some(&fx.kb),
        total_budget: 4096,
        retrieved_budget: one_block,
        infile_budget: 1920,
        uer_first: true,
    });
    let names: Vec<_> = plan
        .blocks
        .iter()
        .filter_map(|b| b.qualified_name.clone())
        .collect();
    assert_eq!(names, vec!["hi".to_string()]);
    assert!(plan.retrieved_tokens() <= one_block);
}

#[test]
fn dedup_keeps_higher_score_once() {
    let u = vec![
        hit("a", 0, 0.4, HitSource::Uer),
        hit("b", 1, 0.3, HitSource::Uer),
    ];
    let f = vec![hit("a", 0, 0.8, HitSource::Fsr)];
    let merged = dedup_api_hits(&u, &f);
    assert_eq!(merged.len(), 2);
    let a = merged.iter().find(|h| h.qualified_name == "a").unwrap();
    assert_eq!(a.source, HitSource::Fsr);
    assert_eq!(a.score, 0.8);
}

#[test]
fn disjoint_routes_give_two_k_blocks() {
    let mut fx = Fixture::mock();
    let template = fx.kb.entries[0].clone();
    fx.kb.entries.clear();
    for i in 0..8 {
        let mut e = template.clone();
        e.qualified_name = format!("e{i}");
        fx.kb.entries.push(e);
    }
    let u: Vec<_> = (0..4)
        .map(|i| hit(&format!("e{i}"), i, 0.5, HitSource::Uer))
        .collect();
    let f: Vec<_> = (4..8)
        .map(|i| hit(&format!("e{i}"), i, 0.5, HitSource::Fsr))
        .collect();
    let retrieved = Retrieved {
        uer_hits: u,
        fsr_hits: f,
        ..Retrieved::default()
    };
    let plan = fx.pipeline().final_plan(&task(), &retrieved);
    assert_eq!(plan.blocks.len(), 8);
}

#[test]
fn infile_and_base_miss_without_signature() {
    let fx = Fixture::mock();
    let p = fx.pipeline();
    let out = p.complete_task(&task(), Mode::Infile, None).unwrap();
    assert_eq!(out.prediction, "store.fetch_record(key, default)");
    assert_eq!(out.trace.calls.len(), 1);
    let out = p.complete_task(&task(), Mode::Base, None).unwrap();
    assert_eq!(out.prediction, "store.fetch_record(key, default)");
    assert_eq!(
        out.trace.calls[0].output,
        "store.fetch_record(key, default)\nreturn row"
    );
}

#[test]
fn uer_surfaces_the_api() {
    let fx = Fixture::mock();
    let p = fx.pipeline();
    for mode in [Mode::PlusUer, Mode::Full] {
        let out = p.complete_task(&task(), mode, None).unwrap();
        assert_eq!(out.prediction, "store.fetch_record(key)", "{mode}");
        let last = &out.trace.retrievals[1];
        assert_eq!(last.uer_query, "    row = store.fetch_record(key, default)");
        assert!(last.uer_hits[0].qualified_name.contains("fetch_record"));
    }
}

#[test]
fn aim_matches_full_given_same_draft() {
    let fx = Fixture::mock();
    let p = fx.pipeline();
    let full = p.complete_task(&task(), Mode::Full, None).unwrap();
    let draft = full.trace.calls[0].output.clone();
    let aim = p
        .complete_task(&task(), Mode::AimOverExternalDraft, Some(&draft))
        .unwrap();
    assert_eq!(
        aim.trace.retrievals[0].uer_hits,
        full.trace.retrievals[1].uer_hits
    );
    assert_eq!(
        aim.trace.retrievals[0].fsr_hits,
        full.trace.retrievals[1].fsr_hits
    );
    assert!(aim.trace.retrievals[0].snippet_hits.is_empty());
    assert_eq!(aim.prediction, "store.fetch_record(key)");
    assert!(p
        .complete_task(&task(), Mode::AimOverExternalDraft, None)
        .is_err());
}

#[test]
fn llm_failure_is_recorded() {
    let fx = Fixture::new(Arc::new(Failing));
    let out = fx
        .pipeline()
        .complete_task(&task(), Mode::Full, None)
        .unwrap();
    assert_eq!(out.prediction, "");
    assert_eq!(out.trace.errors.len(), 2);
    // Empty draft: UER falls back to the last prefix line, FSR is skipped.
    assert_eq!(out.trace.retrievals[1].uer_query, "    row = ");
    assert!(out.trace.retrievals[1].fsr_hits.is_empty());
}

#[test]
fn missing_kb_is_an_error() {
    let fx = Fixture::mock();
    let p = Pipeline {
        kb: None,
        ..fx.pipeline()
    };
    assert!(p.complete_task(&task(), Mode::Full, None).is_err());
    assert!(p.complete_task(&task(), Mode::Base, None).is_ok());
}

#[test]
fn long_prefix_respects_budgets() {
    let fx = Fixture::mock();
    let mut t = task();
    let body: String = (0..3000)
        .map(|i| format!("    v{i} = store.fetch_record({i})\n"))
        .collect();
    t.prefix = format!("def handler(store, key):\n{body}    row = ");
    for mode in [Mode::Infile, Mode::Full] {
        let out = fx.pipeline().complete_task(&t, mode, None).unwrap();
        for call in &out.trace.calls {
            assert!(call.prompt_tokens <= 4096 - 128, "{}", call.prompt_tokens);
            assert!(call.retrieved_tokens <= 2048);
            assert_eq!(call.prompt_tokens, count_tokens(&call.prompt));
        }
    }
}

#[test]
fn trace_replays_to_prediction() {
    let fx = Fixture::mock();
    for mode in [Mode::Infile, Mode::DraftOnly, Mode::Base, Mode::Full] {
        let out = fx.pipeline().complete_task(&task(), mode, None).unwrap();
        assert_eq!(
            replay_prediction(&out.trace, &fx.providers).unwrap(),
            out.prediction
        );
        let json = serde_json::to_string(&out.trace).unwrap();
        let back: TaskTrace = serde_json::from_str(&json).unwrap();
        assert_eq!(back.prediction, out.prediction);
    }
}

#[test]
fn extra_rounds_add_calls() {
    let mut fx = Fixture::mock();
    fx.cfg.rounds = 2;
    let out = fx
        .pipeline()
        .complete_task(&task(), Mode::Base, None)
        .unwrap();
    let stages: Vec<_> = out.trace.calls.iter().map(|c| c.stage.as_str()).collect();
    assert_eq!(stages, vec!["draft", "round1", "final"]);
}
