use std::sync::Arc;

use tree_sitter::Node;

use crate::api::{java_param_name, python_param_name};
use crate::corpus::{identifiers, parse, Language};
use crate::error::{Error, Result};
use crate::usage::snake_case;

use super::{CompletionModel, Summarizer};

/// `load_data` / `loadData` → `load data`.
pub fn name_words(name: &str) -> String {
    snake_case(name)
        .split('_')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn render(name: &str, params: &[String]) -> String {
    let words = name_words(name);
    let words = if words.is_empty() {
        "computation".to_string()
    } else {
        words
    };
    if params.is_empty() {
        format!("Performs {words}.")
    } else {
        format!("Performs {words} given {}.", params.join(", "))
    }
}

fn is_definition(language: Language, kind: &str) -> bool {
    match language {
        Language::Python => kind == "function_definition",
        Language::Java => matches!(kind, "method_declaration" | "constructor_declaration"),
    }
}

fn is_call(language: Language, kind: &str) -> bool {
    match language {
        Language::Python => kind == "call",
        Language::Java => matches!(kind, "method_invocation" | "object_creation_expression"),
    }
}

fn first_node<'t>(node: Node<'t>, pred: &dyn Fn(&str) -> bool) -> Option<Node<'t>> {
    if pred(node.kind()) {
        return Some(node);
    }
    let mut cursor = node.walk();
    let children: Vec<Node<'t>> = node.children(&mut cursor).collect();
    children.into_iter().find_map(|c| first_node(c, pred))
}

fn definition_parts(
    node: Node<'_>,
    code: &str,
    language: Language,
) -> Option<(String, Vec<String>)> {
    let name = code[node.child_by_field_name("name")?.byte_range()].to_string();
    let mut params = Vec::new();
    if let Some(list) = node.child_by_field_name("parameters") {
        let mut cursor = list.walk();
        for p in list.named_children(&mut cursor) {
            let param = match language {
                Language::Python => python_param_name(p, code),
                Language::Java => java_param_name(p, code),
            };
            params.extend(param);
        }
    }
    if language == Language::Python && params.first().is_some_and(|p| p == "self" || p == "cls") {
        params.remove(0);
    }
    Some((name, params))
}

fn call_parts(node: Node<'_>, code: &str, language: Language) -> Option<(String, Vec<String>)> {
    let callee = match (language, node.kind()) {
        (Language::Python, _) => {
            let function = node.child_by_field_name("function")?;
            match function.kind() {
                "attribute" => function.child_by_field_name("attribute")?,
                _ => function,
            }
        }
        (Language::Java, "object_creation_expression") => node.child_by_field_name("type")?,
        (Language::Java, _) => node.child_by_field_name("name")?,
    };
    let name = code[callee.byte_range()].to_string();
    let mut args = Vec::new();
    if let Some(list) = node.child_by_field_name("arguments") {
        let mut cursor = list.walk();
        for arg in list.named_children(&mut cursor) {
            match arg.kind() {
                "identifier" => args.push(code[arg.byte_range()].to_string()),
                "keyword_argument" => {
                    if let Some(n) = arg.child_by_field_name("name") {
                        args.push(code[n.byte_range()].to_string());
                    }
                }
                _ => {}
            }
        }
    }
    Some((name, args))
}

/// Deterministic summary built from names alone.
///
/// Summarizes the first definition in `code` when there is one, otherwise the
/// first call, otherwise the first identifier: `Performs <name words> given
/// <parameter names>.` Empty input gives an empty summary.
pub fn rule_summary(code: &str, language: Language) -> String {
    if code.trim().is_empty() {
        return String::new();
    }
    let tree = parse(code, language);
    let root = tree.root_node();
    if let Some(def) = first_node(root, &|k| is_definition(language, k)) {
        if let Some((name, params)) = definition_parts(def, code, language) {
            return render(&name, &params);
        }
    }
    if let Some(call) = first_node(root, &|k| is_call(language, k)) {
        if let Some((name, args)) = call_parts(call, code, language) {
            return render(&name, &args);
        }
    }
    let first = identifiers(code, language)
        .into_iter()
        .next()
        .unwrap_or_default();
    render(&first, &[])
}

/// The offline summarizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleSummarizer;

impl Summarizer for RuleSummarizer {
    fn id(&self) -> String {
        "rule".into()
    }

    fn summarize(&self, code: &str, language: Language) -> Result<String> {
        Ok(rule_summary(code, language))
    }
}

/// A code/docstring pair shown to the model before the target code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryExemplar {
    pub language: Language,
    pub code: &'static str,
    pub docstring: &'static str,
}

const EXEMPLARS: &[SummaryExemplar] = &[
    SummaryExemplar {
        language: Language::Python,
        code: "def hydrate_time(nanoseconds, tz=None):
    seconds, nanoseconds = map(int, divmod(nanoseconds, 1000000000))
    minutes, seconds = map(int, divmod(seconds, 60))
    hours, minutes = map(int, divmod(minutes, 60))
    t = Time(hours, minutes, seconds, nanoseconds)
    if tz is None:
        return t
    offset_minutes, _ = divmod(tz, 60)
    return FixedOffset(offset_minutes).localize(t)",
        docstring: "Converts nanoseconds since midnight into a Time, localized to the UTC offset tz (in seconds) when one is given.",
    },
    SummaryExemplar {
        language: Language::Python,
        code: "def unique_everseen(items, key=None):
    seen = set()
    for item in items:
        marker = item if key is None else key(item)
        if marker not in seen:
            seen.add(marker)
            yield item",
        docstring: "Yields the items in their original order, skipping any whose key has already been seen.",
    },
    SummaryExemplar {
        language: Language::Java,
        code: "public static int clamp(int value, int low, int high) {
    if (value < low) {
        return low;
    }
    return Math.min(value, high);
}",
        docstring: "Restricts value to the inclusive range from low to high.",
    },
    SummaryExemplar {
        language: Language::Java,
        code: "public String joinNonEmpty(List<String> parts, String sep) {
    StringBuilder out = new StringBuilder();
    for (String part : parts) {
        if (part == null || part.isEmpty()) continue;
        if (out.length() > 0) out.append(sep);
        out.append(part);
    }
    return out.toString();
}",
        docstring: "Concatenates the non-empty parts, separated by sep.",
    },
];

/// Summarizer that prompts a completion model with few-shot code/docstring
/// pairs followed by the target code.
pub struct FewShotSummarizer {
    llm: Arc<dyn CompletionModel>,
    max_new_tokens: usize,
}

impl FewShotSummarizer {
    pub fn new(llm: Arc<dyn CompletionModel>) -> FewShotSummarizer {
        FewShotSummarizer {
            llm,
            max_new_tokens: 64,
        }
    }

    pub fn render_prompt(code: &str, language: Language) -> String {
        let mut prompt = format!(
            "Write a one-sentence docstring that states what the {language} code does.\n\n"
        );
        for ex in EXEMPLARS.iter().filter(|e| e.language == language) {
            prompt.push_str("### Code\n");
            prompt.push_str(ex.code);
            prompt.push_str("\n### Docstring\n");
            prompt.push_str(ex.docstring);
            prompt.push_str("\n\n");
        }
        prompt.push_str("### Code\n");
        prompt.push_str(code.trim_end());
        prompt.push_str("\n### Docstring\n");
        prompt
    }

    /// First paragraph of the model output, quotes and markers stripped.
    pub fn extract_docstring(output: &str) -> String {
        let text = output.trim_start();
        let text = text.split("###").next().unwrap_or_default();
        let paragraph = text.split("\n\n").next().unwrap_or_default();
        paragraph
            .trim()
            .trim_matches(|c| c == '"' || c == '\'' || c == '`')
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Summarizer for FewShotSummarizer {
    fn id(&self) -> String {
        format!("few-shot:{}", self.llm.id())
    }

    fn summarize(&self, code: &str, language: Language) -> Result<String> {
        let prompt = Self::render_prompt(code, language);
        let output = self.llm.complete(&prompt, self.max_new_tokens)?;
        let doc = Self::extract_docstring(&output);
        if doc.is_empty() {
            return Err(Error::provider(self.id(), "model returned no docstring"));
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo(&'static str);

    impl CompletionModel for Echo {
        fn id(&self) -> String {
            "echo".into()
        }
        fn complete(&self, _prompt: &str, _max: usize) -> Result<String> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn rule_on_definitions() {
        assert_eq!(
            rule_summary(
                "def load_data(path, fmt):\n    return 1\n",
                Language::Python
            ),
            "Performs load data given path, fmt."
        );
        assert_eq!(
            rule_summary("def run():\n    pass\n", Language::Python),
            "Performs run."
        );
        assert_eq!(
            rule_summary("def step(self, batch):\n    pass\n", Language::Python),
            "Performs step given batch."
        );
        assert_eq!(
            rule_summary("public int sizeOf(Node root) { return 0; }", Language::Java),
            "Performs size of given root."
        );
    }

    #[test]
    fn rule_on_calls() {
        assert_eq!(
            rule_summary(
                "rows = load_dataset(path, fmt=fmt)\nprint(rows)",
                Language::Python
            ),
            "Performs load dataset given path, fmt."
        );
        assert_eq!(
            rule_summary("helper.normalizeScores(values, 3)", Language::Java),
            "Performs normalize scores given values."
        );
        assert_eq!(rule_summary("", Language::Python), "");
        assert_eq!(rule_summary("x", Language::Python), "Performs x.");
        assert_eq!(rule_summary("+", Language::Python), "Performs computation.");
    }

    #[test]
    fn template_places_target_last() {
        let prompt = FewShotSummarizer::render_prompt("def f(x):\n    return x", Language::Python);
        let target = prompt.rfind("def f(x)").unwrap();
        let exemplar = prompt.find("def hydrate_time").unwrap();
        assert!(exemplar < target);
        assert!(prompt.ends_with("### Docstring\n"));
        assert!(!prompt.contains("clamp"));
    }

    #[test]
    fn few_shot_extracts_first_paragraph() {
        let s = FewShotSummarizer::new(Arc::new(Echo(" \"Adds two numbers.\"\n\n### Code\n...")));
        assert_eq!(
            s.summarize("def add(a, b): return a + b", Language::Python)
                .unwrap(),
            "Adds two numbers."
        );
        let empty = FewShotSummarizer::new(Arc::new(Echo("   ")));
        assert!(empty.summarize("x", Language::Python).is_err());
    }
}
