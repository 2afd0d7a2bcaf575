//! Grammar-backed lexing.
//!
//! Tokens are the leaves of the tree-sitter syntax tree. String and character
//! literals are kept whole, comments are dropped, and any bytes the grammar
//! does not cover become single-character tokens, so lexing never fails.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};
use tree_sitter::{Node, Parser, Tree};

use super::Language;

/// One lexical token with its location in the lexed text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Byte offset of the first byte.
    pub start: usize,
    /// Byte offset one past the last byte.
    pub end: usize,
    /// 0-based line of the first byte.
    pub line: usize,
    /// Byte column of the first byte within its line.
    pub column: usize,
}

thread_local! {
    static PARSERS: RefCell<[Option<Parser>; 2]> = const { RefCell::new([None, None]) };
}

/// Parses `text` with a cached per-thread parser for `language`.
pub fn parse(text: &str, language: Language) -> Tree {
    PARSERS.with(|cell| {
        let mut parsers = cell.borrow_mut();
        let slot = &mut parsers[language as usize];
        let parser = slot.get_or_insert_with(|| {
            let mut parser = Parser::new();
            let grammar: tree_sitter::Language = match language {
                Language::Python => tree_sitter_python::LANGUAGE.into(),
                Language::Java => tree_sitter_java::LANGUAGE.into(),
            };
            parser
                .set_language(&grammar)
                .expect("bundled grammar matches the tree-sitter ABI");
            parser
        });
        parser
            .parse(text, None)
            .expect("parser has a language and no cancellation flag")
    })
}

fn is_comment(kind: &str) -> bool {
    matches!(kind, "comment" | "line_comment" | "block_comment")
}

fn is_atomic_literal(language: Language, kind: &str) -> bool {
    match language {
        Language::Python => kind == "string",
        Language::Java => matches!(kind, "string_literal" | "character_literal" | "text_block"),
    }
}

enum Span {
    Token(usize, usize),
    Skip(usize, usize),
}

fn collect_spans(node: Node<'_>, language: Language, out: &mut Vec<Span>) {
    let kind = node.kind();
    let (start, end) = (node.start_byte(), node.end_byte());
    if start == end {
        return;
    }
    if is_comment(kind) {
        out.push(Span::Skip(start, end));
        return;
    }
    if is_atomic_literal(language, kind) {
        out.push(Span::Token(start, end));
        return;
    }
    if node.child_count() == 0 {
        // Leaf ERROR nodes and line continuations fall through to the gap scan.
        if !node.is_error() && kind != "line_continuation" {
            out.push(Span::Token(start, end));
        }
        return;
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect_spans(child, language, out);
    }
}

struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    fn locate(&self, offset: usize) -> (usize, usize) {
        let line = match self.starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        (line, offset - self.starts[line])
    }
}

fn push_token(text: &str, index: &LineIndex, start: usize, end: usize, out: &mut Vec<Token>) {
    let (line, column) = index.locate(start);
    out.push(Token {
        text: text[start..end].to_string(),
        start,
        end,
        line,
        column,
    });
}

fn push_gap(text: &str, index: &LineIndex, from: usize, to: usize, out: &mut Vec<Token>) {
    if from >= to {
        return;
    }
    for (offset, ch) in text[from..to].char_indices() {
        if !ch.is_whitespace() && ch != '\\' {
            let start = from + offset;
            push_token(text, index, start, start + ch.len_utf8(), out);
        }
    }
}

/// Lexes `text` into tokens in document order.
pub fn tokenize(text: &str, language: Language) -> Vec<Token> {
    if text.trim().is_empty() {
        return Vec::new();
    }
    let tree = parse(text, language);
    tokenize_tree(text, &tree, language)
}

/// Lexes using an already-parsed tree of `text`.
pub fn tokenize_tree(text: &str, tree: &Tree, language: Language) -> Vec<Token> {
    let mut spans = Vec::new();
    collect_spans(tree.root_node(), language, &mut spans);

    let index = LineIndex::new(text);
    let mut tokens = Vec::new();
    let mut pos = 0;
    for span in spans {
        let (start, end, keep) = match span {
            Span::Token(s, e) => (s, e, true),
            Span::Skip(s, e) => (s, e, false),
        };
        // Nested spans cannot occur, but an ERROR subtree may repeat a range.
        if start < pos {
            continue;
        }
        push_gap(text, &index, pos, start, &mut tokens);
        if keep {
            push_token(text, &index, start, end, &mut tokens);
        }
        pos = end;
    }
    push_gap(text, &index, pos, text.len(), &mut tokens);
    tokens
}

/// Token texts only.
pub fn token_texts(text: &str, language: Language) -> Vec<String> {
    tokenize(text, language)
        .into_iter()
        .map(|t| t.text)
        .collect()
}

/// Budget token count: every maximal run of word characters counts as one
/// token, every other non-whitespace character counts as one.
///
/// Comments are counted. The count is additive over newline-joined parts.
pub fn count_tokens(text: &str) -> usize {
    token_starts(text).len()
}

fn token_starts(text: &str) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut in_word = false;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() || ch == '_' {
            if !in_word {
                starts.push(i);
                in_word = true;
            }
        } else {
            in_word = false;
            if !ch.is_whitespace() {
                starts.push(i);
            }
        }
    }
    starts
}

/// Longest suffix of `text` whose [`count_tokens`] is at most `budget`.
pub fn suffix_within_budget(text: &str, budget: usize) -> &str {
    let starts = token_starts(text);
    if starts.len() <= budget {
        return text;
    }
    if budget == 0 {
        return "";
    }
    &text[starts[starts.len() - budget]..]
}

/// Longest prefix of `text` whose [`count_tokens`] is at most `budget`,
/// trailing whitespace removed.
pub fn prefix_within_budget(text: &str, budget: usize) -> &str {
    let starts = token_starts(text);
    if starts.len() <= budget {
        return text;
    }
    text[..starts[budget]].trim_end()
}

const PYTHON_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

const JAVA_KEYWORDS: &[&str] = &[
    "abstract",
    "assert",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extends",
    "final",
    "finally",
    "float",
    "for",
    "goto",
    "if",
    "implements",
    "import",
    "instanceof",
    "int",
    "interface",
    "long",
    "native",
    "new",
    "package",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "strictfp",
    "super",
    "switch",
    "synchronized",
    "this",
    "throw",
    "throws",
    "transient",
    "try",
    "void",
    "volatile",
    "while",
    "true",
    "false",
    "null",
    "var",
    "record",
    "yield",
];

pub fn is_keyword(word: &str, language: Language) -> bool {
    match language {
        Language::Python => PYTHON_KEYWORDS.contains(&word),
        Language::Java => JAVA_KEYWORDS.contains(&word),
    }
}

fn looks_like_identifier(word: &str) -> bool {
    let mut chars = word.chars();
    chars.next().is_some_and(|c| c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn is_identifier_kind(language: Language, kind: &str) -> bool {
    match language {
        Language::Python => kind == "identifier",
        Language::Java => matches!(kind, "identifier" | "type_identifier"),
    }
}

fn collect_identifiers(node: Node<'_>, text: &str, language: Language, out: &mut Vec<String>) {
    if is_identifier_kind(language, node.kind()) && node.child_count() == 0 {
        out.push(text[node.byte_range()].to_string());
        return;
    }
    if is_comment(node.kind()) || is_atomic_literal(language, node.kind()) {
        return;
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect_identifiers(child, text, language, out);
    }
}

/// Identifiers of a code fragment in source order.
///
/// Uses the syntax tree when the fragment parses cleanly and falls back to
/// identifier-shaped lexer tokens otherwise.
pub fn identifiers(text: &str, language: Language) -> Vec<String> {
    if text.trim().is_empty() {
        return Vec::new();
    }
    let tree = parse(text, language);
    let root = tree.root_node();
    if !root.has_error() {
        let mut out = Vec::new();
        collect_identifiers(root, text, language, &mut out);
        return out;
    }
    tokenize_tree(text, &tree, language)
        .into_iter()
        .map(|t| t.text)
        .filter(|t| looks_like_identifier(t) && !is_keyword(t, language))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(text: &str, language: Language) -> Vec<String> {
        token_texts(text, language)
    }

    #[test]
    fn simple_assignment() {
        assert_eq!(
            texts("a = foo(b)", Language::Python),
            vec!["a", "=", "foo", "(", "b", ")"]
        );
    }

    #[test]
    fn empty_and_comment_only() {
        assert!(texts("", Language::Python).is_empty());
        assert!(texts("# comment only", Language::Python).is_empty());
        assert!(texts("// note\n/* block */", Language::Java).is_empty());
    }

    #[test]
    fn literals_stay_whole() {
        assert_eq!(
            texts("x = \"a b c\" + f'{y} z'", Language::Python),
            vec!["x", "=", "\"a b c\"", "+", "f'{y} z'"]
        );
        assert_eq!(
            texts("String s = \"hi there\";", Language::Java),
            vec!["String", "s", "=", "\"hi there\"", ";"]
        );
    }

    #[test]
    fn unknown_bytes_become_single_chars() {
        let toks = texts("a = $b", Language::Python);
        assert!(toks.contains(&"$".to_string()), "{toks:?}");
        assert!(toks.contains(&"a".to_string()));
    }

    #[test]
    fn spans_slice_to_text() {
        let src = "class A:\n    def f(self, x):  # hi\n        return x + 1\n";
        for tok in tokenize(src, Language::Python) {
            assert_eq!(&src[tok.start..tok.end], tok.text);
            let line_start: usize = src.split('\n').take(tok.line).map(|l| l.len() + 1).sum();
            assert_eq!(line_start + tok.column, tok.start);
        }
    }

    #[test]
    fn budget_count() {
        assert_eq!(count_tokens("a = foo(b)"), 6);
        assert_eq!(count_tokens("# utils/io.py"), 6);
        assert_eq!(count_tokens("  \n "), 0);
        assert_eq!(count_tokens("load_data2(x)"), 4);
    }

    #[test]
    fn suffix_budget_cuts_on_token_boundary() {
        let text = "alpha beta = gamma(delta)";
        assert_eq!(suffix_within_budget(text, 100), text);
        assert_eq!(suffix_within_budget(text, 4), "gamma(delta)");
        assert_eq!(suffix_within_budget(text, 3), "(delta)");
        assert_eq!(suffix_within_budget(text, 0), "");
        for budget in 0..10 {
            assert!(count_tokens(suffix_within_budget(text, budget)) <= budget);
            assert!(count_tokens(prefix_within_budget(text, budget)) <= budget);
        }
        assert_eq!(prefix_within_budget(text, 4), "alpha beta = gamma");
        assert_eq!(prefix_within_budget(text, 0), "");
    }

    #[test]
    fn identifier_extraction() {
        assert_eq!(
            identifiers("x = load_data(path, fmt)", Language::Python),
            vec!["x", "load_data", "path", "fmt"]
        );
        // Fragment that does not parse falls back to the lexer.
        assert_eq!(
            identifiers("foo(bar, ", Language::Python),
            vec!["foo", "bar"]
        );
        assert_eq!(
            identifiers("Widget w = new Widget(id);", Language::Java),
            vec!["Widget", "w", "Widget", "id"]
        );
        assert!(identifiers("", Language::Java).is_empty());
    }
}
