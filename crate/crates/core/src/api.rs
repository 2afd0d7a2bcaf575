//! Extraction of functions and methods from parsed source files.

use std::collections::BTreeSet;

use globset::GlobSet;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tree_sitter::Node;

use crate::corpus::{parse, Language, SourceFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiKind {
    RegularFunction,
    ClassFunction,
    Constructor,
    JavaMethod,
    JavaConstructor,
    JavaInnerClassMethod,
}

/// One function or method defined in the repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiRecord {
    pub name: String,
    /// Whitespace-normalized header: name, parameters and return type.
    pub signature: String,
    pub class_name: Option<String>,
    /// Normalized header of the class that owns the API.
    pub enclosing_class_decl: Option<String>,
    /// Class that encloses `class_name`, for nested classes.
    pub outer_class: Option<String>,
    pub body: String,
    /// Full definition text, decorators and annotations excluded.
    pub source: String,
    pub file: String,
    pub language: Language,
    pub kind: ApiKind,
    pub is_static: bool,
    /// Parameter names in order; Python receivers (`self`/`cls`) excluded.
    pub param_names: Vec<String>,
    pub return_type: Option<String>,
    /// 1-based line of the definition header.
    pub start_line: usize,
    pub end_line: usize,
}

impl ApiRecord {
    /// Unique key: file, owning class, name, and a short hash of the signature.
    pub fn qualified_name(&self) -> String {
        let digest = Sha256::digest(self.signature.as_bytes());
        let short = hex::encode(&digest[..4]);
        match &self.class_name {
            Some(class) => format!("{}::{}.{}#{}", self.file, class, self.name, short),
            None => format!("{}::{}#{}", self.file, self.name, short),
        }
    }

    /// File name without directories or extension.
    pub fn file_stem(&self) -> &str {
        let name = self.file.rsplit('/').next().unwrap_or(&self.file);
        name.split_once('.').map_or(name, |(stem, _)| stem)
    }
}

/// Collapses whitespace runs and tidies the padding that line wrapping leaves
/// inside brackets.
pub fn normalize_header(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .replace("( ", "(")
        .replace(" )", ")")
        .replace(",)", ")")
        .replace("< ", "<")
        .replace(" >", ">")
}

fn node_text<'a>(node: Node<'_>, text: &'a str) -> &'a str {
    &text[node.byte_range()]
}

struct ClassContext {
    name: String,
    header: String,
    outer: Option<String>,
    depth: usize,
}

/// Every function/method definition of `file`.
///
/// Methods of nested classes are included; functions nested inside other
/// functions, lambdas and anonymous classes are not.
pub fn extract_apis(file: &SourceFile) -> Vec<ApiRecord> {
    if file.parse_failed {
        tracing::warn!(path = %file.path, "skipping API extraction for file that failed to parse");
        return Vec::new();
    }
    let tree = parse(&file.text, file.language);
    let mut out = Vec::new();
    match file.language {
        Language::Python => python_scope(tree.root_node(), file, None, &mut out),
        Language::Java => java_scope(tree.root_node(), file, None, &mut out),
    }
    out
}

// ---------------------------------------------------------------- python --

fn python_scope(
    node: Node<'_>,
    file: &SourceFile,
    class: Option<&ClassContext>,
    out: &mut Vec<ApiRecord>,
) {
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        python_statement(child, file, class, &[], out);
    }
}

fn python_statement(
    node: Node<'_>,
    file: &SourceFile,
    class: Option<&ClassContext>,
    decorators: &[String],
    out: &mut Vec<ApiRecord>,
) {
    match node.kind() {
        "function_definition" => {
            if let Some(record) = python_function(node, file, class, decorators) {
                out.push(record);
            }
        }
        "decorated_definition" => {
            let mut cursor = node.walk();
            let decos: Vec<String> = node
                .children(&mut cursor)
                .filter(|c| c.kind() == "decorator")
                .map(|c| {
                    node_text(c, &file.text)
                        .trim_start_matches('@')
                        .trim()
                        .to_string()
                })
                .collect();
            if let Some(def) = node.child_by_field_name("definition") {
                python_statement(def, file, class, &decos, out);
            }
        }
        "class_definition" => {
            let Some(name) = node.child_by_field_name("name") else {
                return;
            };
            let Some(body) = node.child_by_field_name("body") else {
                return;
            };
            let header = normalize_header(&file.text[node.start_byte()..body.start_byte()]);
            let context = ClassContext {
                name: node_text(name, &file.text).to_string(),
                header,
                outer: class.map(|c| c.name.clone()),
                depth: class.map_or(1, |c| c.depth + 1),
            };
            python_scope(body, file, Some(&context), out);
        }
        // Lambdas live in expressions and are never definitions.
        "lambda" | "expression_statement" => {}
        _ => {
            // Compound statements (if/try/with/...) at module or class level.
            let mut cursor = node.walk();
            for child in node.children(&mut cursor) {
                python_statement(child, file, class, &[], out);
            }
        }
    }
}

pub(crate) fn python_param_name(node: Node<'_>, text: &str) -> Option<String> {
    match node.kind() {
        "identifier" => Some(node_text(node, text).to_string()),
        "default_parameter" | "typed_default_parameter" => node
            .child_by_field_name("name")
            .and_then(|n| python_param_name(n, text)),
        "typed_parameter" | "list_splat_pattern" | "dictionary_splat_pattern" => {
            let mut cursor = node.walk();
            let first = node.named_children(&mut cursor).next();
            first.and_then(|n| python_param_name(n, text))
        }
        _ => None,
    }
}

fn python_function(
    node: Node<'_>,
    file: &SourceFile,
    class: Option<&ClassContext>,
    decorators: &[String],
) -> Option<ApiRecord> {
    let text = &file.text;
    let name = node_text(node.child_by_field_name("name")?, text).to_string();
    let params_node = node.child_by_field_name("parameters")?;
    let body = node.child_by_field_name("body")?;

    let mut cursor = params_node.walk();
    let mut param_names: Vec<String> = params_node
        .named_children(&mut cursor)
        .filter_map(|p| python_param_name(p, text))
        .collect();
    let is_static = decorators
        .iter()
        .any(|d| d == "staticmethod" || d == "classmethod");
    if class.is_some()
        && param_names
            .first()
            .is_some_and(|p| p == "self" || p == "cls")
    {
        param_names.remove(0);
    }

    let kind = match class {
        None => ApiKind::RegularFunction,
        Some(_) if name == "__init__" => ApiKind::Constructor,
        Some(_) => ApiKind::ClassFunction,
    };
    let return_type = node
        .child_by_field_name("return_type")
        .map(|n| normalize_header(node_text(n, text)));
    let signature = normalize_header(&text[node.start_byte()..body.start_byte()])
        .trim_end_matches(':')
        .trim_end()
        .to_string();

    Some(ApiRecord {
        name,
        signature,
        class_name: class.map(|c| c.name.clone()),
        enclosing_class_decl: class.map(|c| c.header.clone()),
        outer_class: class.and_then(|c| c.outer.clone()),
        body: node_text(body, text).to_string(),
        source: node_text(node, text).to_string(),
        file: file.path.clone(),
        language: Language::Python,
        kind,
        is_static,
        param_names,
        return_type,
        start_line: node.start_position().row + 1,
        end_line: node.end_position().row + 1,
    })
}

// ------------------------------------------------------------------ java --

const JAVA_TYPE_DECLS: &[&str] = &[
    "class_declaration",
    "interface_declaration",
    "enum_declaration",
    "record_declaration",
];

fn java_scope(
    node: Node<'_>,
    file: &SourceFile,
    class: Option<&ClassContext>,
    out: &mut Vec<ApiRecord>,
) {
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        let kind = child.kind();
        if JAVA_TYPE_DECLS.contains(&kind) {
            java_type(child, file, class, out);
        } else if let Some(class) = class {
            match kind {
                "method_declaration"
                | "constructor_declaration"
                | "compact_constructor_declaration" => {
                    if let Some(record) = java_method(child, file, class) {
                        out.push(record);
                    }
                }
                "enum_body_declarations" => java_scope(child, file, Some(class), out),
                _ => {}
            }
        }
    }
}

/// Start of a declaration with leading annotations skipped.
fn java_decl_start(node: Node<'_>) -> usize {
    let mut cursor = node.walk();
    let Some(modifiers) = node.children(&mut cursor).find(|c| c.kind() == "modifiers") else {
        return node.start_byte();
    };
    let mut mc = modifiers.walk();
    let first_plain = modifiers
        .children(&mut mc)
        .find(|m| !matches!(m.kind(), "annotation" | "marker_annotation"));
    match first_plain {
        Some(m) => m.start_byte(),
        None => modifiers
            .next_sibling()
            .map_or(node.start_byte(), |n| n.start_byte()),
    }
}

fn java_has_modifier(node: Node<'_>, text: &str, word: &str) -> bool {
    let mut cursor = node.walk();
    let Some(modifiers) = node.children(&mut cursor).find(|c| c.kind() == "modifiers") else {
        return false;
    };
    let mut mc = modifiers.walk();
    let found = modifiers
        .children(&mut mc)
        .any(|m| node_text(m, text) == word);
    found
}

fn java_type(
    node: Node<'_>,
    file: &SourceFile,
    class: Option<&ClassContext>,
    out: &mut Vec<ApiRecord>,
) {
    let text = &file.text;
    let Some(name) = node.child_by_field_name("name") else {
        return;
    };
    let Some(body) = node.child_by_field_name("body") else {
        return;
    };
    let header = normalize_header(&text[java_decl_start(node)..body.start_byte()]);
    let context = ClassContext {
        name: node_text(name, text).to_string(),
        header,
        outer: class.map(|c| c.name.clone()),
        depth: class.map_or(1, |c| c.depth + 1),
    };
    java_scope(body, file, Some(&context), out);
}

pub(crate) fn java_param_name(node: Node<'_>, text: &str) -> Option<String> {
    match node.kind() {
        "formal_parameter" => node
            .child_by_field_name("name")
            .map(|n| node_text(n, text).to_string()),
        "spread_parameter" => {
            let mut cursor = node.walk();
            let declarator = node
                .named_children(&mut cursor)
                .find(|c| c.kind() == "variable_declarator");
            declarator
                .and_then(|d| d.child_by_field_name("name"))
                .map(|n| node_text(n, text).to_string())
        }
        _ => None,
    }
}

fn java_method(node: Node<'_>, file: &SourceFile, class: &ClassContext) -> Option<ApiRecord> {
    let text = &file.text;
    let name = node_text(node.child_by_field_name("name")?, text).to_string();
    let param_names: Vec<String> = match node.child_by_field_name("parameters") {
        Some(params) => {
            let mut cursor = params.walk();
            params
                .named_children(&mut cursor)
                .filter_map(|p| java_param_name(p, text))
                .collect()
        }
        None => Vec::new(),
    };
    let is_constructor = node.kind() != "method_declaration";
    let kind = if is_constructor {
        ApiKind::JavaConstructor
    } else if class.depth > 1 {
        ApiKind::JavaInnerClassMethod
    } else {
        ApiKind::JavaMethod
    };
    let return_type = if is_constructor {
        None
    } else {
        node.child_by_field_name("type")
            .map(|n| normalize_header(node_text(n, text)))
    };
    let header_end = node
        .child_by_field_name("body")
        .map_or(node.end_byte(), |b| b.start_byte());
    let start = java_decl_start(node);
    let signature = normalize_header(&text[start..header_end])
        .trim_end_matches(';')
        .trim_end()
        .to_string();
    let body = node
        .child_by_field_name("body")
        .map(|b| node_text(b, text).to_string())
        .unwrap_or_default();

    Some(ApiRecord {
        name,
        signature,
        class_name: Some(class.name.clone()),
        enclosing_class_decl: Some(class.header.clone()),
        outer_class: class.outer.clone(),
        body,
        source: text[start..node.end_byte()].to_string(),
        file: file.path.clone(),
        language: Language::Java,
        kind,
        is_static: java_has_modifier(node, text, "static"),
        param_names,
        return_type,
        start_line: node.start_position().row + 1,
        end_line: node.end_position().row + 1,
    })
}

/// Extracts APIs from every file, in file order.
pub fn extract_all(files: &[SourceFile]) -> Vec<ApiRecord> {
    use rayon::prelude::*;
    let per_file: Vec<Vec<ApiRecord>> = files.par_iter().map(extract_apis).collect();
    per_file.into_iter().flatten().collect()
}

/// Keeps only records defined in repository files that are not excluded.
pub fn internal_filter(
    records: Vec<ApiRecord>,
    repo_files: &BTreeSet<String>,
    excludes: &GlobSet,
) -> Vec<ApiRecord> {
    records
        .into_iter()
        .filter(|r| repo_files.contains(&r.file) && !excludes.is_match(&r.file))
        .collect()
}
