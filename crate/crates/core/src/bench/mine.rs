//! Mining line-completion tasks that need cross-file knowledge.
//!
//! A task is a line that uses a name imported from inside the repository.
//! When the line is the first use of an import statement, that statement is
//! removed from the prefix. The cursor sits at a random token at or before
//! the first cross-file token, and the ground truth runs to the end of line.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tree_sitter::Node;

use crate::corpus::{parse, repo_fingerprint, Language, SourceFile};
use crate::error::Result;
use crate::jsonl::{read_jsonl, write_json, write_jsonl};
use crate::pipeline::{CompletionTask, MaskedLine};

/// One import statement of a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportStmt {
    /// 1-based, inclusive.
    pub start_line: usize,
    pub end_line: usize,
    pub module: String,
    /// Names the statement brings into scope.
    pub bindings: Vec<String>,
    pub internal: bool,
}

/// Modules and classes defined by the repository.
#[derive(Debug, Clone, Default)]
pub struct ModuleIndex {
    python_modules: BTreeSet<String>,
    java_files: BTreeSet<String>,
}

fn dotted_prefixes(parts: &[&str], out: &mut BTreeSet<String>) {
    for end in 1..=parts.len() {
        out.insert(parts[..end].join("."));
    }
}

impl ModuleIndex {
    pub fn new(files: &[SourceFile]) -> ModuleIndex {
        let paths: BTreeSet<&str> = files.iter().map(|f| f.path.as_str()).collect();
        let mut index = ModuleIndex::default();
        for f in files {
            match f.language {
                Language::Python => {
                    let Some(stem_path) = f.path.strip_suffix(".py") else {
                        continue;
                    };
                    let mut parts: Vec<&str> = stem_path.split('/').collect();
                    if parts.last() == Some(&"__init__") {
                        parts.pop();
                    }
                    if parts.is_empty() {
                        continue;
                    }
                    dotted_prefixes(&parts, &mut index.python_modules);
                    // Package chain: the enclosing directories that hold an __init__.py.
                    let dirs = f.path.split('/').count() - 1;
                    let mut first = dirs;
                    while first > 0 {
                        let dir = f.path.split('/').take(first).collect::<Vec<_>>().join("/");
                        if !paths.contains(format!("{dir}/__init__.py").as_str()) {
                            break;
                        }
                        first -= 1;
                    }
                    if first < parts.len() {
                        dotted_prefixes(&parts[first..], &mut index.python_modules);
                    }
                }
                Language::Java => {
                    index.java_files.insert(f.path.clone());
                }
            }
        }
        index
    }

    pub fn is_python_module(&self, module: &str) -> bool {
        module.starts_with('.') || self.python_modules.contains(module)
    }

    /// Repository file that defines the class `a.b.C`, if any.
    fn java_class_file(&self, dotted: &str) -> Option<&str> {
        let suffix = format!("{}.java", dotted.replace('.', "/"));
        self.java_files
            .iter()
            .find(|p| **p == suffix || p.ends_with(&format!("/{suffix}")))
            .map(String::as_str)
    }

    /// Simple class names of repository files directly inside package `a.b`.
    fn java_package_classes(&self, package: &str) -> Vec<String> {
        let dir = package.replace('.', "/");
        self.java_files
            .iter()
            .filter_map(|p| {
                let (parent, name) = p.rsplit_once('/')?;
                (parent == dir || parent.ends_with(&format!("/{dir}")))
                    .then(|| name.trim_end_matches(".java").to_string())
            })
            .collect()
    }
}

fn node_text<'a>(node: Node, text: &'a str) -> &'a str {
    &text[node.byte_range()]
}

fn walk<'t>(node: Node<'t>, kinds: &[&str], out: &mut Vec<Node<'t>>) {
    if kinds.contains(&node.kind()) {
        out.push(node);
        return;
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        walk(child, kinds, out);
    }
}

fn python_binding(node: Node, text: &str, from_import: bool) -> Option<String> {
    match node.kind() {
        "aliased_import" => node
            .child_by_field_name("alias")
            .map(|a| node_text(a, text).to_string()),
        "dotted_name" => {
            let full = node_text(node, text);
            // `import a.b` binds `a`; `from m import a` binds `a`.
            let name = if from_import {
                full
            } else {
                full.split('.').next().unwrap_or(full)
            };
            Some(name.to_string())
        }
        _ => None,
    }
}

/// Import statements of a file, with internal ones resolved against `index`.
pub fn find_imports(file: &SourceFile, index: &ModuleIndex) -> Vec<ImportStmt> {
    let text = &file.text;
    let tree = parse(text, file.language);
    let mut nodes = Vec::new();
    let kinds: &[&str] = match file.language {
        Language::Python => &["import_statement", "import_from_statement"],
        Language::Java => &["import_declaration"],
    };
    walk(tree.root_node(), kinds, &mut nodes);

    let mut out = Vec::new();
    for node in nodes {
        let start_line = node.start_position().row + 1;
        let end_line = node.end_position().row + 1;
        let mut cursor = node.walk();
        let stmt = match (file.language, node.kind()) {
            (Language::Python, "import_statement") => {
                let names: Vec<Node> = node.children_by_field_name("name", &mut cursor).collect();
                let module = names
                    .first()
                    .map(|n| {
                        let n = if n.kind() == "aliased_import" {
                            n.child_by_field_name("name").unwrap_or(*n)
                        } else {
                            *n
                        };
                        node_text(n, text).to_string()
                    })
                    .unwrap_or_default();
                ImportStmt {
                    start_line,
                    end_line,
                    internal: index.is_python_module(&module),
                    bindings: names
                        .iter()
                        .filter_map(|n| python_binding(*n, text, false))
                        .collect(),
                    module,
                }
            }
            (Language::Python, _) => {
                let module = node
                    .child_by_field_name("module_name")
                    .map(|m| node_text(m, text).to_string())
                    .unwrap_or_default();
                let bindings = node
                    .children_by_field_name("name", &mut cursor)
                    .filter_map(|n| python_binding(n, text, true))
                    .collect();
                ImportStmt {
                    start_line,
                    end_line,
                    internal: index.is_python_module(&module),
                    bindings,
                    module,
                }
            }
            (Language::Java, _) => {
                let raw = node_text(node, text);
                let body = raw
                    .trim()
                    .trim_start_matches("import")
                    .trim()
                    .trim_end_matches(';')
                    .trim();
                let (is_static, path) = match body.strip_prefix("static ") {
                    Some(rest) => (true, rest.trim()),
                    None => (false, body),
                };
                let path: String = path.split_whitespace().collect();
                let (internal, bindings) = if let Some(pkg) = path.strip_suffix(".*") {
                    if is_static {
                        (index.java_class_file(pkg).is_some(), Vec::new())
                    } else {
                        let classes = index.java_package_classes(pkg);
                        (!classes.is_empty(), classes)
                    }
                } else {
                    let (owner, last) = path.rsplit_once('.').unwrap_or(("", path.as_str()));
                    let class = if is_static { owner } else { path.as_str() };
                    (
                        index.java_class_file(class).is_some(),
                        vec![last.to_string()],
                    )
                };
                ImportStmt {
                    start_line,
                    end_line,
                    module: path,
                    bindings,
                    internal,
                }
            }
        };
        out.push(stmt);
    }
    out
}

/// A line that uses an internal import.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageLine {
    /// 1-based.
    pub line: usize,
    /// Byte offset of the first cross-file token.
    pub cross_token_start: usize,
    /// Import statements first used on this line.
    pub first_use_of: Vec<usize>,
}

/// Lines using internally imported names, in line order.
pub fn usage_lines(file: &SourceFile, imports: &[ImportStmt]) -> Vec<UsageLine> {
    let in_import = |line: usize| {
        imports
            .iter()
            .any(|s| (s.start_line..=s.end_line).contains(&line))
    };
    let mut bound: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in imports.iter().enumerate().filter(|(_, s)| s.internal) {
        for b in &s.bindings {
            bound.entry(b.as_str()).or_default().push(i);
        }
    }
    let mut first_use: Vec<Option<usize>> = vec![None; imports.len()];
    let mut out = Vec::new();
    for (idx, tokens) in file.token_lines.iter().enumerate() {
        let line = idx + 1;
        if in_import(line) {
            continue;
        }
        let mut cross = None;
        let mut used = BTreeSet::new();
        for (j, tok) in tokens.iter().enumerate() {
            let Some(stmts) = bound.get(tok.text.as_str()) else {
                continue;
            };
            if j > 0 && tokens[j - 1].text == "." {
                continue;
            }
            if tok.line + 1 != line {
                continue;
            }
            cross.get_or_insert(tok.start);
            used.extend(
                stmts
                    .iter()
                    .copied()
                    .filter(|s| imports[*s].end_line < line),
            );
        }
        let Some(cross_token_start) = cross else {
            continue;
        };
        let mut firsts = Vec::new();
        for s in used {
            if first_use[s].is_none() {
                first_use[s] = Some(line);
                firsts.push(s);
            }
        }
        out.push(UsageLine {
            line,
            cross_token_start,
            first_use_of: firsts,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub task_id: String,
    pub file: String,
    pub masked: Vec<MaskedLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedLine {
    pub file: String,
    pub line: usize,
    pub ground_truth: String,
    /// Another file containing the ground truth verbatim.
    pub found_in: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSetMeta {
    pub repo_fingerprint: String,
    pub seed: u64,
    pub candidates: usize,
    pub construction_log: Vec<MaskRecord>,
    pub excluded: Vec<ExcludedLine>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSet {
    pub meta: TaskSetMeta,
    pub tasks: Vec<CompletionTask>,
}

/// Path of the metadata written next to a task file.
pub fn meta_path(tasks_path: &Path) -> PathBuf {
    let mut p = tasks_path.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

impl TaskSet {
    /// Writes tasks as JSON-Lines and the metadata next to them.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.tasks)?;
        write_json(&meta_path(path), &self.meta)
    }

    /// Reads the tasks; metadata is optional.
    pub fn load(path: &Path) -> Result<TaskSet> {
        let tasks = read_jsonl(path)?;
        let meta_file = meta_path(path);
        let meta = if meta_file.exists() {
            crate::jsonl::read_json(&meta_file)?
        } else {
            TaskSetMeta::default()
        };
        Ok(TaskSet { meta, tasks })
    }
}

fn line_starts(text: &str) -> Vec<usize> {
    std::iter::once(0)
        .chain(text.match_indices('\n').map(|(i, _)| i + 1))
        .collect()
}

/// Mines tasks from the files of `language` and samples `n` of them.
///
/// `files` is the whole repository; the verbatim-duplicate check looks at
/// every file.
pub fn mine_tasks(
    repo_root: &Path,
    files: &[SourceFile],
    language: Language,
    n: usize,
    seed: u64,
) -> TaskSet {
    let index = ModuleIndex::new(files);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut meta = TaskSetMeta {
        repo_fingerprint: repo_fingerprint(files),
        seed,
        ..TaskSetMeta::default()
    };
    let mut pool: Vec<(CompletionTask, MaskRecord)> = Vec::new();

    for file in files.iter().filter(|f| f.language == language) {
        let imports = find_imports(file, &index);
        let usages = usage_lines(file, &imports);
        if usages.is_empty() {
            continue;
        }
        let starts = line_starts(&file.text);
        for usage in usages {
            meta.candidates += 1;
            let tokens = &file.token_lines[usage.line - 1];
            let choices: Vec<usize> = tokens
                .iter()
                .filter(|t| t.start <= usage.cross_token_start && t.line + 1 == usage.line)
                .map(|t| t.start)
                .collect();
            let cursor = choices[rng.gen_range(0..choices.len())];
            let line_start = starts[usage.line - 1];
            let line_end = starts.get(usage.line).map_or(file.text.len(), |s| s - 1);
            let ground_truth = file.text[cursor..line_end].trim_end().to_string();

            let needle = ground_truth.trim();
            if let Some(other) = files
                .iter()
                .find(|f| f.path != file.path && f.text.contains(needle))
            {
                meta.excluded.push(ExcludedLine {
                    file: file.path.clone(),
                    line: usage.line,
                    ground_truth,
                    found_in: other.path.clone(),
                });
                continue;
            }

            let masked_lines: BTreeSet<usize> = usage
                .first_use_of
                .iter()
                .flat_map(|s| imports[*s].start_line..=imports[*s].end_line)
                .collect();
            let mut prefix = String::new();
            for (i, line) in file.lines[..usage.line - 1].iter().enumerate() {
                if !masked_lines.contains(&(i + 1)) {
                    prefix.push_str(line);
                    prefix.push('\n');
                }
            }
            prefix.push_str(&file.text[line_start..cursor]);
            let masked: Vec<MaskedLine> = masked_lines
                .iter()
                .map(|l| MaskedLine {
                    line: *l,
                    text: file.lines[l - 1].clone(),
                })
                .collect();
            let task_id = format!("{}:{}", file.path, usage.line);
            let task = CompletionTask {
                task_id: task_id.clone(),
                repo_root: repo_root.to_path_buf(),
                file: file.path.clone(),
                language,
                prefix,
                ground_truth,
                masked_import_lines: masked.clone(),
                cursor_line: usage.line,
            };
            let record = MaskRecord {
                task_id,
                file: file.path.clone(),
                masked,
            };
            pool.push((task, record));
        }
    }

    if meta.candidates == 0 {
        meta.diagnostics
            .push("no lines use names imported from inside the repository".to_string());
    } else if pool.is_empty() {
        meta.diagnostics
            .push("every candidate line also appears verbatim in another file".to_string());
    }
    let mut chosen: Vec<usize> = if n >= pool.len() {
        (0..pool.len()).collect()
    } else {
        sample(&mut rng, pool.len(), n).into_vec()
    };
    chosen.sort_unstable();
    let mut tasks = Vec::with_capacity(chosen.len());
    for i in chosen {
        let (task, record) = pool[i].clone();
        if !record.masked.is_empty() {
            meta.construction_log.push(record);
        }
        tasks.push(task);
    }
    TaskSet { meta, tasks }
}
