//! Repository scanning, source records and sliding line windows.

mod lexer;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{Error, Result};

pub use lexer::{
    count_tokens, identifiers, is_keyword, parse, prefix_within_budget, suffix_within_budget,
    token_texts, tokenize, Token,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python = 0,
    Java = 1,
}

impl Language {
    pub fn from_path(path: &Path) -> Option<Language> {
        match path.extension()?.to_str()? {
            "py" => Some(Language::Python),
            "java" => Some(Language::Java),
            _ => None,
        }
    }

    pub fn line_comment(self) -> &'static str {
        match self {
            Language::Python => "#",
            Language::Java => "//",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Python => "python",
            Language::Java => "java",
        })
    }
}

impl std::str::FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "python" | "py" => Ok(Language::Python),
            "java" => Ok(Language::Java),
            other => Err(Error::Config(format!("unknown language `{other}`"))),
        }
    }
}

/// A lexed source file, addressed by repository-relative path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    /// Path relative to the repository root, `/`-separated.
    pub path: String,
    pub language: Language,
    pub text: String,
    pub lines: Vec<String>,
    /// Tokens grouped by the line they start on; empty when parsing failed.
    pub token_lines: Vec<Vec<Token>>,
    pub parse_failed: bool,
    /// Hex SHA-256 of `text`.
    pub content_hash: String,
}

impl SourceFile {
    pub fn from_text(path: impl Into<String>, language: Language, text: String) -> SourceFile {
        let lines: Vec<String> = split_lines(&text);
        let tree = parse(&text, language);
        let parse_failed = tree.root_node().has_error();
        let mut token_lines = vec![Vec::new(); lines.len()];
        if !parse_failed {
            for token in lexer::tokenize_tree(&text, &tree, language) {
                if let Some(slot) = token_lines.get_mut(token.line) {
                    slot.push(token);
                }
            }
        }
        let content_hash = hex::encode(Sha256::digest(text.as_bytes()));
        SourceFile {
            path: path.into(),
            language,
            text,
            lines,
            token_lines,
            parse_failed,
            content_hash,
        }
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }
}

/// Lines of `text` without terminators; a trailing newline does not open a
/// new line.
pub fn split_lines(text: &str) -> Vec<String> {
    text.lines().map(str::to_string).collect()
}

/// A file that was found but could not be read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanWarning {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scan {
    /// Sorted by path.
    pub files: Vec<SourceFile>,
    pub skipped: Vec<ScanWarning>,
}

pub fn build_excludes(patterns: &[String]) -> Result<GlobSet> {
    let mut builder = GlobSetBuilder::new();
    for pattern in patterns {
        let glob = Glob::new(pattern).map_err(|e| Error::ExcludePattern {
            pattern: pattern.clone(),
            message: e.to_string(),
        })?;
        builder.add(glob);
    }
    builder.build().map_err(|e| Error::ExcludePattern {
        pattern: patterns.join(", "),
        message: e.to_string(),
    })
}

fn relative_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Walks `root` and lexes every Python and Java file not matched by `excludes`.
///
/// Hidden directories and symbolic links are skipped. Exclude globs match
/// repository-relative paths.
pub fn scan_repo(root: &Path, excludes: &[String]) -> Result<Scan> {
    let meta = std::fs::metadata(root).map_err(|source| Error::RepoRoot {
        path: root.to_path_buf(),
        source,
    })?;
    if !meta.is_dir() {
        return Err(Error::RepoRoot {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        });
    }
    let excludes = build_excludes(excludes)?;

    let mut candidates = Vec::new();
    let mut skipped = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = match entry {
            Ok(entry) => entry,
            Err(err) => {
                if err.depth() == 0 {
                    return Err(Error::RepoRoot {
                        path: root.to_path_buf(),
                        source: err.into(),
                    });
                }
                let path = err
                    .path()
                    .map(|p| relative_path(root, p))
                    .unwrap_or_default();
                skipped.push(ScanWarning {
                    path,
                    message: err.to_string(),
                });
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let Some(language) = Language::from_path(entry.path()) else {
            continue;
        };
        let rel = relative_path(root, entry.path());
        if excludes.is_match(&rel) {
            continue;
        }
        candidates.push((rel, entry.into_path(), language));
    }

    let results: Vec<_> = candidates
        .into_par_iter()
        .map(|(rel, path, language)| match std::fs::read(&path) {
            Ok(bytes) => match String::from_utf8(bytes) {
                Ok(text) => Ok(SourceFile::from_text(rel, language, text)),
                Err(_) => Err(ScanWarning {
                    path: rel,
                    message: "file is not valid UTF-8".into(),
                }),
            },
            Err(err) => Err(ScanWarning {
                path: rel,
                message: err.to_string(),
            }),
        })
        .collect();

    let mut files = Vec::new();
    for result in results {
        match result {
            Ok(file) => files.push(file),
            Err(warning) => {
                tracing::warn!(path = %warning.path, "skipping unreadable file: {}", warning.message);
                skipped.push(warning);
            }
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Scan { files, skipped })
}

/// Hash of the sorted `(path, content hash)` pairs.
pub fn repo_fingerprint(files: &[SourceFile]) -> String {
    let mut pairs: Vec<(&str, &str)> = files
        .iter()
        .map(|f| (f.path.as_str(), f.content_hash.as_str()))
        .collect();
    pairs.sort();
    let mut hasher = Sha256::new();
    for (path, hash) in pairs {
        hasher.update(path.as_bytes());
        hasher.update([0]);
        hasher.update(hash.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// A run of consecutive lines of one file, with its token set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeWindow {
    pub file: String,
    /// 1-based, inclusive.
    pub start_line: usize,
    /// 1-based, inclusive.
    pub end_line: usize,
    pub text: String,
    pub token_set: BTreeSet<String>,
}

impl CodeWindow {
    pub fn new(
        file: impl Into<String>,
        start_line: usize,
        end_line: usize,
        text: String,
        language: Language,
    ) -> CodeWindow {
        let token_set = token_texts(&text, language).into_iter().collect();
        CodeWindow {
            file: file.into(),
            start_line,
            end_line,
            text,
            token_set,
        }
    }

    pub fn contains_line(&self, line: usize) -> bool {
        (self.start_line..=self.end_line).contains(&line)
    }
}

/// 1-based start lines of the windows over a file of `line_count` lines.
pub fn window_starts(line_count: usize, slide: usize) -> impl Iterator<Item = usize> {
    (1..=line_count).step_by(slide.max(1))
}

/// Sliding windows of `window_len` lines advancing by `slide`.
///
/// A window starts at every line `1 + k * slide` inside the file; windows near
/// the end are clipped and may be shorter than `window_len`.
pub fn windows(file: &SourceFile, window_len: usize, slide: usize) -> Vec<CodeWindow> {
    assert!(
        window_len >= 1 && slide >= 1,
        "window_len and slide must be positive"
    );
    let total = file.line_count();
    window_starts(total, slide)
        .map(|start| {
            let end = (start + window_len - 1).min(total);
            let text = file.lines[start - 1..end].join("\n");
            CodeWindow::new(file.path.clone(), start, end, text, file.language)
        })
        .collect()
}

/// Windows over every file of a scan, in (path, start line) order.
pub fn corpus_windows(files: &[SourceFile], window_len: usize, slide: usize) -> Vec<CodeWindow> {
    let per_file: Vec<Vec<CodeWindow>> = files
        .par_iter()
        .map(|f| windows(f, window_len, slide))
        .collect();
    per_file.into_iter().flatten().collect()
}
