//! A synthetic Python repository with 40 completion tasks and a matching
//! oracle for [`MockLlm`](crate::providers::MockLlm).
//!
//! Every task asks for a call to one repository function, and the oracle
//! answers correctly only when that function's signature is in the prompt.
//! Tasks fall into four groups by the route that can put the signature there:
//!
//! * `Snippet`: the definition sits right after code that mirrors the task,
//!   so similar-snippet retrieval finds it.
//! * `UsageOnly`: the wrong first-pass answer calls the right function with
//!   wrong arguments, which usage-example retrieval picks up; the rest of
//!   the draft defines an unrelated helper.
//! * `SemanticOnly`: the first line of the draft calls an unrelated function,
//!   but the draft goes on to define a function with the target's name and
//!   parameters, which summary retrieval picks up.
//! * `Both`: both signals are present.
//!
//! Definitions outside the `Snippet` group wrap their parameter list over
//! several lines, so no raw window contains the one-line signature.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::api::normalize_header;
use crate::corpus::Language;
use crate::error::{Error, Result};
use crate::jsonl::{write_json, write_jsonl};
use crate::pipeline::{CompletionTask, MaskedLine};
use crate::providers::{MockOracle, MockTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Snippet,
    UsageOnly,
    SemanticOnly,
    Both,
}

pub const SUITE_SIZE: usize = 40;

/// Group sizes, in task order.
const LAYOUT: [(Category, usize); 4] = [
    (Category::Snippet, 8),
    (Category::UsageOnly, 12),
    (Category::SemanticOnly, 12),
    (Category::Both, 8),
];

const VERBS: [&str; 10] = [
    "compute",
    "fetch",
    "resolve",
    "merge",
    "render",
    "validate",
    "schedule",
    "normalize",
    "export",
    "rebuild",
];

const SUBJECTS: [&str; SUITE_SIZE] = [
    "invoice", "ledger", "route", "parcel", "tariff", "voucher", "quota", "roster", "ticket",
    "cohort", "beacon", "vendor", "rebate", "payout", "shelf", "manifest", "permit", "badge",
    "bundle", "census", "depot", "fleet", "harbor", "kiosk", "lantern", "meadow", "orchard",
    "pantry", "quarry", "ranch", "saddle", "tavern", "umbrella", "valley", "wagon", "yarn",
    "zephyr", "anchor", "bridle", "canyon",
];

const DETAILS: [&str; SUITE_SIZE] = [
    "margin", "cutoff", "weight", "region", "season", "currency", "ceiling", "shift", "priority",
    "window", "signal", "rating", "percent", "channel", "layout", "carrier", "expiry", "level",
    "discount", "district", "capacity", "mileage", "berth", "terminal", "wattage", "acreage",
    "harvest", "stock", "grade", "herd", "leather", "menu", "canopy", "slope", "axle", "thread",
    "breeze", "mooring", "strap", "ridge",
];

/// Functions that the misleading drafts point at.
const DECOYS: [&str; 5] = [
    "archive_batch",
    "export_batch",
    "purge_batch",
    "verify_batch",
    "replay_batch",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteTask {
    pub task_id: String,
    pub category: Category,
    /// Repository file defining the target function.
    pub target_file: String,
    pub signature: String,
}

/// The generated suite, before it is written to disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Suite {
    /// Relative path and text of every repository file.
    pub files: BTreeMap<String, String>,
    pub tasks: Vec<CompletionTask>,
    pub oracle: MockOracle,
    pub manifest: Vec<SuiteTask>,
}

/// Where [`Suite::write`] put things.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuitePaths {
    pub repo: PathBuf,
    pub tasks: PathBuf,
    pub oracle: PathBuf,
    pub manifest: PathBuf,
}

struct Target {
    index: usize,
    category: Category,
    name: String,
    key: String,
    detail: String,
}

impl Target {
    fn new(index: usize, category: Category) -> Target {
        let subject = SUBJECTS[index];
        let detail = DETAILS[index];
        Target {
            index,
            category,
            name: format!("{}_{subject}_{detail}", VERBS[index % VERBS.len()]),
            key: format!("{subject}_id"),
            detail: detail.to_string(),
        }
    }

    fn params(&self) -> String {
        format!("{}, {}", self.key, self.detail)
    }

    fn call(&self) -> String {
        format!("{}({})", self.name, self.params())
    }

    fn module(&self) -> &'static str {
        match self.category {
            Category::Snippet => "",
            Category::UsageOnly => "accounts",
            Category::SemanticOnly => "inventory",
            Category::Both => "orders",
        }
    }

    fn file(&self) -> String {
        match self.category {
            Category::Snippet => format!("lib/patterns/pattern_{:02}.py", self.index),
            _ => format!("lib/{}.py", self.module()),
        }
    }

    fn import_module(&self) -> String {
        self.file().trim_end_matches(".py").replace('/', ".")
    }

    /// Statements that precede the call in the task, and that the snippet
    /// group mirrors next to the definition.
    fn body(&self) -> Vec<String> {
        let i = self.index;
        let key = &self.key;
        match self.category {
            Category::Snippet => vec![
                format!("    window_{i} = {key} + offset_{i}"),
                format!("    scaled_{i} = window_{i} * factor_{i}"),
                format!("    bounded_{i} = min(scaled_{i}, limit_{i})"),
                format!("    history_{i}.append(bounded_{i})"),
                format!("    trend_{i} = sum(history_{i}) / len(history_{i})"),
                format!("    marker_{i} = trend_{i} > threshold_{i}"),
            ],
            _ => vec![
                format!("    if {key} is None:"),
                "        return None".to_string(),
                format!("    log.debug(\"handling %s\", {key})"),
            ],
        }
    }

    /// Wrong answer returned when the signature is not in the prompt.
    fn distractor(&self) -> String {
        let decoy = DECOYS[self.index % DECOYS.len()];
        let near_miss = format!("{}({}, None)", self.name, self.key);
        let lookalike = format!(
            "def {}({}, {}=None):\n    return None",
            self.name, self.key, self.detail
        );
        let unrelated = format!("def {decoy}(batch_id, region):\n    return None");
        match self.category {
            Category::Snippet => format!("{}.copy()", self.key),
            Category::UsageOnly => format!("{near_miss}\n\n\n{unrelated}"),
            Category::SemanticOnly => format!("{decoy}(batch_id, region)\n\n\n{lookalike}"),
            Category::Both => format!("{near_miss}\n\n\n{lookalike}"),
        }
    }
}

fn wrapped_def(t: &Target) -> String {
    format!(
        "def {}(\n    {},\n    {},\n):\n    \"\"\"Look up {} by {}.\"\"\"\n    return {}\n",
        t.name, t.key, t.detail, t.detail, t.key, t.key
    )
}

fn pattern_file(t: &Target) -> String {
    let mut lines = vec![format!("def prepare_{}({}):", t.index, t.params())];
    lines.extend(t.body());
    lines.push(format!("    return marker_{}", t.index));
    lines.push(String::new());
    lines.push(String::new());
    lines.push(format!("def {}({}):", t.name, t.params()));
    lines.push(format!("    return {}", t.key));
    lines.join("\n") + "\n"
}

fn decoy_file() -> String {
    DECOYS
        .iter()
        .map(|d| format!("def {d}(batch_id, region):\n    return (batch_id, region)\n"))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Builds the suite in memory. Tasks point at `repo_root`.
pub fn build_suite(repo_root: &Path) -> Suite {
    let targets: Vec<Target> = LAYOUT
        .iter()
        .flat_map(|(c, n)| std::iter::repeat_n(*c, *n))
        .enumerate()
        .map(|(i, c)| Target::new(i, c))
        .collect();

    let mut files = BTreeMap::new();
    files.insert("lib/__init__.py".to_string(), String::new());
    files.insert("lib/patterns/__init__.py".to_string(), String::new());
    files.insert("lib/batches.py".to_string(), decoy_file());
    files.insert("tasks/__init__.py".to_string(), String::new());
    let mut grouped: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for t in &targets {
        match t.category {
            Category::Snippet => {
                files.insert(t.file(), pattern_file(t));
            }
            _ => grouped.entry(t.file()).or_default().push(wrapped_def(t)),
        }
    }
    for (file, defs) in grouped {
        files.insert(file, defs.join("\n\n"));
    }

    let mut tasks = Vec::new();
    let mut oracle = MockOracle::default();
    let mut manifest = Vec::new();
    for t in &targets {
        let path = format!("tasks/report_{:02}.py", t.index);
        let import = format!("from {} import {}", t.import_module(), t.name);
        let header = format!("def report_{:02}({}):", t.index, t.params());
        let mut lines = vec![import.clone(), String::new(), String::new(), header.clone()];
        lines.extend(t.body());
        let cursor_line = lines.len() + 1;
        let lead = "    value = ";
        lines.push(format!("{lead}{}", t.call()));
        lines.push("    return value".to_string());
        files.insert(path.clone(), lines.join("\n") + "\n");

        let prefix_lines = &lines[1..cursor_line - 1];
        let prefix = format!("{}\n{lead}", prefix_lines.join("\n"));
        let anchor_start = prefix.find(&header).expect("header in prefix");
        let task_id = format!("{path}:{cursor_line}");
        let signature = normalize_header(&format!("def {}({})", t.name, t.params()));
        tasks.push(CompletionTask {
            task_id: task_id.clone(),
            repo_root: repo_root.to_path_buf(),
            file: path,
            language: Language::Python,
            prefix: prefix.clone(),
            ground_truth: t.call(),
            masked_import_lines: vec![MaskedLine {
                line: 1,
                text: import,
            }],
            cursor_line,
        });
        oracle.tasks.push(MockTask {
            task_id: task_id.clone(),
            anchor: prefix[anchor_start..].to_string(),
            ground_truth: t.call(),
            distractor: t.distractor(),
            evidence: vec![signature.clone()],
        });
        manifest.push(SuiteTask {
            task_id,
            category: t.category,
            target_file: t.file(),
            signature,
        });
    }
    Suite {
        files,
        tasks,
        oracle,
        manifest,
    }
}

impl Suite {
    /// Writes `repo/`, `tasks.jsonl`, `oracle.json` and `suite.json` under
    /// `dir`.
    pub fn write(&self, dir: &Path) -> Result<SuitePaths> {
        let paths = SuitePaths {
            repo: dir.join("repo"),
            tasks: dir.join("tasks.jsonl"),
            oracle: dir.join("oracle.json"),
            manifest: dir.join("suite.json"),
        };
        for (rel, text) in &self.files {
            let path = paths.repo.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        write_jsonl(&paths.tasks, &self.tasks)?;
        write_json(&paths.oracle, &self.oracle)?;
        write_json(&paths.manifest, &self.manifest)?;
        Ok(paths)
    }
}

/// Generates the suite under `dir`, with tasks pointing at `dir/repo`.
pub fn write_suite(dir: &Path) -> Result<(Suite, SuitePaths)> {
    let suite = build_suite(&dir.join("repo"));
    let paths = suite.write(dir)?;
    Ok((suite, paths))
}
