//! Benchmark construction and scoring.

mod metrics;
mod mine;
mod report;

use serde::{Deserialize, Serialize};

pub use metrics::{
    code_em, code_es, edit_similarity, id_match, id_match_lists, normalize_ws, IdScore,
};
pub use mine::{
    find_imports, meta_path, mine_tasks, usage_lines, ExcludedLine, ImportStmt, MaskRecord,
    ModuleIndex, TaskSet, TaskSetMeta, UsageLine,
};
pub use report::{
    compare_runs, render_comparison, render_report, score_run, Aggregate, Comparison, Delta,
    MetricsReport, Prediction, TaskScore,
};

/// How identifier lists are compared for ID EM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdMatchMode {
    Set,
    #[default]
    Multiset,
    Sequence,
}
