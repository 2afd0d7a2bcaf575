//! Scoring runs and comparing modes.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pipeline::CompletionTask;

use super::metrics::{code_em, code_es, id_match};
use super::IdMatchMode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub task_id: String,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_id: String,
    pub code_em: u8,
    pub code_es: f64,
    pub id_em: u8,
    pub id_f1: f64,
    /// No prediction was supplied; scored as the empty string.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing: bool,
}

/// Means over tasks, in percent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub code_em: f64,
    pub code_es: f64,
    pub id_em: f64,
    pub id_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: String,
    pub tasks: usize,
    pub id_match: IdMatchMode,
    pub aggregate: Aggregate,
    pub missing: Vec<String>,
    pub per_task: Vec<TaskScore>,
}

impl MetricsReport {
    pub fn correct(&self) -> BTreeSet<&str> {
        self.per_task
            .iter()
            .filter(|t| t.code_em == 1)
            .map(|t| t.task_id.as_str())
            .collect()
    }
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * values.sum::<f64>() / n as f64
    }
}

/// Scores predictions against the tasks' ground truths, in task order.
pub fn score_run(
    mode: &str,
    predictions: &[Prediction],
    tasks: &[CompletionTask],
    id_mode: IdMatchMode,
) -> MetricsReport {
    let by_id: BTreeMap<&str, &str> = predictions
        .iter()
        .map(|p| (p.task_id.as_str(), p.prediction.as_str()))
        .collect();
    let per_task: Vec<TaskScore> = tasks
        .par_iter()
        .map(|task| {
            let pred = by_id.get(task.task_id.as_str());
            let text = pred.copied().unwrap_or("");
            let ids = id_match(text, &task.ground_truth, task.language, id_mode);
            TaskScore {
                task_id: task.task_id.clone(),
                code_em: u8::from(code_em(text, &task.ground_truth)),
                code_es: code_es(text, &task.ground_truth),
                id_em: u8::from(ids.em),
                id_f1: ids.f1,
                missing: pred.is_none(),
            }
        })
        .collect();
    let n = per_task.len();
    let aggregate = Aggregate {
        code_em: mean(per_task.iter().map(|t| f64::from(t.code_em)), n),
        code_es: mean(per_task.iter().map(|t| t.code_es), n),
        id_em: mean(per_task.iter().map(|t| f64::from(t.id_em)), n),
        id_f1: mean(per_task.iter().map(|t| t.id_f1), n),
    };
    MetricsReport {
        mode: mode.to_string(),
        tasks: n,
        id_match: id_mode,
        aggregate,
        missing: per_task
            .iter()
            .filter(|t| t.missing)
            .map(|t| t.task_id.clone())
            .collect(),
        per_task,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub from: String,
    pub to: String,
    pub code_em: f64,
    pub code_es: f64,
    pub id_em: f64,
    pub id_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<(String, Aggregate)>,
    /// Tasks solved (code EM) by this mode and by no other.
    pub unique_correct: Vec<(String, usize)>,
    /// Differences between every ordered pair of modes, `to − from`.
    pub deltas: Vec<Delta>,
}

pub fn compare_runs(reports: &[MetricsReport]) -> Comparison {
    let correct: Vec<BTreeSet<&str>> = reports.iter().map(MetricsReport::correct).collect();
    let unique_correct = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let only = correct[i]
                .iter()
                .filter(|id| {
                    correct
                        .iter()
                        .enumerate()
                        .all(|(j, c)| j == i || !c.contains(*id))
                })
                .count();
            (r.mode.clone(), only)
        })
        .collect();
    let mut deltas = Vec::new();
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            deltas.push(Delta {
                from: a.mode.clone(),
                to: b.mode.clone(),
                code_em: b.aggregate.code_em - a.aggregate.code_em,
                code_es: b.aggregate.code_es - a.aggregate.code_es,
                id_em: b.aggregate.id_em - a.aggregate.id_em,
                id_f1: b.aggregate.id_f1 - a.aggregate.id_f1,
            });
        }
    }
    Comparison {
        rows: reports
            .iter()
            .map(|r| (r.mode.clone(), r.aggregate))
            .collect(),
        unique_correct,
        deltas,
    }
}

fn table_header(first: &str, width: usize) -> String {
    format!(
        "{:<width$} | {:>7} {:>7} | {:>7} {:>7}\n{:<width$} | {:>7} {:>7} | {:>7} {:>7}\n{}\n",
        "",
        "Code",
        "Match",
        "ID",
        "Match",
        first,
        "EM",
        "ES",
        "EM",
        "F1",
        "-".repeat(width + 35),
    )
}

fn row(name: &str, a: &Aggregate, width: usize) -> String {
    format!(
        "{:<width$} | {:>7.2} {:>7.2} | {:>7.2} {:>7.2}\n",
        name, a.code_em, a.code_es, a.id_em, a.id_f1
    )
}

/// Text table: one row per report, then unique-correct counts and deltas.
pub fn render_comparison(cmp: &Comparison) -> String {
    let width = cmp
        .rows
        .iter()
        .map(|(m, _)| m.len())
        .max()
        .unwrap_or(4)
        .max(4);
    let mut out = table_header("Mode", width);
    for (mode, agg) in &cmp.rows {
        out.push_str(&row(mode, agg, width));
    }
    out.push_str("\nUnique correct (code EM)\n");
    for (mode, n) in &cmp.unique_correct {
        out.push_str(&format!("{mode:<width$} | {n}\n"));
    }
    if !cmp.deltas.is_empty() {
        out.push_str("\nDeltas (to - from)\n");
        let pair_width = cmp
            .deltas
            .iter()
            .map(|d| d.from.len() + d.to.len() + 4)
            .max()
            .unwrap_or(0);
        for d in &cmp.deltas {
            let name = format!("{} -> {}", d.from, d.to);
            out.push_str(&format!(
                "{:<pair_width$} | {:>+7.2} {:>+7.2} | {:>+7.2} {:>+7.2}\n",
                name, d.code_em, d.code_es, d.id_em, d.id_f1
            ));
        }
    }
    out
}

/// Text table for a single report.
pub fn render_report(report: &MetricsReport) -> String {
    let width = report.mode.len().max(4);
    let mut out = table_header("Mode", width);
    out.push_str(&row(&report.mode, &report.aggregate, width));
    out.push_str(&format!("\n{} tasks", report.tasks));
    if !report.missing.is_empty() {
        out.push_str(&format!(", {} without prediction", report.missing.len()));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;
    use crate::corpus::Language;

    fn task(id: &str, gold: &str) -> CompletionTask {
        CompletionTask {
            task_id: id.into(),
            repo_root: PathBuf::from("."),
            file: "a.py".into(),
            language: Language::Python,
            prefix: String::new(),
            ground_truth: gold.into(),
            masked_import_lines: vec![],
            cursor_line: 1,
        }
    }

    fn pred(id: &str, text: &str) -> Prediction {
        Prediction {
            task_id: id.into(),
            prediction: text.into(),
        }
    }

    #[test]
    fn hand_computed_four_tasks() {
        let tasks = vec![
            task("1", "foo(a)"),
            task("2", "foo(a)"),
            task("3", "x"),
            task("4", "bar(a)"),
        ];
        let preds = vec![
            pred("1", "foo(a)"),
            pred("2", "foo(b)"),
            pred("4", "bar( a )"),
        ];
        let r = score_run("m", &preds, &tasks, IdMatchMode::Multiset);
        assert_eq!(r.missing, vec!["3".to_string()]);
        let es: Vec<f64> = r.per_task.iter().map(|t| t.code_es).collect();
        let expected_es = [1.0, 1.0 - 1.0 / 6.0, 0.0, 0.75];
        for (a, b) in es.iter().zip(expected_es) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let ems: Vec<(u8, u8)> = r.per_task.iter().map(|t| (t.code_em, t.id_em)).collect();
        assert_eq!(ems, vec![(1, 1), (0, 0), (0, 0), (0, 1)]);
        assert_eq!(r.aggregate.code_em, 25.0);
        assert!((r.aggregate.code_es - 100.0 * expected_es.iter().sum::<f64>() / 4.0).abs() < 1e-9);
        assert_eq!(r.aggregate.id_em, 50.0);
        assert_eq!(r.aggregate.id_f1, 62.5);
    }

    #[test]
    fn all_correct_is_one_hundred() {
        let tasks = vec![task("1", "a(b)"), task("2", "c")];
        let preds = vec![pred("1", "a(b)"), pred("2", "c")];
        let r = score_run("m", &preds, &tasks, IdMatchMode::Multiset);
        assert_eq!(r.aggregate.code_em, 100.0);
        assert_eq!(r.aggregate.code_es, 100.0);
    }

    #[test]
    fn superset_run_leaves_no_unique_correct() {
        let tasks = vec![task("1", "a"), task("2", "b"), task("3", "c")];
        let a = score_run("a", &[pred("1", "a")], &tasks, IdMatchMode::Multiset);
        let b = score_run(
            "b",
            &[pred("1", "a"), pred("2", "b")],
            &tasks,
            IdMatchMode::Multiset,
        );
        let cmp = compare_runs(&[a, b]);
        assert_eq!(
            cmp.unique_correct,
            vec![("a".to_string(), 0), ("b".to_string(), 1)]
        );
        assert_eq!(cmp.deltas.len(), 1);
        assert!((cmp.deltas[0].code_em - 100.0 / 3.0).abs() < 1e-9);
        let text = render_comparison(&cmp);
        assert!(text.contains("Code"));
        assert!(text.contains("a -> b"));
    }
}
