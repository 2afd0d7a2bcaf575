use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use repocomplete_core::bench::{
    compare_runs, mine_tasks, render_comparison, render_report, score_run, MetricsReport,
    Prediction, TaskSet,
};
use repocomplete_core::corpus::{corpus_windows, repo_fingerprint, scan_repo, SourceFile};
use repocomplete_core::jsonl::{read_json, read_jsonl, write_atomic, write_json, write_jsonl};
use repocomplete_core::kb::{build_kb, load_kb, save_kb, KnowledgeBase};
use repocomplete_core::pipeline::{Mode, Pipeline, TaskOutcome};
use repocomplete_core::providers::Providers;
use repocomplete_core::retrieval::WindowIndex;
use repocomplete_core::suite::write_suite;
use repocomplete_core::RunConfig;
use serde::{Deserialize, Serialize};

use crate::settings::Overrides;
use crate::Command;

pub fn dispatch(command: Command, overrides: &Overrides) -> Result<()> {
    match command {
        Command::BuildKb { out } => build_kb_cmd(&overrides.resolve(None)?, &out),
        Command::MineTasks { out, n } => mine_tasks_cmd(&overrides.resolve(None)?, &out, n),
        Command::Run {
            tasks,
            kb,
            mode,
            drafts,
            out,
        } => run_cmd(
            &overrides.resolve(mode)?,
            overrides.repo.is_some(),
            &tasks,
            kb.as_deref(),
            drafts.as_deref(),
            &out,
        ),
        Command::Score {
            tasks,
            predictions,
            name,
            out,
        } => score_cmd(&overrides.resolve(None)?, &tasks, &predictions, name, &out),
        Command::Compare { reports, out } => compare_cmd(&reports, out.as_deref()),
        Command::MakeSuite { out } => make_suite_cmd(&out),
    }
}

/// Source files of the configured language.
fn scan(cfg: &RunConfig, root: &Path) -> Result<Vec<SourceFile>> {
    let scan =
        scan_repo(root, &cfg.excludes).with_context(|| format!("scanning {}", root.display()))?;
    for w in &scan.skipped {
        tracing::warn!(path = %w.path, "skipped: {}", w.message);
    }
    Ok(scan
        .files
        .into_iter()
        .filter(|f| f.language == cfg.language)
        .collect())
}

fn build_kb_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let files = scan(cfg, &cfg.repo_root)?;
    let providers = Providers::from_config(&cfg.providers, cfg.language)?;
    let kb = build_kb(&files, &cfg.excludes, &providers)?;
    save_kb(&kb, out).with_context(|| format!("writing {}", out.display()))?;
    let degraded = kb.entries.iter().filter(|e| e.degraded).count();
    eprintln!(
        "wrote {} entries ({} degraded) from {} files to {}",
        kb.len(),
        degraded,
        files.len(),
        out.display()
    );
    Ok(())
}

fn mine_tasks_cmd(cfg: &RunConfig, out: &Path, n: usize) -> Result<()> {
    if n == 0 {
        bail!("--n must be at least 1");
    }
    let all = scan_repo(&cfg.repo_root, &cfg.excludes)?.files;
    let set = mine_tasks(&cfg.repo_root, &all, cfg.language, n, cfg.seed);
    for d in &set.meta.diagnostics {
        tracing::warn!("{d}");
    }
    set.save(out)?;
    eprintln!(
        "wrote {} tasks ({} candidates, {} excluded as duplicated) to {}",
        set.tasks.len(),
        set.meta.candidates,
        set.meta.excluded.len(),
        out.display()
    );
    Ok(())
}

fn load_kb_for_run(
    path: Option<&Path>,
    providers: &Providers,
    fingerprint: &str,
) -> Result<KnowledgeBase> {
    let Some(path) = path else {
        bail!("this mode needs a knowledge base; build one with `repocomplete build-kb --out kb.jsonl` and pass `--kb kb.jsonl`");
    };
    if !path.exists() {
        bail!(
            "knowledge base {} not found; build it first with `repocomplete build-kb --out {}`",
            path.display(),
            path.display()
        );
    }
    let kb = load_kb(path)?;
    let embedder = providers.embedder.id();
    if kb.header.embedder_id != embedder {
        bail!(
            "knowledge base {} was embedded with `{}` but this run uses `{}`; rebuild it with `repocomplete build-kb`",
            path.display(),
            kb.header.embedder_id,
            embedder
        );
    }
    if kb.header.repo_fingerprint != fingerprint {
        tracing::warn!(
            "knowledge base {} was built from a different repository state",
            path.display()
        );
    }
    Ok(kb)
}

/// File name for a task's trace: position plus a sanitized id.
fn trace_name(index: usize, task_id: &str) -> String {
    let clean: String = task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{index:05}_{clean}.json")
}

/// Wall-clock figures; kept apart from the reproducible outputs.
#[derive(Debug, Serialize, Deserialize)]
struct RunStats {
    mode: Mode,
    tasks: usize,
    workers: usize,
    failed_calls: usize,
    setup_s: f64,
    total_s: f64,
    mean_task_s: f64,
}

fn run_cmd(
    cfg: &RunConfig,
    repo_flag: bool,
    tasks_path: &Path,
    kb_path: Option<&Path>,
    drafts_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let start = Instant::now();
    let set = TaskSet::load(tasks_path)
        .with_context(|| format!("reading tasks {}", tasks_path.display()))?;
    let mut cfg = cfg.clone();
    if !repo_flag && cfg.repo_root == Path::new(".") {
        if let Some(t) = set.tasks.first() {
            cfg.repo_root = t.repo_root.clone();
        }
    }
    let mode = cfg.mode;
    let files = scan(&cfg, &cfg.repo_root)?;
    let providers = Providers::from_config(&cfg.providers, cfg.language)?;
    let kb = if mode.needs_kb() {
        Some(load_kb_for_run(
            kb_path,
            &providers,
            &repo_fingerprint(&files),
        )?)
    } else {
        None
    };
    let index = WindowIndex::new(corpus_windows(&files, cfg.window_len, cfg.slide));
    let drafts: BTreeMap<String, String> = match (mode, drafts_path) {
        (Mode::AimOverExternalDraft, Some(p)) => read_jsonl::<Prediction>(p)
            .with_context(|| format!("reading drafts {}", p.display()))?
            .into_iter()
            .map(|p| (p.task_id, p.prediction))
            .collect(),
        (Mode::AimOverExternalDraft, None) => {
            bail!("mode aim_over_external_draft needs --drafts <predictions.jsonl>")
        }
        _ => BTreeMap::new(),
    };
    let setup_s = start.elapsed().as_secs_f64();

    let pipeline = Pipeline {
        cfg: &cfg,
        kb: kb.as_ref(),
        index: &index,
        providers: &providers,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()?;
    let traces_dir = out.join("traces");
    std::fs::create_dir_all(&traces_dir)
        .with_context(|| format!("creating {}", traces_dir.display()))?;
    let results: Vec<Result<(TaskOutcome, f64)>> = pool.install(|| {
        set.tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| {
                let t0 = Instant::now();
                let draft = match mode {
                    Mode::AimOverExternalDraft => Some(drafts.get(&task.task_id).map(String::as_str).unwrap_or_else(|| {
                        tracing::warn!(task = %task.task_id, "no external draft; using an empty one");
                        ""
                    })),
                    _ => None,
                };
                let outcome = pipeline.complete_task(task, mode, draft)?;
                write_json(&traces_dir.join(trace_name(i, &task.task_id)), &outcome.trace)?;
                Ok((outcome, t0.elapsed().as_secs_f64()))
            })
            .collect()
    });

    let mut predictions = Vec::with_capacity(results.len());
    let mut failed_calls = 0;
    let mut task_s = 0.0;
    for (task, result) in set.tasks.iter().zip(results) {
        let (outcome, secs) = result.with_context(|| format!("task {}", task.task_id))?;
        failed_calls += outcome.trace.errors.len();
        task_s += secs;
        predictions.push(Prediction {
            task_id: task.task_id.clone(),
            prediction: outcome.prediction,
        });
    }
    write_jsonl(&out.join("predictions.jsonl"), &predictions)?;
    let stats = RunStats {
        mode,
        tasks: predictions.len(),
        workers: cfg.workers,
        failed_calls,
        setup_s,
        total_s: start.elapsed().as_secs_f64(),
        mean_task_s: if predictions.is_empty() {
            0.0
        } else {
            task_s / predictions.len() as f64
        },
    };
    write_json(&out.join("run_stats.json"), &stats)?;
    if failed_calls > 0 {
        tracing::warn!("{failed_calls} provider errors; see traces");
    }
    eprintln!(
        "{mode}: {} predictions in {}",
        predictions.len(),
        out.display()
    );
    Ok(())
}

fn score_cmd(
    cfg: &RunConfig,
    tasks: &Path,
    predictions: &Path,
    name: Option<String>,
    out: &Path,
) -> Result<()> {
    let set = TaskSet::load(tasks).with_context(|| format!("reading tasks {}", tasks.display()))?;
    let preds: Vec<Prediction> = read_jsonl(predictions)
        .with_context(|| format!("reading predictions {}", predictions.display()))?;
    let name = name.unwrap_or_else(|| {
        predictions
            .parent()
            .and_then(Path::file_name)
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    });
    let report = score_run(&name, &preds, &set.tasks, cfg.id_match);
    if !report.missing.is_empty() {
        tracing::warn!(
            "{} tasks have no prediction and were scored as empty",
            report.missing.len()
        );
    }
    write_json(out, &report)?;
    let table = render_report(&report);
    write_atomic(&out.with_extension("txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn compare_cmd(paths: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let reports = paths
        .iter()
        .map(|p| {
            read_json::<MetricsReport>(p).with_context(|| format!("reading report {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let cmp = compare_runs(&reports);
    let table = render_comparison(&cmp);
    if let Some(out) = out {
        write_atomic(out, table.as_bytes())?;
        write_json(&out.with_extension("json"), &cmp)?;
    }
    print!("{table}");
    Ok(())
}

fn make_suite_cmd(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let dir = out.canonicalize()?;
    let (suite, paths) = write_suite(&dir)?;
    let mut cfg = RunConfig {
        repo_root: paths.repo.clone(),
        ..RunConfig::default()
    };
    cfg.providers.mock_oracle = Some(paths.oracle.clone());
    let config_path = dir.join("config.toml");
    write_atomic(&config_path, toml::to_string(&cfg)?.as_bytes())?;
    eprintln!(
        "wrote {} tasks to {}; settings in {}",
        suite.tasks.len(),
        paths.tasks.display(),
        config_path.display()
    );
    Ok(())
}
