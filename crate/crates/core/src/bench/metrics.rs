//! Per-pair completion metrics.

use std::collections::{BTreeSet, HashMap};

use crate::corpus::{identifiers, Language};

use super::IdMatchMode;

/// Trims and collapses whitespace runs to single spaces.
pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Exact match after whitespace normalization.
pub fn code_em(pred: &str, gold: &str) -> bool {
    normalize_ws(pred) == normalize_ws(gold)
}

/// 1 − lev(a, b) / max(|a|, |b|) over characters; 1 when both are empty.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
}

/// Edit similarity of the whitespace-normalized strings.
pub fn code_es(pred: &str, gold: &str) -> f64 {
    edit_similarity(&normalize_ws(pred), &normalize_ws(gold))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdScore {
    pub em: bool,
    pub f1: f64,
}

fn counts(ids: &[String]) -> HashMap<&str, usize> {
    let mut map = HashMap::new();
    for id in ids {
        *map.entry(id.as_str()).or_insert(0) += 1;
    }
    map
}

fn f1(overlap: usize, pred: usize, gold: usize) -> f64 {
    if pred == 0 && gold == 0 {
        return 1.0;
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / pred as f64;
    let r = overlap as f64 / gold as f64;
    2.0 * p * r / (p + r)
}

/// Compares two identifier lists.
pub fn id_match_lists(pred: &[String], gold: &[String], mode: IdMatchMode) -> IdScore {
    match mode {
        IdMatchMode::Set => {
            let p: BTreeSet<&String> = pred.iter().collect();
            let g: BTreeSet<&String> = gold.iter().collect();
            IdScore {
                em: p == g,
                f1: f1(p.intersection(&g).count(), p.len(), g.len()),
            }
        }
        IdMatchMode::Multiset | IdMatchMode::Sequence => {
            let (p, g) = (counts(pred), counts(gold));
            let overlap = p
                .iter()
                .map(|(id, n)| (*n).min(g.get(id).copied().unwrap_or(0)))
                .sum();
            let em = if mode == IdMatchMode::Sequence {
                pred == gold
            } else {
                p == g
            };
            IdScore {
                em,
                f1: f1(overlap, pred.len(), gold.len()),
            }
        }
    }
}

/// Identifier match between a prediction and the ground truth.
pub fn id_match(pred: &str, gold: &str, language: Language, mode: IdMatchMode) -> IdScore {
    id_match_lists(
        &identifiers(pred, language),
        &identifiers(gold, language),
        mode,
    )
}
