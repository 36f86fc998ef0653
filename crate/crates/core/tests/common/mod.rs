//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use sparseforge::{prune, SparseVector};

/// Dense brute-force dot product ranking. Query terms are visited in
/// ascending order so the floating sum matches term-at-a-time accumulation.
/// Only documents sharing a term with the query are ranked.
pub fn brute_force_ranking(docs: &[SparseVector], query: &SparseVector, top: usize) -> Vec<(u64, f64)> {
    let mut scored: Vec<(u64, f64)> = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        let dense: HashMap<u32, f32> = d.entries().iter().copied().collect();
        let mut s = 0.0f64;
        let mut any = false;
        for &(t, qw) in query.entries() {
            if let Some(&dw) = dense.get(&t) {
                s += qw as f64 * dw as f64;
                any = true;
            }
        }
        if any {
            scored.push((i as u64, s));
        }
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(top);
    scored
}

/// Matched distinct query terms per document.
pub fn overlap_counts(docs: &[SparseVector], query: &SparseVector) -> Vec<usize> {
    docs.iter()
        .map(|d| {
            query
                .entries()
                .iter()
                .filter(|(t, _)| d.entries().iter().any(|(u, _)| u == t))
                .count()
        })
        .collect()
}

/// Top-k by full sort: weight descending, term ascending, then re-sorted by term.
pub fn sort_truncate(v: &SparseVector, k: usize) -> Vec<(u32, f32)> {
    let mut e = v.entries().to_vec();
    e.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    e.truncate(k);
    e.sort_by_key(|x| x.0);
    e
}

/// Two-pass population mean / variance.
pub fn two_pass(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    let scale = a.abs().max(b.abs());
    scale == 0.0 || (a - b).abs() <= tol * scale
}

/// Kahan-compensated dot product.
pub fn kahan_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let term = x * y - c;
        let t = sum + term;
        c = (t - sum) - term;
        sum = t;
    }
    sum
}

/// Postings lengths recounted straight from the raw vectors.
pub fn recount_flops(docs: &[SparseVector], dk: usize, queries: &[SparseVector]) -> f64 {
    let mut df: HashMap<u32, u64> = HashMap::new();
    for d in docs {
        for &(t, _) in prune(d, dk).entries() {
            *df.entry(t).or_default() += 1;
        }
    }
    let num: u64 = queries
        .iter()
        .flat_map(|q| q.entries().iter().map(|(t, _)| df.get(t).copied().unwrap_or(0)))
        .sum();
    num as f64 / (queries.len() as f64 * docs.len() as f64)
}

/// Dense accumulation: scores per index, then a two-pass std.
pub fn oracle_logit_std(rows: &[Vec<(usize, f64)>], threshold: usize) -> Option<(f64, usize)> {
    let mut by_index: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in rows {
        for &(i, s) in r {
            by_index.entry(i).or_default().push(s);
        }
    }
    let stds: Vec<f64> = by_index
        .values()
        .filter(|v| v.len() >= threshold)
        .map(|v| two_pass(v).1.sqrt())
        .collect();
    (!stds.is_empty()).then(|| (stds.iter().sum::<f64>() / stds.len() as f64, stds.len()))
}
