//! Effectiveness and efficiency measurement: the FLOPS traversal metric,
//! MRR@k, recall@k and average L0 per side.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::index::{InvertedIndex, SearchParams};
use crate::vocab::Normalization;

/// Relevance labels: per query, positive and labeled-negative document ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QrelSet {
    queries: BTreeMap<String, Judgments>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Judgments {
    pub positives: HashSet<String>,
    pub negatives: HashSet<String>,
}

impl QrelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, qid: &str, doc: &str, positive: bool) -> Result<()> {
        let j = self.queries.entry(qid.to_string()).or_default();
        let (into, other) = if positive {
            (&mut j.positives, &j.negatives)
        } else {
            (&mut j.negatives, &j.positives)
        };
        if other.contains(doc) {
            return Err(Error::validation(format!(
                "document {doc:?} is both positive and negative for query {qid:?}"
            )));
        }
        into.insert(doc.to_string());
        Ok(())
    }

    /// Reads `qid \t docid \t rel` lines with rel 1 (positive) or -1 (labeled negative).
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut set = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| Error::Record { record: i, source })?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse("qrels", i + 1, "expected qid, docid and rel"));
            }
            let positive = match fields[2].trim() {
                "1" => true,
                "-1" => false,
                other => {
                    return Err(Error::parse(
                        "qrels",
                        i + 1,
                        format!("relevance {other:?} is not 1 or -1"),
                    ))
                }
            };
            set.add(fields[0], fields[1], positive)
                .map_err(|e| Error::parse("qrels", i + 1, e))?;
        }
        Ok(set)
    }

    pub fn get(&self, qid: &str) -> Option<&Judgments> {
        self.queries.get(qid)
    }

    /// Queries with at least one positive, in qid order.
    pub fn evaluated(&self) -> impl Iterator<Item = (&str, &Judgments)> {
        self.queries
            .iter()
            .filter(|(_, j)| !j.positives.is_empty())
            .map(|(q, j)| (q.as_str(), j))
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Ranked external doc ids per query id.
pub type Run = HashMap<String, Vec<String>>;

/// A metric averaged over evaluated queries, plus queries absent from the run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricValue {
    pub value: f64,
    pub queries: usize,
    pub missing: Vec<String>,
}

/// Sum of postings lengths over every query term, normalized by `|Q| · |D|`.
///
/// Query vectors should already be pruned; terms absent from the index add 0.
pub fn flops_metric(index: &InvertedIndex, queries: &[crate::SparseVector]) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::validation("FLOPS needs at least one query"));
    }
    if index.doc_count() == 0 {
        return Err(Error::validation("FLOPS needs a non-empty corpus"));
    }
    let touched: u64 = queries
        .iter()
        .flat_map(|q| q.entries())
        .map(|&(t, _)| index.postings_len(t) as u64)
        .sum();
    Ok(touched as f64 / (queries.len() as f64 * index.doc_count() as f64))
}

fn per_query<F>(run: &Run, qrels: &QrelSet, mut score: F) -> MetricValue
where
    F: FnMut(&[String], &Judgments) -> f64,
{
    let mut total = 0.0;
    let mut queries = 0;
    let mut missing = Vec::new();
    for (qid, j) in qrels.evaluated() {
        queries += 1;
        match run.get(qid) {
            Some(ranking) => total += score(ranking, j),
            None => missing.push(qid.to_string()),
        }
    }
    MetricValue {
        value: if queries == 0 { 0.0 } else { total / queries as f64 },
        queries,
        missing,
    }
}

pub fn reciprocal_rank(ranking: &[String], positives: &HashSet<String>, k: usize) -> f64 {
    ranking
        .iter()
        .take(k)
        .position(|d| positives.contains(d))
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

pub fn recall(ranking: &[String], positives: &HashSet<String>, k: usize) -> f64 {
    if positives.is_empty() {
        return 0.0;
    }
    let mut seen = HashSet::new();
    let hits = ranking
        .iter()
        .take(k)
        .filter(|d| positives.contains(*d) && seen.insert(d.as_str()))
        .count();
    hits as f64 / positives.len() as f64
}

/// Mean reciprocal rank of the first positive within the top `k`.
pub fn mrr_at_k(run: &Run, qrels: &QrelSet, k: usize) -> MetricValue {
    per_query(run, qrels, |r, j| reciprocal_rank(r, &j.positives, k))
}

/// Mean fraction of positives found within the top `k`.
pub fn recall_at_k(run: &Run, qrels: &QrelSet, k: usize) -> MetricValue {
    per_query(run, qrels, |r, j| recall(r, &j.positives, k))
}

/// Fraction of distinct query tokens that occur in the title.
pub fn matched_term_ratio(query: &str, title: &str, norm: Normalization) -> Result<f64> {
    let q: HashSet<_> = norm.tokens(query).collect();
    if q.is_empty() {
        return Err(Error::validation("query has no tokens"));
    }
    let t: HashSet<_> = norm.tokens(title).collect();
    Ok(q.iter().filter(|tok| t.contains(*tok)).count() as f64 / q.len() as f64)
}

/// Splits indices into low / middle / high buckets of near-equal size by value.
///
/// Equal values keep input order; earlier buckets take the remainder.
pub fn ratio_buckets(ratios: &[f64]) -> [Vec<usize>; 3] {
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| ratios[a].total_cmp(&ratios[b]).then(a.cmp(&b)));
    let n = order.len();
    let sizes = [
        n / 3 + usize::from(!n.is_multiple_of(3)),
        n / 3 + usize::from(n % 3 > 1),
        n / 3,
    ];
    let mut it = order.into_iter();
    sizes.map(|s| it.by_ref().take(s).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryRow {
    pub qid: String,
    pub l0_q: usize,
    pub matched: usize,
    #[serde(rename = "RR@10")]
    pub rr_at_10: f64,
    #[serde(rename = "R@10")]
    pub r_at_10: f64,
    #[serde(rename = "R@100")]
    pub r_at_100: f64,
}

/// Report columns follow the usual results table: qk, dk, L0_q, L0_d, FLOPS, MRR@10, R@10.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub qk: usize,
    pub dk: usize,
    #[serde(rename = "L0_q")]
    pub avg_l0_q: f64,
    #[serde(rename = "L0_d")]
    pub avg_l0_d: f64,
    #[serde(rename = "FLOPS")]
    pub flops: f64,
    #[serde(rename = "MRR@10")]
    pub mrr_at_10: f64,
    #[serde(rename = "R@10")]
    pub r_at_10: f64,
    #[serde(rename = "R@100")]
    pub r_at_100: f64,
    pub queries: usize,
    pub missing_queries: Vec<String>,
    pub per_query: Vec<QueryRow>,
}

/// Prunes queries at `qk`, retrieves the top 100 by dot product and scores
/// the run against `qrels`.
pub fn evaluate(
    index: &InvertedIndex,
    queries: &[crate::SparseVector],
    qrels: &QrelSet,
    qk: usize,
) -> Result<EvalReport> {
    let pruned: Vec<_> = queries.iter().map(|q| crate::prune::prune(q, qk)).collect();
    let flops = flops_metric(index, &pruned)?;
    let results = index.search_batch(&pruned, &SearchParams::dot(100))?;

    let mut run = Run::with_capacity(queries.len());
    for (q, r) in pruned.iter().zip(&results) {
        let ranking = r.hits.iter().map(|h| index.doc_name(h.doc).to_string()).collect();
        if run.insert(q.id().to_string(), ranking).is_some() {
            return Err(Error::validation(format!("query id {:?} appears twice", q.id())));
        }
    }

    let mut per_query_rows = Vec::new();
    for (q, r) in pruned.iter().zip(&results) {
        if let Some(j) = qrels.get(q.id()).filter(|j| !j.positives.is_empty()) {
            let ranking = &run[q.id()];
            per_query_rows.push(QueryRow {
                qid: q.id().to_string(),
                l0_q: q.l0(),
                matched: r.matched_count,
                rr_at_10: reciprocal_rank(ranking, &j.positives, 10),
                r_at_10: recall(ranking, &j.positives, 10),
                r_at_100: recall(ranking, &j.positives, 100),
            });
        }
    }

    let mrr = mrr_at_k(&run, qrels, 10);
    let l0_total: u64 = pruned.iter().map(|q| q.l0() as u64).sum();
    let doc_total: u64 = index.doc_l0().iter().map(|&n| n as u64).sum();
    Ok(EvalReport {
        qk,
        dk: index.manifest().dk,
        avg_l0_q: l0_total as f64 / pruned.len() as f64,
        avg_l0_d: doc_total as f64 / index.doc_count() as f64,
        flops,
        mrr_at_10: mrr.value,
        r_at_10: recall_at_k(&run, qrels, 10).value,
        r_at_100: recall_at_k(&run, qrels, 100).value,
        queries: mrr.queries,
        missing_queries: mrr.missing,
        per_query: per_query_rows,
    })
}
