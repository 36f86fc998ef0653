//! Score-distribution diagnostics for logit vectors and sparse representations.
//!
//! Standard deviations use the population convention unless a caller asks
//! for [`StdConvention::Sample`].

use std::collections::BTreeMap;

use serde::Serialize;

use crate::encode::{pool, LogitMatrix};
use crate::error::{Error, Result};
use crate::par;
use crate::sparse::SparseVector;

/// Rows per shard for the parallel accumulators. Fixed so sums never depend
/// on the worker count.
const SHARD_ROWS: usize = 1024;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StdConvention {
    #[default]
    Population,
    Sample,
}

/// Streaming count / mean / sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64,
        }
    }

    /// `None` when empty; a sample std of one value is 0.
    pub fn std(&self, conv: StdConvention) -> Option<f64> {
        let denom = match conv {
            StdConvention::Population => self.n,
            StdConvention::Sample => self.n.saturating_sub(1).max(1),
        };
        (self.n > 0).then(|| (self.m2.max(0.0) / denom as f64).sqrt())
    }

    pub fn collect<I: IntoIterator<Item = f64>>(values: I) -> Moments {
        let mut m = Moments::default();
        values.into_iter().for_each(|v| m.push(v));
        m
    }
}

/// A score row fed to [`LogitAccumulator`].
#[derive(Debug, Clone, Copy)]
pub enum ScoreRow<'a> {
    /// Every index appears.
    Dense(&'a [f64]),
    /// Only stored entries appear.
    Sparse(&'a SparseVector),
}

/// Per-logit-index score moments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogitAccumulator {
    per_index: Vec<Moments>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogitScoreStd {
    pub std: f64,
    pub logit_cnt: usize,
}

impl LogitAccumulator {
    fn slot(&mut self, idx: usize) -> &mut Moments {
        if idx >= self.per_index.len() {
            self.per_index.resize(idx + 1, Moments::default());
        }
        &mut self.per_index[idx]
    }

    pub fn add(&mut self, row: ScoreRow<'_>) {
        match row {
            ScoreRow::Dense(scores) => {
                for (i, &s) in scores.iter().enumerate() {
                    self.slot(i).push(s);
                }
            }
            ScoreRow::Sparse(v) => {
                for &(t, w) in v.entries() {
                    self.slot(t as usize).push(w as f64);
                }
            }
        }
    }

    pub fn merge(mut self, other: LogitAccumulator) -> LogitAccumulator {
        if other.per_index.len() > self.per_index.len() {
            self.per_index.resize(other.per_index.len(), Moments::default());
        }
        for (a, b) in self.per_index.iter_mut().zip(other.per_index) {
            *a = a.merge(b);
        }
        self
    }

    /// Occurrence count per index.
    pub fn occurrences(&self) -> impl Iterator<Item = u64> + '_ {
        self.per_index.iter().map(|m| m.n)
    }

    /// Unweighted mean of per-index std over indices seen at least `threshold` times.
    pub fn finish(&self, threshold: u64, conv: StdConvention) -> Option<LogitScoreStd> {
        let stds: Vec<f64> = self
            .per_index
            .iter()
            .filter(|m| m.n > 0 && m.n >= threshold)
            .filter_map(|m| m.std(conv))
            .collect();
        (!stds.is_empty()).then(|| LogitScoreStd {
            std: stds.iter().sum::<f64>() / stds.len() as f64,
            logit_cnt: stds.len(),
        })
    }
}

/// Mean over logit indices of the std of that index's scores where it appears.
pub fn logit_score_std(rows: &[ScoreRow<'_>], threshold: u64, conv: StdConvention) -> Option<LogitScoreStd> {
    accumulate(rows).finish(threshold, conv)
}

pub fn accumulate(rows: &[ScoreRow<'_>]) -> LogitAccumulator {
    par::map_chunks(rows, SHARD_ROWS, |shard| {
        let mut acc = LogitAccumulator::default();
        shard.iter().for_each(|r| acc.add(*r));
        acc
    })
    .into_iter()
    .fold(LogitAccumulator::default(), LogitAccumulator::merge)
}

/// How many of each document's highest scores enter [`doc_score_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TopK {
    K(usize),
    All,
}

impl TopK {
    pub const REPORTED: [TopK; 3] = [TopK::K(10), TopK::K(100), TopK::All];

    pub fn label(self) -> String {
        match self {
            TopK::K(k) => k.to_string(),
            TopK::All => "all".to_string(),
        }
    }
}

/// Per-document mean and std of its top-k scores, each averaged over documents.
pub fn doc_score_stats<S: AsRef<[f64]> + Sync>(
    docs: &[S],
    topk: TopK,
    conv: StdConvention,
) -> Result<Option<(f64, f64)>> {
    if docs.is_empty() {
        return Ok(None);
    }
    if let Some(i) = docs.iter().position(|d| d.as_ref().is_empty()) {
        return Err(Error::validation(format!("document {i} has no scores")));
    }
    if let TopK::K(0) = topk {
        return Err(Error::validation("top-k must be at least 1"));
    }
    let per_doc = par::map(docs, |d| {
        let mut scores = d.as_ref().to_vec();
        if let TopK::K(k) = topk {
            if scores.len() > k {
                scores.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
                scores.truncate(k);
            }
        }
        let m = Moments::collect(scores);
        (m.mean, m.std(conv).unwrap_or(0.0))
    });
    let n = per_doc.len() as f64;
    let avg = per_doc.iter().map(|p| p.0).sum::<f64>() / n;
    let std = per_doc.iter().map(|p| p.1).sum::<f64>() / n;
    Ok(Some((avg, std)))
}

/// Count of entries `>= 0` per token row, reported as mean and std over rows.
pub fn non_neg_terms_stats<S: AsRef<[f64]> + Sync>(rows: &[S], conv: StdConvention) -> Option<(f64, f64)> {
    let counts = par::map(rows, |r| r.as_ref().iter().filter(|&&s| s >= 0.0).count());
    let m = Moments::collect(counts.into_iter().map(|c| c as f64));
    m.std(conv).map(|s| (m.mean, s))
}

/// Std of per-vector term counts.
pub fn l0_std(vectors: &[SparseVector], conv: StdConvention) -> Option<f64> {
    Moments::collect(vectors.iter().map(|v| v.l0() as f64)).std(conv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Dense per-token logit rows.
    Logit,
    /// Sparse term-weight vectors.
    Sparse,
}

/// Field names follow the usual statistic labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub kind: InputKind,
    pub std_convention: StdConvention,
    pub term_occ_threshold: u64,
    #[serde(rename = "logit-score-std")]
    pub logit_score_std: Option<f64>,
    #[serde(rename = "logit-cnt")]
    pub logit_cnt: usize,
    #[serde(rename = "doc-score-avg")]
    pub doc_score_avg: BTreeMap<String, Option<f64>>,
    #[serde(rename = "doc-score-std")]
    pub doc_score_std: BTreeMap<String, Option<f64>>,
    #[serde(rename = "non-neg-terms-avg")]
    pub non_neg_terms_avg: Option<f64>,
    #[serde(rename = "non-neg-terms-std")]
    pub non_neg_terms_std: Option<f64>,
    #[serde(rename = "L0-std")]
    pub l0_std: Option<f64>,
    pub documents: usize,
}

type ByTopK = BTreeMap<String, Option<f64>>;

fn doc_score_maps<S: AsRef<[f64]> + Sync>(docs: &[S], conv: StdConvention) -> Result<(ByTopK, ByTopK)> {
    let mut avg = BTreeMap::new();
    let mut std = BTreeMap::new();
    for k in TopK::REPORTED {
        let stats = doc_score_stats(docs, k, conv)?;
        avg.insert(k.label(), stats.map(|s| s.0));
        std.insert(k.label(), stats.map(|s| s.1));
    }
    Ok((avg, std))
}

/// Diagnostics over per-document logit matrices. Doc scores are the pooled
/// weights of each document; documents pooling to nothing are skipped there.
pub fn diagnose_logits(docs: &[LogitMatrix], threshold: u64, conv: StdConvention) -> Result<DiagnosticsReport> {
    let rows: Vec<&[f64]> = docs.iter().flat_map(|m| m.rows()).collect();
    let score_rows: Vec<ScoreRow<'_>> = rows.iter().map(|r| ScoreRow::Dense(r)).collect();
    let logit = logit_score_std(&score_rows, threshold, conv);
    let pooled: Vec<SparseVector> = par::map(docs, pool);
    let doc_scores: Vec<Vec<f64>> = pooled
        .iter()
        .filter(|v| !v.is_empty())
        .map(|v| v.entries().iter().map(|&(_, w)| w as f64).collect())
        .collect();
    let (avg, std) = doc_score_maps(&doc_scores, conv)?;
    let nn = non_neg_terms_stats(&rows, conv);
    Ok(DiagnosticsReport {
        kind: InputKind::Logit,
        std_convention: conv,
        term_occ_threshold: threshold,
        logit_score_std: logit.map(|l| l.std),
        logit_cnt: logit.map_or(0, |l| l.logit_cnt),
        doc_score_avg: avg,
        doc_score_std: std,
        non_neg_terms_avg: nn.map(|n| n.0),
        non_neg_terms_std: nn.map(|n| n.1),
        l0_std: l0_std(&pooled, conv),
        documents: docs.len(),
    })
}

/// Diagnostics over sparse vectors; non-negative term counts need dense rows
/// and are left absent.
pub fn diagnose_sparse(vectors: &[SparseVector], threshold: u64, conv: StdConvention) -> Result<DiagnosticsReport> {
    let rows: Vec<ScoreRow<'_>> = vectors.iter().map(ScoreRow::Sparse).collect();
    let logit = logit_score_std(&rows, threshold, conv);
    let doc_scores: Vec<Vec<f64>> = vectors
        .iter()
        .filter(|v| !v.is_empty())
        .map(|v| v.entries().iter().map(|&(_, w)| w as f64).collect())
        .collect();
    let (avg, std) = doc_score_maps(&doc_scores, conv)?;
    Ok(DiagnosticsReport {
        kind: InputKind::Sparse,
        std_convention: conv,
        term_occ_threshold: threshold,
        logit_score_std: logit.map(|l| l.std),
        logit_cnt: logit.map_or(0, |l| l.logit_cnt),
        doc_score_avg: avg,
        doc_score_std: std,
        non_neg_terms_avg: None,
        non_neg_terms_std: None,
        l0_std: l0_std(vectors, conv),
        documents: vectors.len(),
    })
}
