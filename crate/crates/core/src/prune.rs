//! Test-time static top-k pruning of query and document vectors.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::par;
use crate::sparse::SparseVector;

/// Per-side pruning budgets; 0 leaves that side unpruned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub qk: usize,
    pub dk: usize,
}

/// Keeps the `k` highest-weight terms; `k == 0` is the identity.
pub fn prune(vector: &SparseVector, k: usize) -> SparseVector {
    if k == 0 {
        vector.clone()
    } else {
        vector.top_k(k)
    }
}

/// Running L0 sums; merging two summaries is order-independent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PruneSummary {
    pub vectors: u64,
    pub l0_before: u64,
    pub l0_after: u64,
}

impl PruneSummary {
    pub fn record(&mut self, before: usize, after: usize) {
        self.vectors += 1;
        self.l0_before += before as u64;
        self.l0_after += after as u64;
    }

    pub fn merge(self, other: PruneSummary) -> PruneSummary {
        PruneSummary {
            vectors: self.vectors + other.vectors,
            l0_before: self.l0_before + other.l0_before,
            l0_after: self.l0_after + other.l0_after,
        }
    }

    pub fn avg_before(&self) -> Option<f64> {
        (self.vectors > 0).then(|| self.l0_before as f64 / self.vectors as f64)
    }

    pub fn avg_after(&self) -> Option<f64> {
        (self.vectors > 0).then(|| self.l0_after as f64 / self.vectors as f64)
    }

    pub fn report(&self, k: usize) -> SummaryReport {
        SummaryReport {
            k,
            vectors: self.vectors,
            avg_l0_before: self.avg_before(),
            avg_l0_after: self.avg_after(),
        }
    }
}

/// JSON form of a [`PruneSummary`]; averages are `null` for an empty stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub k: usize,
    pub vectors: u64,
    pub avg_l0_before: Option<f64>,
    pub avg_l0_after: Option<f64>,
}

/// Prunes a stream, stopping at the first failed record.
pub fn prune_corpus<I>(vectors: I, k: usize) -> Result<(Vec<SparseVector>, PruneSummary)>
where
    I: IntoIterator<Item = Result<SparseVector>>,
{
    let mut summary = PruneSummary::default();
    let mut out = Vec::new();
    for v in vectors {
        let v = v?;
        let p = prune(&v, k);
        summary.record(v.l0(), p.l0());
        out.push(p);
    }
    Ok((out, summary))
}

/// In-memory variant, parallel over vectors.
pub fn prune_all(vectors: &[SparseVector], k: usize) -> (Vec<SparseVector>, PruneSummary) {
    let pruned = par::map(vectors, |v| prune(v, k));
    let summary = vectors
        .iter()
        .zip(&pruned)
        .fold(PruneSummary::default(), |mut s, (a, b)| {
            s.record(a.l0(), b.l0());
            s
        });
    (pruned, summary)
}
