//! Sparse term-weight vectors and their JSONL encoding.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Term id into the expanded vocabulary.
pub type TermId = u32;

/// Encoded query or document: strictly positive weights keyed by term id,
/// stored in ascending term order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    id: String,
    entries: Vec<(TermId, f32)>,
}

impl SparseVector {
    /// Builds a vector, dropping non-positive weights. Duplicate terms and
    /// non-finite weights are rejected.
    pub fn new(id: impl Into<String>, entries: impl IntoIterator<Item = (TermId, f32)>) -> Result<Self> {
        let mut entries: Vec<(TermId, f32)> = entries.into_iter().collect();
        if entries.iter().any(|(_, w)| !w.is_finite()) {
            return Err(Error::validation("sparse vector weights must be finite"));
        }
        entries.retain(|&(_, w)| w > 0.0);
        entries.sort_unstable_by_key(|&(t, _)| t);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::validation("duplicate term id in sparse vector"));
        }
        Ok(Self { id: id.into(), entries })
    }

    /// Caller guarantees sorted, unique, strictly positive entries.
    pub(crate) fn from_sorted(id: String, entries: Vec<(TermId, f32)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|&(_, w)| w > 0.0));
        Self { id, entries }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn entries(&self) -> &[(TermId, f32)] {
        &self.entries
    }

    /// Number of stored (non-zero) terms.
    pub fn l0(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight(&self, term: TermId) -> Option<f32> {
        self.entries
            .binary_search_by_key(&term, |&(t, _)| t)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn max_term(&self) -> Option<TermId> {
        self.entries.last().map(|&(t, _)| t)
    }

    /// Keeps the `k` largest weights; equal weights prefer the lower term id.
    pub fn top_k(&self, k: usize) -> SparseVector {
        if self.entries.len() <= k {
            return self.clone();
        }
        let mut kept = self.entries.clone();
        if k > 0 {
            kept.select_nth_unstable_by(k - 1, rank_order);
        }
        kept.truncate(k);
        kept.sort_unstable_by_key(|&(t, _)| t);
        SparseVector::from_sorted(self.id.clone(), kept)
    }

    /// Weights rounded to the serialized precision.
    pub fn quantized(&self) -> SparseVector {
        let entries = self.entries.iter().map(|&(t, w)| (t, round_sig6(w))).collect();
        SparseVector::from_sorted(self.id.clone(), entries)
    }

    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(&JsonOut(self)).expect("sparse vector serializes");
        s.push('\n');
        s
    }

    pub fn from_json_line(line: &str) -> std::result::Result<Self, String> {
        let raw: JsonIn = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let mut entries = Vec::with_capacity(raw.v.len());
        for (k, w) in raw.v {
            let t: TermId = k.parse().map_err(|_| format!("term id {k:?} is not an integer"))?;
            if w.is_nan() || w <= 0.0 {
                return Err(format!("weight for term {t} must be positive"));
            }
            entries.push((t, w));
        }
        SparseVector::new(raw.id, entries).map_err(|e| e.to_string())
    }
}

/// Descending weight, then ascending term id.
pub(crate) fn rank_order(a: &(TermId, f32), b: &(TermId, f32)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Rounds to 6 significant decimal digits.
pub fn round_sig6(w: f32) -> f32 {
    if w == 0.0 || !w.is_finite() {
        return w;
    }
    format!("{w:.5e}").parse().expect("formatted float parses")
}

struct JsonOut<'a>(&'a SparseVector);

impl Serialize for JsonOut<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        struct Weights<'a>(&'a [(TermId, f32)]);
        impl Serialize for Weights<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut map = s.serialize_map(Some(self.0.len()))?;
                for &(t, w) in self.0 {
                    map.serialize_entry(&t.to_string(), &round_sig6(w))?;
                }
                map.end()
            }
        }
        let mut map = s.serialize_map(Some(2))?;
        map.serialize_entry("id", &self.0.id)?;
        map.serialize_entry("v", &Weights(&self.0.entries))?;
        map.end()
    }
}

#[derive(Deserialize)]
struct JsonIn {
    id: String,
    v: HashMap<String, f32>,
}

/// Writes vectors as JSONL, one per line.
pub fn write_jsonl<'a, W, I>(mut out: W, vectors: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a SparseVector>,
{
    for v in vectors {
        out.write_all(v.to_json_line().as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Streams vectors from JSONL; errors carry the zero-based record index.
pub fn read_jsonl<R: BufRead>(reader: R) -> impl Iterator<Item = Result<SparseVector>> {
    reader
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|(record, line)| {
            let line = line.map_err(|source| Error::Record { record, source })?;
            SparseVector::from_json_line(&line).map_err(|reason| Error::parse("sparse vector", record + 1, reason))
        })
}

pub fn read_all_jsonl<R: BufRead>(reader: R) -> Result<Vec<SparseVector>> {
    read_jsonl(reader).collect()
}
