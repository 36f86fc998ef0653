//! Inverted index over sparse document vectors with dot-product retrieval
//! and a Boolean term-overlap threshold mode.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::prune::prune;
use crate::sparse::{SparseVector, TermId};

/// Internal document id: the document's position in the build input.
pub type DocId = u64;

const MAGIC: &[u8; 4] = b"SFIX";
const VERSION: u32 = 1;

/// Build parameters persisted alongside the postings.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub dk: usize,
    #[serde(default)]
    pub vocab_hash: Option<String>,
    #[serde(default)]
    pub vocab_size: Option<usize>,
    /// External document ids, indexed by [`DocId`].
    pub doc_names: Vec<String>,
}

/// Vocabulary identity recorded at build time and checked at query time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabStamp {
    pub hash: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    manifest: Manifest,
    terms: Vec<TermId>,
    postings: Vec<Vec<(DocId, f32)>>,
    doc_l0: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchMode {
    Dot,
    /// Keep only documents matching at least this fraction of the distinct query terms.
    OverlapThreshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    pub qk: usize,
    pub top_n: usize,
    pub mode: MatchMode,
    /// When set, must equal the hash the index was built with.
    pub vocab_hash: Option<String>,
}

impl SearchParams {
    pub fn dot(top_n: usize) -> Self {
        Self {
            qk: 0,
            top_n,
            mode: MatchMode::Dot,
            vocab_hash: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub doc: DocId,
    pub score: f64,
}

/// Ranked hits, score descending then doc id ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchResult {
    pub hits: Vec<Hit>,
    /// Documents sharing at least one term with the query, before any threshold.
    pub matched_count: usize,
    /// Documents left after the overlap threshold (equal to `matched_count` in dot mode).
    pub survivors: usize,
}

/// Postings-length statistics over non-empty lists (population variance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PostingsStats {
    pub terms: usize,
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
}

/// Orders hits by descending score, ties to the lower doc id.
pub fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    b.score.total_cmp(&a.score).then(a.doc.cmp(&b.doc))
}

impl InvertedIndex {
    /// Prunes each document at `dk` (0 = unpruned) and inverts the corpus.
    pub fn build(docs: &[SparseVector], dk: usize, vocab: Option<&VocabStamp>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        for d in docs {
            if !seen.insert(d.id()) {
                return Err(Error::DuplicateDoc(d.id().to_string()));
            }
            if let (Some(stamp), Some(max)) = (vocab, d.max_term()) {
                if max as usize >= stamp.size {
                    return Err(Error::VocabMismatch(format!(
                        "document {:?} uses term {max} outside a vocabulary of {}",
                        d.id(),
                        stamp.size
                    )));
                }
            }
        }

        let pruned = par::map(docs, |d| prune(d, dk));
        let chunk = par::chunk_size(pruned.len());
        let shards = par::map_chunks(&pruned, chunk, |shard| {
            let mut map: BTreeMap<TermId, Vec<(usize, f32)>> = BTreeMap::new();
            for (offset, d) in shard.iter().enumerate() {
                for &(t, w) in d.entries() {
                    map.entry(t).or_default().push((offset, w));
                }
            }
            map
        });

        // Shards cover ascending doc ranges, so appending in shard order keeps lists sorted.
        let mut merged: BTreeMap<TermId, Vec<(DocId, f32)>> = BTreeMap::new();
        for (i, shard) in shards.into_iter().enumerate() {
            let base = (i * chunk) as DocId;
            for (t, list) in shard {
                merged
                    .entry(t)
                    .or_default()
                    .extend(list.into_iter().map(|(o, w)| (base + o as DocId, w)));
            }
        }
        let (terms, postings) = merged.into_iter().unzip();

        let manifest = Manifest {
            dk,
            vocab_hash: vocab.map(|v| v.hash.clone()),
            vocab_size: vocab.map(|v| v.size),
            doc_names: docs.iter().map(|d| d.id().to_string()).collect(),
        };
        let index = Self {
            doc_l0: pruned.iter().map(|d| d.l0() as u32).collect(),
            manifest,
            terms,
            postings,
        };
        debug_assert_eq!(
            index.total_postings(),
            index.doc_l0.iter().map(|&n| n as u64).sum::<u64>()
        );
        Ok(index)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn doc_count(&self) -> usize {
        self.manifest.doc_names.len()
    }

    pub fn doc_name(&self, doc: DocId) -> &str {
        &self.manifest.doc_names[doc as usize]
    }

    /// L0 of every document after build-time pruning.
    pub fn doc_l0(&self) -> &[u32] {
        &self.doc_l0
    }

    pub fn terms(&self) -> &[TermId] {
        &self.terms
    }

    pub fn postings(&self, term: TermId) -> &[(DocId, f32)] {
        match self.terms.binary_search(&term) {
            Ok(i) => &self.postings[i],
            Err(_) => &[],
        }
    }

    pub fn postings_len(&self, term: TermId) -> usize {
        self.postings(term).len()
    }

    pub fn iter_postings(&self) -> impl Iterator<Item = (TermId, &[(DocId, f32)])> {
        self.terms.iter().copied().zip(self.postings.iter().map(Vec::as_slice))
    }

    pub fn total_postings(&self) -> u64 {
        self.postings.iter().map(|p| p.len() as u64).sum()
    }

    pub fn postings_stats(&self) -> Option<PostingsStats> {
        let lens: Vec<f64> = self
            .postings
            .iter()
            .filter(|p| !p.is_empty())
            .map(|p| p.len() as f64)
            .collect();
        if lens.is_empty() {
            return None;
        }
        let n = lens.len() as f64;
        let mean = lens.iter().sum::<f64>() / n;
        let variance = lens.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
        Some(PostingsStats {
            terms: lens.len(),
            mean,
            variance,
            std: variance.sqrt(),
        })
    }

    fn check_query(&self, query: &SparseVector, params: &SearchParams) -> Result<()> {
        if params.top_n == 0 {
            return Err(Error::validation("top_n must be at least 1"));
        }
        if let MatchMode::OverlapThreshold(theta) = params.mode {
            if !(0.0..=1.0).contains(&theta) {
                return Err(Error::validation(format!("overlap threshold {theta} outside [0, 1]")));
            }
        }
        if let (Some(want), Some(have)) = (&params.vocab_hash, &self.manifest.vocab_hash) {
            if want != have {
                return Err(Error::VocabMismatch(format!(
                    "query vocabulary {want} differs from index vocabulary {have}"
                )));
            }
        }
        if let (Some(size), Some(max)) = (self.manifest.vocab_size, query.max_term()) {
            if max as usize >= size {
                return Err(Error::VocabMismatch(format!(
                    "query {:?} uses term {max} outside the indexed vocabulary of {size}",
                    query.id()
                )));
            }
        }
        Ok(())
    }

    /// Term-at-a-time retrieval in ascending term order.
    pub fn search(&self, query: &SparseVector, params: &SearchParams) -> Result<SearchResult> {
        self.check_query(query, params)?;
        let q = prune(query, params.qk);

        let mut scores = vec![0.0f64; self.doc_count()];
        let mut matched_terms = vec![0u32; self.doc_count()];
        let mut touched: Vec<DocId> = Vec::new();
        for &(t, qw) in q.entries() {
            for &(doc, dw) in self.postings(t) {
                let slot = doc as usize;
                if matched_terms[slot] == 0 {
                    touched.push(doc);
                }
                matched_terms[slot] += 1;
                scores[slot] += qw as f64 * dw as f64;
            }
        }
        let matched_count = touched.len();

        let distinct = q.l0() as f64;
        let mut hits: Vec<Hit> = touched
            .into_iter()
            .filter(|&doc| match params.mode {
                MatchMode::Dot => true,
                MatchMode::OverlapThreshold(theta) => matched_terms[doc as usize] as f64 / distinct >= theta,
            })
            .map(|doc| Hit {
                doc,
                score: scores[doc as usize],
            })
            .collect();
        let survivors = hits.len();

        if hits.len() > params.top_n {
            hits.select_nth_unstable_by(params.top_n - 1, hit_order);
            hits.truncate(params.top_n);
        }
        hits.sort_unstable_by(hit_order);
        Ok(SearchResult {
            hits,
            matched_count,
            survivors,
        })
    }

    /// Searches every query independently; order follows input.
    pub fn search_batch(&self, queries: &[SparseVector], params: &SearchParams) -> Result<Vec<SearchResult>> {
        par::try_map(queries, |q| self.search(q, params))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let mut buf = Vec::with_capacity(24 + manifest.len() + self.total_postings() as usize * 12);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.doc_count() as u64).to_le_bytes());
        buf.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        buf.extend_from_slice(&manifest);
        for (t, list) in self.iter_postings() {
            buf.extend_from_slice(&t.to_le_bytes());
            buf.extend_from_slice(&(list.len() as u64).to_le_bytes());
            for &(doc, w) in list {
                buf.extend_from_slice(&doc.to_le_bytes());
                buf.extend_from_slice(&w.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
        out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("missing SFIX magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported index version {version}")));
        }
        let doc_count = cur.u64()? as usize;
        let manifest_len = cur.u64()? as usize;
        let manifest: Manifest = serde_json::from_slice(cur.take(manifest_len)?)?;
        if manifest.doc_names.len() != doc_count {
            return Err(Error::Format(format!(
                "manifest lists {} documents, header says {doc_count}",
                manifest.doc_names.len()
            )));
        }

        let mut terms = Vec::new();
        let mut postings = Vec::new();
        let mut doc_l0 = vec![0u32; doc_count];
        while !cur.done() {
            let t = cur.u32()?;
            if terms.last().is_some_and(|&prev| prev >= t) {
                return Err(Error::Format(format!("term {t} out of ascending order")));
            }
            let len = cur.u64()? as usize;
            let mut list = Vec::with_capacity(len.min(doc_count));
            for _ in 0..len {
                let doc = cur.u64()?;
                let w = f32::from_le_bytes(cur.take(4)?.try_into().unwrap());
                if doc as usize >= doc_count {
                    return Err(Error::Format(format!("doc id {doc} out of range in term {t}")));
                }
                if list.last().is_some_and(|&(prev, _)| prev >= doc) {
                    return Err(Error::Format(format!("postings for term {t} not sorted by doc id")));
                }
                doc_l0[doc as usize] += 1;
                list.push((doc, w));
            }
            terms.push(t);
            postings.push(list);
        }
        Ok(Self {
            manifest,
            terms,
            postings,
            doc_l0,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated index at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Writes one query's hits as TREC run lines: `qid Q0 docid rank score tag`.
pub fn write_run<W: Write>(
    out: &mut W,
    qid: &str,
    result: &SearchResult,
    index: &InvertedIndex,
    tag: &str,
) -> Result<()> {
    for (rank, hit) in result.hits.iter().enumerate() {
        writeln!(
            out,
            "{qid} Q0 {} {} {} {tag}",
            index.doc_name(hit.doc),
            rank + 1,
            hit.score
        )?;
    }
    Ok(())
}
