//! Expanded unigram vocabulary and expanded MLM head construction.

mod head;
mod wordpiece;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::par;

pub use head::{expand_head, HeadMatrix};
pub use wordpiece::tokenize_wordpiece;

/// Prefix carried by WordPiece continuation pieces.
pub const CONTINUATION_PREFIX: &str = "##";

/// Base subword vocabulary; ids are line positions of the pieces.
#[derive(Debug, Clone)]
pub struct SubwordVocabulary {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
    mask_id: u32,
    unk_id: u32,
}

impl SubwordVocabulary {
    pub fn new(pieces: Vec<String>, mask_token: &str, unk_token: &str) -> Result<Self> {
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, piece) in pieces.iter().enumerate() {
            let id = u32::try_from(i).map_err(|_| Error::validation("subword vocabulary too large"))?;
            if index.insert(piece.clone(), id).is_some() {
                return Err(Error::validation(format!("duplicate subword piece {piece:?}")));
            }
        }
        let lookup = |tok: &str| {
            index
                .get(tok)
                .copied()
                .ok_or_else(|| Error::validation(format!("special token {tok:?} missing from subword vocabulary")))
        };
        let mask_id = lookup(mask_token)?;
        let unk_id = lookup(unk_token)?;
        Ok(Self {
            pieces,
            index,
            mask_id,
            unk_id,
        })
    }

    /// Reads a `vocab.txt`-style file: one piece per line, id = line number.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut pieces = Vec::new();
        for (line_no, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| Error::Record {
                record: line_no,
                source,
            })?;
            pieces.push(line.trim_end_matches('\r').to_string());
        }
        Self::new(pieces, "[MASK]", "[UNK]")
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn mask_id(&self) -> u32 {
        self.mask_id
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn continuation_prefix(&self) -> &'static str {
        CONTINUATION_PREFIX
    }
}

/// Token normalization applied before counting and lookup.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Normalization {
    pub case_fold: bool,
}

impl Normalization {
    pub fn apply<'a>(&self, token: &'a str) -> std::borrow::Cow<'a, str> {
        if self.case_fold {
            std::borrow::Cow::Owned(token.to_lowercase())
        } else {
            std::borrow::Cow::Borrowed(token)
        }
    }

    /// Whitespace split followed by normalization.
    pub fn tokens<'a>(&'a self, text: &'a str) -> impl Iterator<Item = std::borrow::Cow<'a, str>> + 'a {
        text.split_whitespace().map(move |t| self.apply(t))
    }
}

pub type UnigramCounts = HashMap<String, u64>;

/// Counts normalized whitespace unigrams over a stream of titles.
///
/// A failing record is reported with its zero-based index.
pub fn count_unigrams<I, S>(titles: I, norm: Normalization) -> Result<UnigramCounts>
where
    I: IntoIterator<Item = io::Result<S>>,
    S: AsRef<str>,
{
    let mut counts = UnigramCounts::new();
    for (record, title) in titles.into_iter().enumerate() {
        let title = title.map_err(|source| Error::Record { record, source })?;
        add_counts(&mut counts, title.as_ref(), norm);
    }
    Ok(counts)
}

/// Sharded counting over an in-memory corpus; partial maps are summed.
pub fn count_unigrams_sharded<S: AsRef<str> + Sync>(titles: &[S], norm: Normalization) -> UnigramCounts {
    let partials = par::map_chunks(titles, par::chunk_size(titles.len()), |chunk| {
        let mut counts = UnigramCounts::new();
        for t in chunk {
            add_counts(&mut counts, t.as_ref(), norm);
        }
        counts
    });
    partials.into_iter().fold(UnigramCounts::new(), merge_counts)
}

/// Sums two count maps. Commutative and associative.
pub fn merge_counts(mut into: UnigramCounts, from: UnigramCounts) -> UnigramCounts {
    if into.len() < from.len() {
        return merge_counts(from, into);
    }
    for (term, n) in from {
        *into.entry(term).or_insert(0) += n;
    }
    into
}

fn add_counts(counts: &mut UnigramCounts, title: &str, norm: Normalization) {
    for tok in norm.tokens(title) {
        if let Some(n) = counts.get_mut(tok.as_ref()) {
            *n += 1;
        } else {
            counts.insert(tok.into_owned(), 1);
        }
    }
}

/// The expanded vocabulary U: unigram terms ordered by descending frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedVocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    subwords: Vec<Vec<u32>>,
    frequency: Vec<u64>,
}

impl ExpandedVocabulary {
    /// Keeps the `target_size` most frequent terms that tokenize to something
    /// other than unk. Equal counts order lexicographically ascending.
    pub fn build(counts: &UnigramCounts, subvocab: &SubwordVocabulary, target_size: usize) -> Result<Self> {
        if target_size == 0 {
            return Err(Error::validation("target vocabulary size must be at least 1"));
        }
        let entries: Vec<(&String, u64)> = counts.iter().map(|(t, &n)| (t, n)).collect();
        let tokenized = par::map(&entries, |&(term, n)| {
            let ids = tokenize_wordpiece(term, subvocab);
            (term, n, ids)
        });
        let unk = subvocab.unk_id();
        let mut kept: Vec<(&String, u64, Vec<u32>)> = tokenized
            .into_iter()
            .filter(|(_, _, ids)| !ids.iter().all(|&i| i == unk))
            .collect();
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        kept.truncate(target_size);

        let mut terms = Vec::with_capacity(kept.len());
        let mut subwords = Vec::with_capacity(kept.len());
        let mut frequency = Vec::with_capacity(kept.len());
        for (term, n, ids) in kept {
            terms.push(term.clone());
            subwords.push(ids);
            frequency.push(n);
        }
        Self::from_parts(terms, subwords, frequency)
    }

    pub fn from_parts(terms: Vec<String>, subwords: Vec<Vec<u32>>, frequency: Vec<u64>) -> Result<Self> {
        if terms.len() != subwords.len() || terms.len() != frequency.len() {
            return Err(Error::validation("vocabulary columns differ in length"));
        }
        if u32::try_from(terms.len()).is_err() {
            return Err(Error::validation("expanded vocabulary too large"));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, term) in terms.iter().enumerate() {
            if subwords[i].is_empty() {
                return Err(Error::Invariant(format!("term {term:?} has no subwords")));
            }
            if index.insert(term.clone(), i as u32).is_some() {
                return Err(Error::validation(format!("duplicate term {term:?}")));
            }
        }
        Ok(Self {
            terms,
            index,
            subwords,
            frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn subwords_of(&self, id: u32) -> &[u32] {
        &self.subwords[id as usize]
    }

    pub fn frequency(&self, id: u32) -> u64 {
        self.frequency[id as usize]
    }

    /// Writes the TSV vocabulary file.
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(self.to_tsv().as_bytes())
    }

    fn to_tsv(&self) -> String {
        let mut s = format!("#sparseforge-vocab v1 |U|={}\n", self.len());
        for (i, term) in self.terms.iter().enumerate() {
            let ids: Vec<String> = self.subwords[i].iter().map(u32::to_string).collect();
            let _ = writeln!(s, "{term}\t{i}\t{}\t{}", self.frequency[i], ids.join(" "));
        }
        s
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        const WHAT: &str = "vocab file";
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(WHAT, 1, "missing header"))?
            .map_err(|source| Error::Record { record: 0, source })?;
        let declared: usize = header
            .strip_prefix("#sparseforge-vocab v1 |U|=")
            .ok_or_else(|| Error::parse(WHAT, 1, "bad header"))?
            .trim()
            .parse()
            .map_err(|e| Error::parse(WHAT, 1, e))?;

        let mut terms = Vec::with_capacity(declared);
        let mut subwords = Vec::with_capacity(declared);
        let mut frequency = Vec::with_capacity(declared);
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(|source| Error::Record { record: i + 1, source })?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::parse(WHAT, line_no, "expected 4 tab-separated fields"));
            }
            let id: usize = fields[1].parse().map_err(|e| Error::parse(WHAT, line_no, e))?;
            if id != terms.len() {
                return Err(Error::parse(WHAT, line_no, "term ids must be dense and in order"));
            }
            let freq: u64 = fields[2].parse().map_err(|e| Error::parse(WHAT, line_no, e))?;
            let ids = fields[3]
                .split_whitespace()
                .map(str::parse::<u32>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(WHAT, line_no, e))?;
            terms.push(fields[0].to_string());
            subwords.push(ids);
            frequency.push(freq);
        }
        if terms.len() != declared {
            return Err(Error::parse(
                WHAT,
                1,
                format!("header declares {declared} terms, found {}", terms.len()),
            ));
        }
        Self::from_parts(terms, subwords, frequency)
    }

    /// SHA-256 of the canonical TSV encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_tsv().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}
