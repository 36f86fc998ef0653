//! Whole-term masking over U for expanded-MLM pre-training data.
//!
//! Each title gets exactly `max(1, floor(0.15 n))` of its `n` U terms
//! selected. Every selected term draws one action (80% mask, 10% random,
//! 10% keep) that is applied to all of its subwords, and all of those
//! positions are labeled with the term's U id.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::vocab::{tokenize_wordpiece, ExpandedVocabulary, Normalization, SubwordVocabulary};

/// Default maximum subword sequence length.
pub const DEFAULT_MAX_LEN: usize = 64;

const MASK_PROB: f64 = 0.8;
const RANDOM_PROB: f64 = 0.1;

/// Subword positions `[start, end)` produced by one occurrence of a U term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct USpan {
    pub term: u32,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedTitle {
    pub tokens: Vec<u32>,
    pub spans: Vec<USpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Mask,
    Random,
    Keep,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Mask => "MASK",
            Action::Random => "RANDOM",
            Action::Keep => "KEEP",
        }
    }

    fn draw<R: Rng>(rng: &mut R) -> Action {
        let u: f64 = rng.random();
        if u < MASK_PROB {
            Action::Mask
        } else if u < MASK_PROB + RANDOM_PROB {
            Action::Random
        } else {
            Action::Keep
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedExample {
    pub tokens: Vec<u32>,
    /// U term id per position; `None` on unselected positions.
    pub labels: Vec<Option<u32>>,
    /// One `(U term id, action)` per selected span, in position order.
    pub actions: Vec<(u32, Action)>,
    pub seed: u64,
    pub record: usize,
}

impl MaskedExample {
    pub fn labeled(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.labels.iter().enumerate().filter_map(|(p, l)| l.map(|t| (p, t)))
    }

    /// True when the title contained no U term and nothing was selected.
    pub fn is_unmasked(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("masked example serializes");
        s.push('\n');
        s
    }
}

impl Serialize for MaskedExample {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        struct Labels<'a>(&'a MaskedExample);
        impl Serialize for Labels<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(None)?;
                for (pos, term) in self.0.labeled() {
                    m.serialize_entry(&pos.to_string(), &term)?;
                }
                m.end()
            }
        }
        let actions: Vec<&str> = self.actions.iter().map(|(_, a)| a.name()).collect();
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("tokens", &self.tokens)?;
        m.serialize_entry("labels", &Labels(self))?;
        m.serialize_entry("actions", &actions)?;
        m.serialize_entry("record", &self.record)?;
        if self.is_unmasked() {
            m.serialize_entry("no_u_terms", &true)?;
        }
        m.end()
    }
}

/// Subword-tokenizes a title and records the span of every U-term occurrence.
///
/// Words are appended whole; the first word that would overflow `max_len`
/// ends the sequence.
pub fn tokenize_title(
    title: &str,
    vocab: &ExpandedVocabulary,
    subvocab: &SubwordVocabulary,
    norm: Normalization,
    max_len: usize,
) -> TokenizedTitle {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    for word in norm.tokens(title) {
        let term = vocab.term_id(&word);
        let pieces = match term {
            Some(id) => vocab.subwords_of(id).to_vec(),
            None => tokenize_wordpiece(&word, subvocab),
        };
        if tokens.len() + pieces.len() > max_len {
            break;
        }
        let start = tokens.len();
        tokens.extend(pieces);
        if let Some(term) = term {
            spans.push(USpan {
                term,
                start,
                end: tokens.len(),
            });
        }
    }
    TokenizedTitle { tokens, spans }
}

/// U-term spans of a title, without length truncation.
pub fn find_u_spans(
    title: &str,
    vocab: &ExpandedVocabulary,
    subvocab: &SubwordVocabulary,
    norm: Normalization,
) -> Vec<USpan> {
    tokenize_title(title, vocab, subvocab, norm, usize::MAX).spans
}

/// `max(1, floor(0.15 n))` for `n >= 1`, else 0.
pub fn mask_count(spans: usize) -> usize {
    if spans == 0 {
        0
    } else {
        (spans * 15 / 100).max(1)
    }
}

/// Uniformly picks [`mask_count`] spans without replacement; returned in position order.
pub fn select_mask_targets<R: Rng>(spans: &[USpan], rng: &mut R) -> Vec<USpan> {
    let k = mask_count(spans.len());
    let mut picked = sample(rng, spans.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| spans[i]).collect()
}

/// Applies one drawn action per selected span to all of its subwords.
///
/// Input tokens after replacement, per-position labels, and the action taken per selected term.
pub type Replaced = (Vec<u32>, Vec<Option<u32>>, Vec<(u32, Action)>);

/// Random replacement draws each subword independently from the subword
/// vocabulary minus the mask id.
pub fn apply_replacements<R: Rng>(
    tokens: &[u32],
    selected: &[USpan],
    subvocab: &SubwordVocabulary,
    rng: &mut R,
) -> Result<Replaced> {
    let mut order: Vec<&USpan> = selected.iter().collect();
    order.sort_by_key(|s| s.start);
    for pair in order.windows(2) {
        if pair[0].end > pair[1].start {
            return Err(Error::Contract(format!(
                "spans [{}, {}) and [{}, {}) overlap",
                pair[0].start, pair[0].end, pair[1].start, pair[1].end
            )));
        }
    }
    if let Some(bad) = order.iter().find(|s| s.start >= s.end || s.end > tokens.len()) {
        return Err(Error::Contract(format!(
            "span [{}, {}) is empty or outside {} tokens",
            bad.start,
            bad.end,
            tokens.len()
        )));
    }
    if subvocab.len() < 2 {
        return Err(Error::validation("subword vocabulary too small for random replacement"));
    }

    let mask_id = subvocab.mask_id();
    let random_range = subvocab.len() as u32 - 1;
    let mut out = tokens.to_vec();
    let mut labels = vec![None; tokens.len()];
    let mut actions = Vec::with_capacity(order.len());
    for span in order {
        let action = Action::draw(rng);
        for pos in span.start..span.end {
            labels[pos] = Some(span.term);
            match action {
                Action::Mask => out[pos] = mask_id,
                Action::Random => {
                    let r = rng.random_range(0..random_range);
                    out[pos] = if r >= mask_id { r + 1 } else { r };
                }
                Action::Keep => {}
            }
        }
        actions.push((span.term, action));
    }
    Ok((out, labels, actions))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskingConfig {
    pub seed: u64,
    pub max_len: usize,
    pub norm: Normalization,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
            norm: Normalization::default(),
        }
    }
}

/// Record-level RNG: ChaCha8 keyed by the global seed, one stream per record.
pub fn record_rng(seed: u64, record: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(record as u64);
    rng
}

pub struct MaskGenerator<'a> {
    vocab: &'a ExpandedVocabulary,
    subvocab: &'a SubwordVocabulary,
    config: MaskingConfig,
}

impl<'a> MaskGenerator<'a> {
    pub fn new(vocab: &'a ExpandedVocabulary, subvocab: &'a SubwordVocabulary, config: MaskingConfig) -> Self {
        Self {
            vocab,
            subvocab,
            config,
        }
    }

    pub fn example(&self, record: usize, title: &str) -> MaskedExample {
        let tokenized = tokenize_title(title, self.vocab, self.subvocab, self.config.norm, self.config.max_len);
        let mut rng = record_rng(self.config.seed, record);
        let selected = select_mask_targets(&tokenized.spans, &mut rng);
        let (tokens, labels, actions) = apply_replacements(&tokenized.tokens, &selected, self.subvocab, &mut rng)
            .expect("spans from one tokenization never overlap");
        MaskedExample {
            tokens,
            labels,
            actions,
            seed: self.config.seed,
            record,
        }
    }

    /// Generates every record; output order and content are independent of threading.
    pub fn generate<S: AsRef<str> + Sync>(&self, titles: &[S]) -> Vec<MaskedExample> {
        par::map_indexed(titles, |i, t| self.example(i, t.as_ref()))
    }

    pub fn write_jsonl<W: Write, S: AsRef<str> + Sync>(&self, titles: &[S], mut out: W) -> Result<()> {
        for ex in self.generate(titles) {
            out.write_all(ex.to_json_line().as_bytes())?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (ExpandedVocabulary, SubwordVocabulary) {
        let pieces: Vec<String> = ["[UNK]", "[MASK]", "lo", "##ve", "songs", "sad", "z", "##z"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let sv = SubwordVocabulary::new(pieces, "[MASK]", "[UNK]").unwrap();
        let counts = [("love", 3u64), ("songs", 2), ("sad", 1)]
            .iter()
            .map(|&(t, n)| (t.to_string(), n))
            .collect();
        let u = ExpandedVocabulary::build(&counts, &sv, 10).unwrap();
        (u, sv)
    }

    fn spans(n: usize) -> Vec<USpan> {
        (0..n)
            .map(|i| USpan {
                term: i as u32,
                start: i,
                end: i + 1,
            })
            .collect()
    }

    #[test]
    fn span_of_multi_piece_term() {
        let (u, sv) = fixture();
        let s = find_u_spans("love songs", &u, &sv, Normalization::default());
        assert_eq!(
            s,
            vec![
                USpan {
                    term: u.term_id("love").unwrap(),
                    start: 0,
                    end: 2
                },
                USpan {
                    term: u.term_id("songs").unwrap(),
                    start: 2,
                    end: 3
                },
            ]
        );
    }

    #[test]
    fn no_u_terms_no_spans() {
        let (u, sv) = fixture();
        assert!(find_u_spans("zzz qqq", &u, &sv, Normalization::default()).is_empty());
    }

    #[test]
    fn twenty_terms_select_three() {
        let mut rng = record_rng(1, 0);
        assert_eq!(select_mask_targets(&spans(20), &mut rng).len(), 3);
    }

    #[test]
    fn short_titles_still_mask_one() {
        let mut rng = record_rng(1, 0);
        assert_eq!(select_mask_targets(&spans(2), &mut rng).len(), 1);
        assert_eq!(select_mask_targets(&spans(0), &mut rng).len(), 0);
    }

    #[test]
    fn count_rule() {
        assert_eq!(mask_count(0), 0);
        assert_eq!(mask_count(1), 1);
        assert_eq!(mask_count(6), 1);
        assert_eq!(mask_count(7), 1);
        assert_eq!(mask_count(13), 1);
        assert_eq!(mask_count(14), 2);
        assert_eq!(mask_count(20), 3);
        assert_eq!(mask_count(100), 15);
    }

    /// Finds a record index whose first action draw is `want`.
    fn rng_with_first_action(want: Action) -> ChaCha8Rng {
        (0..)
            .map(|r| record_rng(99, r))
            .find(|rng| Action::draw(&mut rng.clone()) == want)
            .unwrap()
    }

    #[test]
    fn keep_branch_labels_without_change() {
        let (u, sv) = fixture();
        let t = tokenize_title("love", &u, &sv, Normalization::default(), 64);
        let mut rng = rng_with_first_action(Action::Keep);
        let (tokens, labels, actions) = apply_replacements(&t.tokens, &t.spans, &sv, &mut rng).unwrap();
        let love = u.term_id("love").unwrap();
        assert_eq!(tokens, t.tokens);
        assert_eq!(labels, vec![Some(love), Some(love)]);
        assert_eq!(actions, vec![(love, Action::Keep)]);
    }

    #[test]
    fn mask_branch_masks_all_subwords() {
        let (u, sv) = fixture();
        let t = tokenize_title("love", &u, &sv, Normalization::default(), 64);
        let mut rng = rng_with_first_action(Action::Mask);
        let (tokens, _, _) = apply_replacements(&t.tokens, &t.spans, &sv, &mut rng).unwrap();
        assert_eq!(tokens, vec![sv.mask_id(); 2]);
    }

    #[test]
    fn random_branch_avoids_mask_id() {
        let (u, sv) = fixture();
        let t = tokenize_title("love", &u, &sv, Normalization::default(), 64);
        for r in 0..200 {
            let mut rng = record_rng(5, r);
            let (tokens, _, actions) = apply_replacements(&t.tokens, &t.spans, &sv, &mut rng).unwrap();
            if actions[0].1 == Action::Random {
                assert!(tokens.iter().all(|&x| x != sv.mask_id() && (x as usize) < sv.len()));
            }
        }
    }

    #[test]
    fn overlapping_spans_rejected() {
        let (_, sv) = fixture();
        let bad = [
            USpan {
                term: 0,
                start: 0,
                end: 2,
            },
            USpan {
                term: 1,
                start: 1,
                end: 3,
            },
        ];
        let mut rng = record_rng(0, 0);
        assert!(matches!(
            apply_replacements(&[2, 3, 4], &bad, &sv, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn truncates_at_word_boundary() {
        let (u, sv) = fixture();
        let t = tokenize_title("songs love sad", &u, &sv, Normalization::default(), 2);
        assert_eq!(t.tokens.len(), 1);
        assert_eq!(t.spans.len(), 1);
    }

    #[test]
    fn json_line_layout() {
        let (u, sv) = fixture();
        let g = MaskGenerator::new(
            &u,
            &sv,
            MaskingConfig {
                seed: 3,
                ..Default::default()
            },
        );
        let ex = g.example(0, "qqq");
        assert_eq!(
            ex.to_json_line(),
            "{\"tokens\":[0],\"labels\":{},\"actions\":[],\"record\":0,\"no_u_terms\":true}\n"
        );
        let ex = g.example(4, "sad songs");
        let v: serde_json::Value = serde_json::from_str(&ex.to_json_line()).unwrap();
        assert_eq!(v["record"], 4);
        assert_eq!(v["actions"].as_array().unwrap().len(), 1);
        assert_eq!(v["labels"].as_object().unwrap().len(), 1);
    }
}
