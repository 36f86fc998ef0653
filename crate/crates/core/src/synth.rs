//! Seeded synthetic corpora for tests, benchmarks and demos.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::sparse::{SparseVector, TermId};

/// How term ids are drawn for synthetic vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TermDraw {
    Uniform,
    /// Zipf with the given exponent; term 0 is the most frequent.
    Zipf(f64),
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn draw_term<R: Rng>(rng: &mut R, vocab_size: usize, draw: TermDraw, zipf: Option<&Zipf<f64>>) -> TermId {
    match draw {
        TermDraw::Uniform => rng.random_range(0..vocab_size as TermId),
        TermDraw::Zipf(_) => (zipf.expect("zipf sampler").sample(rng) as TermId - 1).min(vocab_size as TermId - 1),
    }
}

/// A vector with exactly `l0` distinct terms (capped at `vocab_size`) and
/// weights in `(0.01, 3)`.
pub fn sparse_vector<R: Rng>(rng: &mut R, id: String, vocab_size: usize, l0: usize, draw: TermDraw) -> SparseVector {
    let zipf = match draw {
        TermDraw::Zipf(s) => Some(Zipf::new(vocab_size as f64, s).expect("valid zipf")),
        TermDraw::Uniform => None,
    };
    let l0 = l0.min(vocab_size);
    let mut terms = BTreeSet::new();
    while terms.len() < l0 {
        terms.insert(draw_term(rng, vocab_size, draw, zipf.as_ref()));
    }
    let entries: Vec<(TermId, f32)> = terms.into_iter().map(|t| (t, rng.random_range(0.01f32..3.0))).collect();
    SparseVector::new(id, entries).expect("synthetic vector is valid")
}

/// `count` vectors named `{prefix}{i}` with L0 drawn uniformly from `l0`.
pub fn sparse_corpus(
    seed: u64,
    prefix: &str,
    count: usize,
    vocab_size: usize,
    l0: std::ops::RangeInclusive<usize>,
    draw: TermDraw,
) -> Vec<SparseVector> {
    let mut rng = rng(seed);
    (0..count)
        .map(|i| {
            let n = rng.random_range(l0.clone());
            sparse_vector(&mut rng, format!("{prefix}{i}"), vocab_size, n, draw)
        })
        .collect()
}

/// Whitespace titles over words `w0 .. w{words-1}` with Zipf-distributed ranks.
pub fn zipf_titles(seed: u64, count: usize, words: usize, len: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let mut rng = rng(seed);
    let zipf = Zipf::new(words as f64, 1.1).expect("valid zipf");
    (0..count)
        .map(|_| {
            let n = rng.random_range(len.clone());
            (0..n)
                .map(|_| format!("w{}", zipf.sample(&mut rng) as usize - 1))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Dense rows of logits in `[lo, hi)`.
pub fn dense_rows(seed: u64, rows: usize, width: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut rng = rng(seed);
    (0..rows)
        .map(|_| (0..width).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}
