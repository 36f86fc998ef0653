mod common;

use std::collections::HashSet;

use sparseforge::eval::{flops_metric, matched_term_ratio, mrr_at_k, ratio_buckets, recall_at_k, QrelSet, Run};
use sparseforge::synth::{self, TermDraw};
use sparseforge::vocab::Normalization;
use sparseforge::{InvertedIndex, SearchParams, SparseVector};

#[test]
fn flops_equals_recount() {
    let docs = synth::sparse_corpus(1, "d", 1_000, 800, 1..=40, TermDraw::Zipf(1.1));
    let queries = synth::sparse_corpus(2, "q", 100, 1_000, 1..=10, TermDraw::Zipf(1.1));
    for dk in [0, 10] {
        let idx = InvertedIndex::build(&docs, dk, None).unwrap();
        assert_eq!(
            flops_metric(&idx, &queries).unwrap(),
            common::recount_flops(&docs, dk, &queries)
        );
    }
}

#[test]
fn flops_partition_additivity_and_pruning() {
    let docs = synth::sparse_corpus(3, "d", 600, 400, 5..=40, TermDraw::Zipf(1.0));
    let queries = synth::sparse_corpus(4, "q", 90, 400, 2..=15, TermDraw::Zipf(1.0));
    let idx = InvertedIndex::build(&docs, 0, None).unwrap();
    let whole = flops_metric(&idx, &queries).unwrap();
    let parts = [&queries[..10], &queries[10..55], &queries[55..]];
    let weighted: f64 = parts
        .iter()
        .map(|p| flops_metric(&idx, p).unwrap() * p.len() as f64)
        .sum::<f64>()
        / queries.len() as f64;
    assert!((whole - weighted).abs() <= 1e-12);

    let pruned = InvertedIndex::build(&docs, 10, None).unwrap();
    assert!(flops_metric(&pruned, &queries).unwrap() <= whole);
}

fn run_from(idx: &InvertedIndex, queries: &[SparseVector], top: usize) -> Run {
    queries
        .iter()
        .map(|q| {
            let r = idx.search(q, &SearchParams::dot(top)).unwrap();
            (
                q.id().to_string(),
                r.hits.iter().map(|h| idx.doc_name(h.doc).to_string()).collect(),
            )
        })
        .collect()
}

fn synthetic_qrels(seed: u64, queries: &[SparseVector], docs: usize) -> QrelSet {
    let mut rng = synth::rng(seed);
    let mut q = QrelSet::new();
    for query in queries {
        use rand::Rng;
        let n = rng.random_range(1..=4);
        let mut used = HashSet::new();
        for _ in 0..n {
            let d = rng.random_range(0..docs);
            if used.insert(d) {
                q.add(query.id(), &format!("d{d}"), true).unwrap();
            }
        }
        for _ in 0..3 {
            let d = rng.random_range(0..docs);
            if used.insert(d) {
                q.add(query.id(), &format!("d{d}"), false).unwrap();
            }
        }
    }
    q
}

#[test]
fn metrics_match_linear_scan() {
    let docs = synth::sparse_corpus(5, "d", 300, 60, 3..=20, TermDraw::Zipf(0.8));
    let queries = synth::sparse_corpus(6, "q", 50, 60, 2..=8, TermDraw::Zipf(0.8));
    let idx = InvertedIndex::build(&docs, 0, None).unwrap();
    let full = run_from(&idx, &queries, docs.len());
    let qrels = synthetic_qrels(7, &queries, docs.len());

    let mut rr = 0.0;
    let mut r10 = 0.0;
    let mut r100 = 0.0;
    for (qid, j) in qrels.evaluated() {
        let ranking = &full[qid];
        for (i, d) in ranking.iter().enumerate() {
            if j.positives.contains(d) {
                if i < 10 {
                    rr += 1.0 / (i + 1) as f64;
                }
                break;
            }
        }
        let within = |k: usize| ranking.iter().take(k).filter(|d| j.positives.contains(*d)).count() as f64;
        r10 += within(10) / j.positives.len() as f64;
        r100 += within(100) / j.positives.len() as f64;
    }
    let n = qrels.evaluated().count() as f64;
    assert!((mrr_at_k(&full, &qrels, 10).value - rr / n).abs() < 1e-12);
    assert!((recall_at_k(&full, &qrels, 10).value - r10 / n).abs() < 1e-12);
    assert!((recall_at_k(&full, &qrels, 100).value - r100 / n).abs() < 1e-12);

    let mut last = 0.0;
    for k in [1, 3, 5, 10, 20, 100] {
        let m = mrr_at_k(&full, &qrels, k).value;
        assert!((0.0..=1.0).contains(&m) && m >= last);
        last = m;
        assert!((0.0..=1.0).contains(&recall_at_k(&full, &qrels, k).value));
    }
}

#[test]
fn removing_negatives_never_hurts() {
    let docs = synth::sparse_corpus(8, "d", 200, 40, 3..=15, TermDraw::Zipf(0.8));
    let queries = synth::sparse_corpus(9, "q", 30, 40, 2..=6, TermDraw::Zipf(0.8));
    let qrels = synthetic_qrels(10, &queries, docs.len());
    let negatives: HashSet<String> = queries
        .iter()
        .filter_map(|q| qrels.get(q.id()))
        .flat_map(|j| j.negatives.iter().cloned())
        .collect();
    let positives: HashSet<String> = queries
        .iter()
        .filter_map(|q| qrels.get(q.id()))
        .flat_map(|j| j.positives.iter().cloned())
        .collect();

    let brute_run = |corpus: &[SparseVector]| -> Run {
        queries
            .iter()
            .map(|q| {
                let ranked = common::brute_force_ranking(corpus, q, corpus.len());
                (
                    q.id().to_string(),
                    ranked
                        .iter()
                        .map(|(i, _)| corpus[*i as usize].id().to_string())
                        .collect(),
                )
            })
            .collect()
    };
    let before = brute_run(&docs);
    let mut corpus = docs.clone();
    for victim in negatives.iter().filter(|n| !positives.contains(*n)).take(10) {
        corpus.retain(|d| d.id() != victim);
        let after = brute_run(&corpus);
        for (qid, j) in qrels.evaluated() {
            let one = |run: &Run, k| {
                let mut q = QrelSet::new();
                for p in &j.positives {
                    q.add(qid, p, true).unwrap();
                }
                (mrr_at_k(run, &q, k).value, recall_at_k(run, &q, k).value)
            };
            for k in [10, 100] {
                let (m0, r0) = one(&before, k);
                let (m1, r1) = one(&after, k);
                assert!(m1 >= m0 && r1 >= r0);
            }
        }
    }
}

#[test]
fn ratio_buckets_match_sort_and_split() {
    let mut rng = synth::rng(11);
    let words: Vec<String> = (0..12).map(|i| format!("t{i}")).collect();
    let mut ratios = Vec::new();
    for _ in 0..300 {
        use rand::seq::IndexedRandom;
        let q: Vec<&String> = words.choose_multiple(&mut rng, 4).collect();
        let t: Vec<&String> = words.choose_multiple(&mut rng, 6).collect();
        let q = q.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ");
        let t = t.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ");
        ratios.push(matched_term_ratio(&q, &t, Normalization::default()).unwrap());
    }
    let buckets = ratio_buckets(&ratios);
    let sizes: Vec<usize> = buckets.iter().map(Vec::len).collect();
    assert_eq!(sizes.iter().sum::<usize>(), 300);
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);

    let mut sorted: Vec<(f64, usize)> = ratios.iter().copied().zip(0..).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let flat: Vec<usize> = buckets.concat();
    assert_eq!(flat, sorted.iter().map(|p| p.1).collect::<Vec<_>>());
}
