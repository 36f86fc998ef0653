use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sparseforge::diagnostics::{self, StdConvention};
use sparseforge::encode::{LogitMatrix, MockEncoder, MockStyle};
use sparseforge::eval::{self, QrelSet};
use sparseforge::gradcheck::{self, LossKind};
use sparseforge::index::{write_run, InvertedIndex, MatchMode, SearchParams, VocabStamp};
use sparseforge::masking::{MaskGenerator, MaskingConfig, DEFAULT_MAX_LEN};
use sparseforge::prune::prune_corpus;
use sparseforge::sparse::{read_all_jsonl, read_jsonl, write_jsonl};
use sparseforge::vocab::{self, expand_head, ExpandedVocabulary, HeadMatrix, Normalization, SubwordVocabulary};

#[derive(Parser)]
#[command(name = "sparseforge", version, about = "Learned sparse retrieval toolkit")]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count unigrams in a title corpus and write the expanded vocabulary.
    VocabBuild {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        subvocab: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        size: usize,
        #[arg(long)]
        case_fold: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean-pool a base head into a head over the expanded vocabulary.
    HeadExpand {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate masked pre-training examples as JSONL.
    MaskGen {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        subvocab: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
        #[arg(long)]
        case_fold: bool,
    },
    /// Encode `id<TAB>text` lines with the mock encoder into sparse vectors.
    Encode {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        head: PathBuf,
        #[arg(long, value_enum, default_value_t = Style::Hash)]
        style: Style,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training-time top-K mask applied after pooling.
        #[arg(long)]
        top_k: Option<usize>,
        /// Also write the per-token logit matrices as JSONL.
        #[arg(long)]
        logits_out: Option<PathBuf>,
        #[arg(long)]
        case_fold: bool,
    },
    /// Static top-k pruning of sparse vectors.
    Prune {
        #[arg(long)]
        k: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: PathBuf,
    },
    /// Build an inverted index from document vectors.
    IndexBuild {
        #[arg(long, default_value_t = 0)]
        dk: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Vocabulary to stamp into the manifest.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Retrieve documents for each query and write a TREC run.
    Search {
        #[arg(long, default_value_t = 0)]
        qk: usize,
        #[arg(long, value_enum, default_value_t = Mode::Dot)]
        mode: Mode,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[arg(long, default_value_t = 100)]
        top: usize,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "sparseforge")]
        tag: String,
        /// Vocabulary the queries were encoded with; checked against the index.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Effectiveness and efficiency report for a query set.
    Eval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = 0)]
        qk: usize,
        #[arg(long)]
        report: PathBuf,
    },
    /// Score-distribution diagnostics.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 1)]
        threshold: u64,
        #[arg(long)]
        report: PathBuf,
        /// Use the n-1 divisor instead of the population convention.
        #[arg(long)]
        sample_std: bool,
    },
    /// Check analytic loss gradients against central finite differences.
    Gradcheck {
        #[arg(long, value_enum)]
        loss: Loss,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        batches: usize,
        #[arg(long, default_value_t = 5.0)]
        lambda: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Hash,
    Head,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Dot,
    Overlap,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Logit,
    Sparse,
}

#[derive(Clone, Copy, ValueEnum)]
enum Loss {
    Inbatch,
    Flops,
    Jflops,
    Combined,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        lines.push(line.with_context(|| format!("{}: record {i}", path.display()))?);
    }
    Ok(lines)
}

fn read_vocab(path: &Path) -> Result<ExpandedVocabulary> {
    ExpandedVocabulary::read(open(path)?).with_context(|| format!("reading vocabulary {}", path.display()))
}

fn read_subvocab(path: &Path) -> Result<SubwordVocabulary> {
    SubwordVocabulary::read(open(path)?).with_context(|| format!("reading subword vocabulary {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct LogitRecord {
    id: String,
    rows: Vec<Vec<f64>>,
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::VocabBuild {
            input,
            subvocab,
            size,
            case_fold,
            out,
        } => {
            let sv = read_subvocab(&subvocab)?;
            let titles = read_lines(&input)?;
            let counts = vocab::count_unigrams_sharded(&titles, Normalization { case_fold });
            let u = ExpandedVocabulary::build(&counts, &sv, size)?;
            let mut w = create(&out)?;
            u.write(&mut w)?;
            w.flush()?;
            eprintln!("{} terms from {} distinct unigrams", u.len(), counts.len());
        }
        Command::HeadExpand { base, vocab, out } => {
            let base = HeadMatrix::read(open(&base)?)?;
            let u = read_vocab(&vocab)?;
            let head = expand_head(&base, &u)?;
            let mut w = create(&out)?;
            head.write(&mut w)?;
            w.flush()?;
        }
        Command::MaskGen {
            vocab,
            subvocab,
            seed,
            input,
            out,
            max_len,
            case_fold,
        } => {
            let u = read_vocab(&vocab)?;
            let sv = read_subvocab(&subvocab)?;
            let titles = read_lines(&input)?;
            let config = MaskingConfig {
                seed,
                max_len,
                norm: Normalization { case_fold },
            };
            MaskGenerator::new(&u, &sv, config).write_jsonl(&titles, create(&out)?)?;
        }
        Command::Encode {
            vocab,
            head,
            style,
            input,
            out,
            top_k,
            logits_out,
            case_fold,
        } => {
            let u = read_vocab(&vocab)?;
            let head = HeadMatrix::read(open(&head)?)?;
            let style = match style {
                Style::Hash => MockStyle::HashProjection,
                Style::Head => MockStyle::HeadProduct,
            };
            let encoder = MockEncoder::new(&u, &head, style)?.with_normalization(Normalization { case_fold });
            let mut texts = Vec::new();
            for (i, line) in read_lines(&input)?.into_iter().enumerate() {
                let Some((id, text)) = line.split_once('\t') else {
                    bail!("{}: line {} is not `id<TAB>text`", input.display(), i + 1);
                };
                texts.push((id.to_string(), text.to_string()));
            }
            let vectors = encoder.encode_batch(&texts, top_k)?;
            write_jsonl(create(&out)?, &vectors)?;
            if let Some(path) = logits_out {
                let mut w = create(&path)?;
                for (id, text) in &texts {
                    let m = encoder.encode(id, text)?;
                    let rec = LogitRecord {
                        id: id.clone(),
                        rows: m.rows().map(<[f64]>::to_vec).collect(),
                    };
                    serde_json::to_writer(&mut w, &rec)?;
                    w.write_all(b"\n")?;
                }
                w.flush()?;
            }
        }
        Command::Prune { k, input, out, summary } => {
            let (vectors, s) = prune_corpus(read_jsonl(open(&input)?), k)?;
            write_jsonl(create(&out)?, &vectors)?;
            write_json(&summary, &s.report(k))?;
        }
        Command::IndexBuild { dk, input, out, vocab } => {
            let docs = read_all_jsonl(open(&input)?)?;
            let stamp = vocab.map(|p| read_vocab(&p)).transpose()?.map(|u| VocabStamp {
                hash: u.fingerprint(),
                size: u.len(),
            });
            let index = InvertedIndex::build(&docs, dk, stamp.as_ref())?;
            index.write(create(&out)?)?;
            eprintln!("{} documents, {} postings", index.doc_count(), index.total_postings());
        }
        Command::Search {
            qk,
            mode,
            theta,
            top,
            queries,
            index,
            out,
            tag,
            vocab,
        } => {
            let index = InvertedIndex::read(open(&index)?)?;
            let queries = read_all_jsonl(open(&queries)?)?;
            let params = SearchParams {
                qk,
                top_n: top,
                mode: match mode {
                    Mode::Dot => MatchMode::Dot,
                    Mode::Overlap => MatchMode::OverlapThreshold(theta),
                },
                vocab_hash: vocab.map(|p| read_vocab(&p)).transpose()?.map(|u| u.fingerprint()),
            };
            let results = index.search_batch(&queries, &params)?;
            let mut w = create(&out)?;
            for (q, r) in queries.iter().zip(&results) {
                write_run(&mut w, q.id(), r, &index, &tag)?;
            }
            w.flush()?;
        }
        Command::Eval {
            index,
            queries,
            qrels,
            qk,
            report,
        } => {
            let index = InvertedIndex::read(open(&index)?)?;
            let queries = read_all_jsonl(open(&queries)?)?;
            let qrels = QrelSet::read(open(&qrels)?)?;
            let r = eval::evaluate(&index, &queries, &qrels, qk)?;
            for qid in &r.missing_queries {
                eprintln!("warning: query {qid} has judgments but no run entry; scored 0");
            }
            write_json(&report, &r)?;
        }
        Command::Stats {
            input,
            kind,
            threshold,
            report,
            sample_std,
        } => {
            let conv = if sample_std {
                StdConvention::Sample
            } else {
                StdConvention::Population
            };
            let r = match kind {
                Kind::Sparse => diagnostics::diagnose_sparse(&read_all_jsonl(open(&input)?)?, threshold, conv)?,
                Kind::Logit => {
                    let mut docs = Vec::new();
                    for (i, line) in read_lines(&input)?.iter().enumerate() {
                        if line.trim().is_empty() {
                            continue;
                        }
                        let rec: LogitRecord = serde_json::from_str(line)
                            .with_context(|| format!("{}: line {}", input.display(), i + 1))?;
                        docs.push(LogitMatrix::new(rec.id, rec.rows)?);
                    }
                    diagnostics::diagnose_logits(&docs, threshold, conv)?
                }
            };
            write_json(&report, &r)?;
        }
        Command::Gradcheck {
            loss,
            seed,
            batches,
            lambda,
        } => {
            let kind = match loss {
                Loss::Inbatch => LossKind::InBatch,
                Loss::Flops => LossKind::Flops,
                Loss::Jflops => LossKind::JointFlops,
                Loss::Combined => LossKind::Combined,
            };
            let r = gradcheck::run(kind, seed, batches, lambda)?;
            println!(
                "{} max_rel_error={:.3e} coordinates={} tolerance={:.0e}",
                kind.name(),
                r.max_rel_error,
                r.coordinates,
                gradcheck::TOLERANCE
            );
            if !r.passes() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
