//! Learned sparse retrieval toolkit.
//!
//! Covers the pipeline around a sparse neural encoder: building an expanded
//! unigram vocabulary and its output head, generating whole-term masked
//! pre-training examples, pooling logits into sparse vectors, loss kernels
//! with gradient checks, static top-k pruning, inverted-index retrieval,
//! evaluation and score diagnostics.

pub mod diagnostics;
pub mod encode;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod index;
pub mod loss;
pub mod masking;
pub mod par;
pub mod prune;
pub mod sparse;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
pub use index::{InvertedIndex, MatchMode, SearchParams, SearchResult};
pub use prune::{prune, PruneConfig};
pub use sparse::{SparseVector, TermId};
pub use vocab::{ExpandedVocabulary, HeadMatrix, SubwordVocabulary};
