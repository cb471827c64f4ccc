//! Backoff n-gram language models.
//!
//! Models are estimated with interpolated modified Kneser-Ney smoothing,
//! stored in a context trie keyed by reversed history, and exchanged as
//! ARPA text. All scores are log10, as in ARPA files.

mod arpa;
mod counts;
mod estimate;
mod model;
mod vocab;

use thiserror::Error;

pub use arpa::{arpa_parse, arpa_write};
pub use counts::{count_ngrams, CountTable};
pub use estimate::{estimate_kneser_ney, BuildReport, KnOptions};
pub use model::NGramModel;
pub use vocab::Vocab;

/// Highest supported model order.
pub const MAX_ORDER: usize = 20;

/// Log10 probability ARPA files give to `<s>`, which is never predicted.
pub const BOS_LOGPROB: f64 = -99.0;

#[derive(Debug, Error, PartialEq)]
pub enum LmError {
    #[error("order must be between 1 and {MAX_ORDER}, got {0}")]
    BadOrder(usize),
    #[error("token id {id} in sentence {sentence} is outside the vocabulary")]
    UnknownId { sentence: usize, id: u32 },
    #[error("cannot estimate a model from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary is missing required word {0:?}")]
    MissingSpecial(&'static str),
    #[error("ARPA line {line}: {message}")]
    Arpa { line: usize, message: String },
}

impl LmError {
    pub(crate) fn arpa(line: usize, message: impl Into<String>) -> Self {
        LmError::Arpa {
            line,
            message: message.into(),
        }
    }
}

/// Train a model end to end from id sentences.
pub fn train(
    corpus: &[Vec<u32>],
    order: usize,
    vocab: &Vocab,
    opts: &KnOptions,
) -> Result<(NGramModel, BuildReport), LmError> {
    let counts = count_ngrams(corpus, order, vocab)?;
    estimate_kneser_ney(&counts, vocab, opts)
}
