//! Decoding-side speech recognition machinery.
//!
//! The crate works on acoustic posteriors supplied as [`PosteriorMatrix`]
//! values (or files) and on an abstract [`StepScorer`] for attention
//! decoders. On top of that it provides:
//!
//! * [`tokenizer`]: byte-pair-encoding units shared by every other module,
//! * [`lm`]: modified Kneser-Ney n-gram estimation, backoff scoring and ARPA I/O,
//! * [`losses`]: CTC loss with analytic gradients, label-smoothed
//!   cross-entropy and the joint CTC-attention objective,
//! * [`decode`]: CTC prefix beam search and seq2seq beam search with
//!   n-gram shallow fusion,
//! * [`wfst`]: a small tropical-semiring transducer engine with lexicon and
//!   grammar builders, composition and TLG-style decoding,
//! * [`eval`]: WER/CER scoring, fusion-weight tuning and checkpoint selection,
//! * [`demo`]: a seeded synthetic end-to-end pipeline.

pub mod decode;
pub mod demo;
pub mod eval;
pub mod lm;
pub mod losses;
pub mod math;
pub mod posterior;
pub mod tokenizer;
pub mod wfst;

pub use decode::{
    ctc_greedy_decode, ctc_prefix_beam_search, decode_manifest, seq2seq_beam_search, DecodeError,
    DecoderChoice, FusionConfig, Hypothesis, InventoryLm, Manifest, ManifestEntry,
    PositionalScorer, StepScorer, TokenLm, TranscriptTable,
};
pub use eval::{
    edit_distance, parse_grid, read_tsv, score_corpus, select_best_checkpoint, tune_lm_weight,
    EvalError, EvalReport, GridPoint, TuningResult, Unit,
};
pub use demo::{run_demo, DemoConfig, DemoError, DemoReport};
pub use lm::{
    arpa_parse, arpa_write, count_ngrams, estimate_kneser_ney, BuildReport, CountTable,
    KnOptions, LmError, NGramModel, Vocab,
};
pub use losses::{
    attention_ce_loss, ctc_loss, joint_loss, CtcOutput, JointLossConfig, LossError,
};
pub use wfst::{
    arpa_to_grammar_fst, build_lexicon_fst, compose, tlg_decode, FstError, Lexicon, SymbolTable,
    TlgResult, Wfst,
};
pub use posterior::{PosteriorError, PosteriorKind, PosteriorMatrix};
pub use tokenizer::{bpe_decode, bpe_encode, bpe_train, TokenInventory, TokenizerError};
