//! Beam-search decoders with n-gram shallow fusion.
//!
//! Every hypothesis carries its acoustic and LM scores separately, both in
//! natural log. The fused score is always
//! `acoustic + lm_weight * lm + len_bonus * len`, computed by
//! [`FusionConfig::combine`]. N-gram scores are log10 and are multiplied by
//! `ln 10` when they enter a hypothesis.
//!
//! Ties in any ranking are broken by the lexicographically smaller token
//! sequence.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::NGramModel;
use crate::math::log_add;
use crate::posterior::{PosteriorError, PosteriorMatrix, ROW_NORM_TOLERANCE};
use crate::tokenizer::{bpe_decode, TokenInventory};

const LN_10: f64 = std::f64::consts::LN_10;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decoder configuration: {0}")]
    Config(String),
    #[error("scorer not normalized after prefix of length {prefix_len} (log-sum-exp {lse:.3e})")]
    ScorerNotNormalized { prefix_len: usize, lse: f64 },
    #[error("scorer returned {got} scores for a vocabulary of {expected}")]
    ScorerShape { expected: usize, got: usize },
    #[error("blank id {blank} is outside the posterior vocabulary of {vocab}")]
    BlankOutOfRange { blank: u32, vocab: usize },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub beam: usize,
    pub lm_weight: f64,
    pub len_bonus: f64,
    /// Longest output of the seq2seq decoder, in tokens.
    pub max_len: usize,
    pub nbest: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            beam: 8,
            lm_weight: 0.3,
            len_bonus: 0.0,
            max_len: 200,
            nbest: 1,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.beam < 1 {
            return Err(DecodeError::Config("beam size must be at least 1".into()));
        }
        if self.nbest < 1 || self.nbest > self.beam {
            return Err(DecodeError::Config(format!(
                "n-best size {} must be between 1 and the beam size {}",
                self.nbest, self.beam
            )));
        }
        if !(self.lm_weight >= 0.0 && self.lm_weight.is_finite()) {
            return Err(DecodeError::Config(format!("lm weight {} must be >= 0", self.lm_weight)));
        }
        if !self.len_bonus.is_finite() {
            return Err(DecodeError::Config("length bonus must be finite".into()));
        }
        if self.max_len < 1 {
            return Err(DecodeError::Config("max length must be at least 1".into()));
        }
        Ok(())
    }

    pub fn combine(&self, acoustic: f64, lm: f64, len: usize) -> f64 {
        acoustic + self.lm_weight * lm + self.len_bonus * len as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    /// Natural-log acoustic score.
    pub acoustic: f64,
    /// Natural-log LM score (log10 scores times ln 10).
    pub lm: f64,
    pub combined: f64,
    /// Set when the hypothesis ended in eos (seq2seq) or consumed every
    /// frame (CTC).
    pub terminal: bool,
}

impl Hypothesis {
    fn new(tokens: Vec<u32>, acoustic: f64, lm: f64, terminal: bool, cfg: &FusionConfig) -> Self {
        let combined = cfg.combine(acoustic, lm, tokens.len());
        Self {
            tokens,
            acoustic,
            lm,
            combined,
            terminal,
        }
    }
}

/// Descending by score, then ascending by token sequence.
fn rank(a_score: f64, a_tokens: &[u32], b_score: f64, b_tokens: &[u32]) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_tokens.cmp(b_tokens))
}

/// A token-level language model as seen by the decoders. Prefixes and
/// tokens are decoder ids; scores are log10. The sentence-start context is
/// implied.
pub trait TokenLm: Sync {
    fn logprob(&self, prefix: &[u32], token: u32) -> f64;
    fn eos_logprob(&self, prefix: &[u32]) -> f64;
}

fn bos_context(model: &NGramModel, prefix: &[u32], map: impl Fn(u32) -> u32) -> Vec<u32> {
    let keep = model.order().saturating_sub(1);
    let start = prefix.len().saturating_sub(keep);
    let mut ctx = Vec::with_capacity(keep + 1);
    if start == 0 {
        ctx.push(model.vocab().bos());
    }
    ctx.extend(prefix[start..].iter().map(|&t| map(t)));
    ctx
}

/// Decoder ids are the model's own vocabulary ids.
impl TokenLm for NGramModel {
    fn logprob(&self, prefix: &[u32], token: u32) -> f64 {
        NGramModel::logprob(self, &bos_context(self, prefix, |t| t), token)
    }

    fn eos_logprob(&self, prefix: &[u32]) -> f64 {
        NGramModel::logprob(self, &bos_context(self, prefix, |t| t), self.vocab().eos())
    }
}

/// An n-gram model over unit strings, queried with token-inventory ids.
#[derive(Debug, Clone)]
pub struct InventoryLm {
    model: NGramModel,
    map: Vec<u32>,
}

impl InventoryLm {
    /// Map every inventory token to the model word with the same spelling;
    /// tokens the model does not know score as `<unk>`.
    pub fn new(model: NGramModel, inv: &TokenInventory) -> Self {
        let map = inv.tokens().iter().map(|t| model.vocab().lookup(t)).collect();
        Self { model, map }
    }

    /// Explicit decoder-id to model-id table.
    pub fn from_map(model: NGramModel, map: Vec<u32>) -> Self {
        Self { model, map }
    }

    pub fn model(&self) -> &NGramModel {
        &self.model
    }

    fn to_lm(&self, id: u32) -> u32 {
        self.map.get(id as usize).copied().unwrap_or(self.model.vocab().unk())
    }
}

impl TokenLm for InventoryLm {
    fn logprob(&self, prefix: &[u32], token: u32) -> f64 {
        let ctx = bos_context(&self.model, prefix, |t| self.to_lm(t));
        self.model.logprob(&ctx, self.to_lm(token))
    }

    fn eos_logprob(&self, prefix: &[u32]) -> f64 {
        let ctx = bos_context(&self.model, prefix, |t| self.to_lm(t));
        self.model.logprob(&ctx, self.model.vocab().eos())
    }
}

/// Per-frame argmax, collapse repeats, drop blanks.
pub fn ctc_greedy_decode(post: &PosteriorMatrix, blank: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut prev = None;
    for t in 0..post.frames() {
        let row = post.row(t);
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        let best = best as u32;
        if Some(best) != prev && best != blank {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct PrefixScore {
    /// log P(prefix, path ends in blank)
    blank: f64,
    /// log P(prefix, path ends in its last label)
    label: f64,
    lm: f64,
}

impl PrefixScore {
    fn total(&self) -> f64 {
        log_add(self.blank, self.label)
    }
}

/// CTC prefix beam search. Raw logits are normalized first. The LM context
/// of a prefix is its collapsed label sequence.
pub fn ctc_prefix_beam_search(
    post: &PosteriorMatrix,
    lm: Option<&dyn TokenLm>,
    cfg: &FusionConfig,
    blank: u32,
) -> Result<Vec<Hypothesis>, DecodeError> {
    cfg.validate()?;
    let vocab = post.vocab();
    if blank as usize >= vocab {
        return Err(DecodeError::BlankOutOfRange { blank, vocab });
    }
    let post = post.clone().normalized();
    let ninf = f64::NEG_INFINITY;

    let mut beam: Vec<(Vec<u32>, PrefixScore)> = vec![(
        Vec::new(),
        PrefixScore {
            blank: 0.0,
            label: ninf,
            lm: 0.0,
        },
    )];
    for t in 0..post.frames() {
        let row = post.row(t);
        let mut next: HashMap<Vec<u32>, PrefixScore> = HashMap::with_capacity(beam.len() * vocab);
        for (prefix, score) in &beam {
            let total = score.total();
            for (c, &p) in row.iter().enumerate() {
                if p == ninf {
                    continue;
                }
                let c = c as u32;
                if c == blank {
                    let e = next.entry(prefix.clone()).or_insert(PrefixScore {
                        blank: ninf,
                        label: ninf,
                        lm: score.lm,
                    });
                    e.blank = log_add(e.blank, total + p);
                    continue;
                }
                let repeat = prefix.last() == Some(&c);
                if repeat {
                    // staying on the same label keeps the prefix
                    let e = next.entry(prefix.clone()).or_insert(PrefixScore {
                        blank: ninf,
                        label: ninf,
                        lm: score.lm,
                    });
                    e.label = log_add(e.label, score.label + p);
                }
                let mut extended = prefix.clone();
                extended.push(c);
                let gain = if repeat { score.blank + p } else { total + p };
                let e = next.entry(extended).or_insert_with(|| PrefixScore {
                    blank: ninf,
                    label: ninf,
                    lm: score.lm + lm.map_or(0.0, |m| LN_10 * m.logprob(prefix, c)),
                });
                e.label = log_add(e.label, gain);
            }
        }
        let mut ranked: Vec<(Vec<u32>, PrefixScore, f64)> = next
            .into_iter()
            .filter(|(_, s)| s.total() > ninf)
            .map(|(p, s)| {
                let c = cfg.combine(s.total(), s.lm, p.len());
                (p, s, c)
            })
            .collect();
        ranked.sort_by(|a, b| rank(a.2, &a.0, b.2, &b.0));
        ranked.truncate(cfg.beam);
        beam = ranked.into_iter().map(|(p, s, _)| (p, s)).collect();
    }

    let mut hyps: Vec<Hypothesis> = beam
        .into_iter()
        .map(|(p, s)| Hypothesis::new(p, s.total(), s.lm, true, cfg))
        .collect();
    hyps.sort_by(|a, b| rank(a.combined, &a.tokens, b.combined, &b.tokens));
    hyps.truncate(cfg.nbest);
    Ok(hyps)
}

/// Next-token distribution of an attention decoder.
pub trait StepScorer: Sync {
    fn vocab_size(&self) -> usize;
    fn eos(&self) -> u32;
    /// Natural-log probabilities of every token after `prefix`; must
    /// normalize to one.
    fn next_logprobs(&self, prefix: &[u32]) -> Vec<f64>;
}

/// Seq2seq beam search with shallow fusion. A hypothesis that emits eos
/// becomes terminal, gains the LM end-of-sentence term and keeps its beam
/// slot. Search stops when every beam entry is terminal or after
/// `max_len` tokens; unfinished hypotheses are returned non-terminal.
pub fn seq2seq_beam_search(
    scorer: &dyn StepScorer,
    lm: Option<&dyn TokenLm>,
    cfg: &FusionConfig,
) -> Result<Vec<Hypothesis>, DecodeError> {
    cfg.validate()?;
    let vocab = scorer.vocab_size();
    let eos = scorer.eos();
    let mut beam = vec![Hypothesis::new(Vec::new(), 0.0, 0.0, false, cfg)];
    // every open hypothesis has `step` tokens
    for step in 0..=cfg.max_len {
        if beam.iter().all(|h| h.terminal) {
            break;
        }
        let mut candidates = Vec::with_capacity(beam.len() * vocab);
        for h in beam {
            if h.terminal {
                candidates.push(h);
                continue;
            }
            let scores = scorer.next_logprobs(&h.tokens);
            if scores.len() != vocab {
                return Err(DecodeError::ScorerShape {
                    expected: vocab,
                    got: scores.len(),
                });
            }
            let lse = crate::math::log_sum_exp(&scores);
            if !(lse.abs() <= ROW_NORM_TOLERANCE) {
                return Err(DecodeError::ScorerNotNormalized {
                    prefix_len: h.tokens.len(),
                    lse,
                });
            }
            for (v, &p) in scores.iter().enumerate() {
                let v = v as u32;
                if p == f64::NEG_INFINITY || (v != eos && step == cfg.max_len) {
                    continue;
                }
                if v == eos {
                    let lm_gain = lm.map_or(0.0, |m| LN_10 * m.eos_logprob(&h.tokens));
                    candidates.push(Hypothesis::new(h.tokens.clone(), h.acoustic + p, h.lm + lm_gain, true, cfg));
                } else {
                    let lm_gain = lm.map_or(0.0, |m| LN_10 * m.logprob(&h.tokens, v));
                    let mut tokens = h.tokens.clone();
                    tokens.push(v);
                    candidates.push(Hypothesis::new(tokens, h.acoustic + p, h.lm + lm_gain, false, cfg));
                }
            }
            if step == cfg.max_len {
                // out of length budget: kept as an unfinished hypothesis
                candidates.push(h);
            }
        }
        candidates.sort_by(hyp_order);
        candidates.truncate(cfg.beam);
        beam = candidates;
    }
    beam.sort_by(hyp_order);
    beam.truncate(cfg.nbest);
    Ok(beam)
}

/// Ranking of seq2seq candidates: score, tokens, then terminal first.
fn hyp_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    rank(a.combined, &a.tokens, b.combined, &b.tokens).then_with(|| b.terminal.cmp(&a.terminal))
}

/// Attention-decoder stand-in backed by a posterior file: the row at
/// index `min(prefix length, frames - 1)` scores the next token. Masked
/// ids (typically blank and bos) get zero probability and each row is
/// renormalized.
#[derive(Debug, Clone)]
pub struct PositionalScorer {
    frames: usize,
    vocab: usize,
    rows: Vec<f64>,
    eos: u32,
}

impl PositionalScorer {
    pub fn new(post: &PosteriorMatrix, eos: u32, masked: &[u32]) -> Result<Self, DecodeError> {
        let vocab = post.vocab();
        if eos as usize >= vocab {
            return Err(DecodeError::Config(format!("eos {eos} outside vocabulary of {vocab}")));
        }
        if post.frames() == 0 {
            return Err(DecodeError::Config("posterior has no frames".into()));
        }
        let post = post.clone().normalized();
        let mut rows = post.values().to_vec();
        for row in rows.chunks_mut(vocab) {
            for &m in masked {
                if m != eos {
                    if let Some(v) = row.get_mut(m as usize) {
                        *v = f64::NEG_INFINITY;
                    }
                }
            }
            let lse = crate::math::log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        Ok(Self {
            frames: post.frames(),
            vocab,
            rows,
            eos,
        })
    }
}

impl StepScorer for PositionalScorer {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn eos(&self) -> u32 {
        self.eos
    }

    fn next_logprobs(&self, prefix: &[u32]) -> Vec<f64> {
        let t = prefix.len().min(self.frames - 1);
        self.rows[t * self.vocab..(t + 1) * self.vocab].to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub posterior_path: String,
    #[serde(default)]
    pub text: String,
}

/// JSON-lines utterance list. Relative posterior paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, DecodeError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| DecodeError::Manifest {
                line: i + 1,
                message: e.to_string(),
            })?;
            if !seen.insert(entry.utt_id.clone()) {
                return Err(DecodeError::Manifest {
                    line: i + 1,
                    message: format!("duplicate utt_id {:?}", entry.utt_id),
                });
            }
            entries.push(entry);
        }
        Ok(Self {
            entries,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, DecodeError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.posterior_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Read every posterior file in parallel. Unreadable files are kept as
    /// per-utterance errors.
    pub fn load(&self) -> Vec<Utterance> {
        self.entries
            .par_iter()
            .map(|e| Utterance {
                utt_id: e.utt_id.clone(),
                text: e.text.clone(),
                posterior: PosteriorMatrix::read_file(&self.resolve(e)).map_err(|err| err.to_string()),
            })
            .collect()
    }
}

/// One loaded manifest entry.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub utt_id: String,
    pub text: String,
    pub posterior: Result<PosteriorMatrix, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderChoice {
    Ctc,
    Attention,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptRow {
    pub utt_id: String,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TranscriptTable {
    pub rows: Vec<TranscriptRow>,
    /// `(utt_id, message)` for utterances that could not be decoded.
    pub errors: Vec<(String, String)>,
}

impl TranscriptTable {
    /// `utt_id<TAB>text<TAB>combined_score` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!("{}\t{}\t{:.6}\n", r.utt_id, r.text, r.score));
        }
        out
    }

    pub fn text_of(&self, utt_id: &str) -> Option<&str> {
        self.rows.iter().find(|r| r.utt_id == utt_id).map(|r| r.text.as_str())
    }
}

/// Run `decode` on every utterance in parallel, keeping input order.
pub fn decode_with<F>(utts: &[Utterance], decode: F) -> TranscriptTable
where
    F: Fn(&PosteriorMatrix) -> Result<(String, f64), String> + Sync,
{
    let results: Vec<(String, Result<(String, f64), String>)> = utts
        .par_iter()
        .map(|u| {
            let r = match &u.posterior {
                Ok(p) => decode(p),
                Err(e) => Err(e.clone()),
            };
            (u.utt_id.clone(), r)
        })
        .collect();
    let mut table = TranscriptTable::default();
    for (utt_id, r) in results {
        match r {
            Ok((text, score)) => table.rows.push(TranscriptRow { utt_id, text, score }),
            Err(e) => table.errors.push((utt_id, e)),
        }
    }
    table
}

/// Best hypothesis for one utterance with the chosen decoder.
pub fn decode_utterance(
    post: &PosteriorMatrix,
    inv: &TokenInventory,
    lm: Option<&dyn TokenLm>,
    choice: DecoderChoice,
    cfg: &FusionConfig,
) -> Result<Hypothesis, DecodeError> {
    let hyps = match choice {
        DecoderChoice::Ctc => ctc_prefix_beam_search(post, lm, cfg, inv.blank())?,
        DecoderChoice::Attention => {
            let scorer = PositionalScorer::new(post, inv.eos(), &[inv.blank(), inv.bos()])?;
            seq2seq_beam_search(&scorer, lm, cfg)?
        }
    };
    hyps.into_iter()
        .next()
        .ok_or_else(|| DecodeError::Config("decoder produced no hypothesis".into()))
}

pub fn decode_loaded(
    utts: &[Utterance],
    inv: &TokenInventory,
    lm: Option<&dyn TokenLm>,
    choice: DecoderChoice,
    cfg: &FusionConfig,
) -> Result<TranscriptTable, DecodeError> {
    cfg.validate()?;
    Ok(decode_with(utts, |post| {
        let best = decode_utterance(post, inv, lm, choice, cfg).map_err(|e| e.to_string())?;
        let text = bpe_decode(inv, &best.tokens).map_err(|e| e.to_string())?;
        Ok((text, best.combined))
    }))
}

/// Decode every manifest entry. Unreadable posteriors and per-utterance
/// decoding failures are collected in [`TranscriptTable::errors`].
pub fn decode_manifest(
    manifest: &Manifest,
    inv: &TokenInventory,
    lm: Option<&dyn TokenLm>,
    choice: DecoderChoice,
    cfg: &FusionConfig,
) -> Result<TranscriptTable, DecodeError> {
    decode_loaded(&manifest.load(), inv, lm, choice, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{train, KnOptions, Vocab};
    use crate::math::log_sum_exp;
    use proptest::prelude::*;

    fn probs(rows: &[&[f64]]) -> PosteriorMatrix {
        PosteriorMatrix::from_probs(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn cfg(beam: usize, lm_weight: f64) -> FusionConfig {
        FusionConfig {
            beam,
            lm_weight,
            len_bonus: 0.0,
            max_len: 10,
            nbest: 1,
        }
    }

    /// Exhaustive per-label-sequence mass, best first.
    fn enumerate_ctc(post: &PosteriorMatrix, blank: u32) -> Vec<(Vec<u32>, f64)> {
        let (t_max, v) = (post.frames(), post.vocab());
        let mut mass: HashMap<Vec<u32>, f64> = HashMap::new();
        for code in 0..v.pow(t_max as u32) {
            let mut c = code;
            let mut path = Vec::new();
            let mut lp = 0.0;
            for t in 0..t_max {
                let k = c % v;
                c /= v;
                path.push(k as u32);
                lp += post.get(t, k);
            }
            let mut out = Vec::new();
            let mut prev = None;
            for &k in &path {
                if Some(k) != prev && k != blank {
                    out.push(k);
                }
                prev = Some(k);
            }
            let e = mass.entry(out).or_insert(f64::NEG_INFINITY);
            *e = log_add(*e, lp);
        }
        let mut v: Vec<_> = mass.into_iter().collect();
        v.sort_by(|a, b| rank(a.1, &a.0, b.1, &b.0));
        v
    }

    /// Maps decoder ids blank=0, a=1, b=2, c=3 onto a word model over a, b, c.
    fn abc_lm(sentences: &[&str], order: usize) -> InventoryLm {
        let vocab = Vocab::from_words(["a", "b", "c"]);
        let corpus: Vec<Vec<u32>> = sentences.iter().map(|s| vocab.encode_text(s)).collect();
        let (model, _) = train(&corpus, order, &vocab, &KnOptions::default()).unwrap();
        let map = vec![vocab.unk(), vocab.lookup("a"), vocab.lookup("b"), vocab.lookup("c")];
        InventoryLm::from_map(model, map)
    }

    #[test]
    fn greedy_collapse_rules() {
        let (hi, lo) = (0.9, 0.05);
        let m = probs(&[&[hi, lo, lo], &[lo, hi, lo], &[lo, hi, lo], &[hi, lo, lo], &[lo, lo, hi]]);
        assert_eq!(ctc_greedy_decode(&m, 0), vec![1, 2]);
        let blanks = probs(&[&[hi, lo, lo], &[hi, lo, lo]]);
        assert!(ctc_greedy_decode(&blanks, 0).is_empty());
        let sep = probs(&[&[lo, hi, lo], &[hi, lo, lo], &[lo, hi, lo]]);
        assert_eq!(ctc_greedy_decode(&sep, 0), vec![1, 1]);
    }

    #[test]
    fn full_beam_matches_enumeration_on_toy() {
        let m = probs(&[&[0.5, 0.3, 0.2], &[0.4, 0.1, 0.5]]);
        let mut c = cfg(9, 0.0);
        c.nbest = 9;
        let hyps = ctc_prefix_beam_search(&m, None, &c, 0).unwrap();
        let oracle = enumerate_ctc(&m, 0);
        assert_eq!(hyps.len(), oracle.len());
        for (h, (s, lp)) in hyps.iter().zip(&oracle) {
            assert_eq!(&h.tokens, s);
            assert!((h.acoustic.exp() - lp.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn beam_one_follows_dominant_path() {
        let m = probs(&[
            &[0.1, 0.8, 0.1],
            &[0.8, 0.1, 0.1],
            &[0.1, 0.1, 0.8],
            &[0.1, 0.1, 0.8],
        ]);
        let hyps = ctc_prefix_beam_search(&m, None, &cfg(1, 0.0), 0).unwrap();
        assert_eq!(hyps[0].tokens, ctc_greedy_decode(&m, 0));
    }

    #[test]
    fn strong_lm_overrides_acoustics() {
        // acoustics prefer "b a"; the LM has only seen "a b"
        let m = probs(&[
            &[0.1, 0.3, 0.5999, 0.0001],
            &[0.1, 0.5999, 0.3, 0.0001],
        ]);
        let lm = abc_lm(&["a b", "a b"], 2);
        let plain = ctc_prefix_beam_search(&m, None, &cfg(8, 0.0), 0).unwrap();
        assert_eq!(plain[0].tokens, vec![2, 1]);
        let fused = ctc_prefix_beam_search(&m, Some(&lm), &cfg(8, 5.0), 0).unwrap();
        let best = &fused[0].tokens;
        assert!(best.len() <= 2 && best[..] == [1, 2][..best.len()], "{best:?}");
    }

    #[test]
    fn config_errors() {
        let m = probs(&[&[0.5, 0.5]]);
        assert!(matches!(
            ctc_prefix_beam_search(&m, None, &cfg(0, 0.0), 0),
            Err(DecodeError::Config(_))
        ));
        let mut c = cfg(2, 0.0);
        c.nbest = 3;
        assert!(c.validate().is_err());
        assert!(matches!(
            ctc_prefix_beam_search(&m, None, &cfg(1, 0.0), 5),
            Err(DecodeError::BlankOutOfRange { .. })
        ));
    }

    /// Scorer from a closure over the prefix.
    struct FnScorer<F: Fn(&[u32]) -> Vec<f64> + Sync> {
        vocab: usize,
        eos: u32,
        f: F,
    }

    impl<F: Fn(&[u32]) -> Vec<f64> + Sync> StepScorer for FnScorer<F> {
        fn vocab_size(&self) -> usize {
            self.vocab
        }
        fn eos(&self) -> u32 {
            self.eos
        }
        fn next_logprobs(&self, prefix: &[u32]) -> Vec<f64> {
            (self.f)(prefix)
        }
    }

    fn softmax(x: &[f64]) -> Vec<f64> {
        let l = log_sum_exp(x);
        x.iter().map(|v| v - l).collect()
    }

    #[test]
    fn seq2seq_full_beam_matches_enumeration() {
        // V = 3 with eos = 2, max_len = 2: every sequence of at most two
        // tokens, terminated or not
        let scorer = FnScorer {
            vocab: 3,
            eos: 2,
            f: |p: &[u32]| softmax(&[0.3 * p.len() as f64, -0.2 + p.iter().sum::<u32>() as f64, 0.1]),
        };
        let mut c = cfg(27, 0.0);
        c.max_len = 2;
        c.nbest = 27;
        let hyps = seq2seq_beam_search(&scorer, None, &c).unwrap();
        let mut oracle: Vec<(Vec<u32>, f64, bool)> = Vec::new();
        let mut frontier = vec![(Vec::<u32>::new(), 0.0)];
        for depth in 0..=2 {
            let mut next = Vec::new();
            for (p, s) in &frontier {
                let lp = scorer.next_logprobs(p);
                oracle.push((p.clone(), s + lp[2], true));
                if depth == 2 {
                    oracle.push((p.clone(), *s, false));
                    continue;
                }
                for v in 0..2u32 {
                    let mut q = p.clone();
                    q.push(v);
                    next.push((q, s + lp[v as usize]));
                }
            }
            frontier = next;
        }
        oracle.sort_by(|a, b| rank(a.1, &a.0, b.1, &b.0).then_with(|| b.2.cmp(&a.2)));
        assert_eq!(hyps[0].tokens, oracle[0].0);
        assert!((hyps[0].acoustic - oracle[0].1).abs() < 1e-12);
        // every terminal sequence appears with its exact score
        for (p, s, term) in oracle.iter().filter(|o| o.2) {
            let h = hyps.iter().find(|h| &h.tokens == p && h.terminal == *term).unwrap();
            assert!((h.acoustic - s).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_scorer_returns_its_sequence() {
        let seq = [1u32, 3, 1];
        let scorer = FnScorer {
            vocab: 4,
            eos: 0,
            f: move |p: &[u32]| {
                let want = seq.get(p.len()).copied().unwrap_or(0) as usize;
                (0..4).map(|k| if k == want { 0.0 } else { f64::NEG_INFINITY }).collect()
            },
        };
        let hyps = seq2seq_beam_search(&scorer, None, &cfg(4, 0.0)).unwrap();
        assert_eq!(hyps[0].tokens, seq);
        assert_eq!(hyps[0].acoustic, 0.0);
        assert!(hyps[0].terminal);
    }

    #[test]
    fn unnormalized_scorer_is_rejected() {
        let scorer = FnScorer {
            vocab: 2,
            eos: 1,
            f: |_: &[u32]| vec![0.0, 0.0],
        };
        let err = seq2seq_beam_search(&scorer, None, &cfg(2, 0.0)).unwrap_err();
        assert!(err.to_string().contains("scorer not normalized"));
    }

    #[test]
    fn seq2seq_lm_crossover() {
        // ids: 0 = eos, 1 = a, 2 = b, 3 = c. Acoustics: "a" then c slightly over b.
        let scorer = FnScorer {
            vocab: 4,
            eos: 0,
            f: |p: &[u32]| match p.len() {
                0 => softmax(&[-9.0, 3.0, -9.0, -9.0]),
                1 => softmax(&[-9.0, -9.0, 1.0, 1.2]),
                _ => softmax(&[3.0, -9.0, -9.0, -9.0]),
            },
        };
        let vocab = Vocab::from_words(["a", "b", "c"]);
        let corpus: Vec<Vec<u32>> = ["a b", "a b", "a b", "c a"].iter().map(|s| vocab.encode_text(s)).collect();
        let (model, _) = train(&corpus, 2, &vocab, &KnOptions::default()).unwrap();
        let map = vec![vocab.eos(), vocab.lookup("a"), vocab.lookup("b"), vocab.lookup("c")];
        let lm = InventoryLm::from_map(model, map);

        let ac = |s: &[u32]| {
            let mut t = 0.0;
            for i in 0..=s.len() {
                let tok = s.get(i).copied().unwrap_or(0);
                t += scorer.next_logprobs(&s[..i])[tok as usize];
            }
            t
        };
        let lmv = |s: &[u32]| {
            (0..s.len()).map(|i| lm.logprob(&s[..i], s[i])).sum::<f64>() + lm.eos_logprob(s)
        };
        let (ab, acs) = ([1u32, 2], [1u32, 3]);
        let threshold = (ac(&acs) - ac(&ab)) / (LN_10 * (lmv(&ab) - lmv(&acs)));
        assert!(threshold > 0.0);
        let best = |l: f64| seq2seq_beam_search(&scorer, Some(&lm), &cfg(4, l)).unwrap()[0].tokens.clone();
        assert_eq!(best(0.0), acs);
        assert_eq!(best(threshold * 0.99), acs);
        assert_eq!(best(threshold * 1.01), ab);
    }

    #[test]
    fn max_len_stops_unfinished() {
        let scorer = FnScorer {
            vocab: 2,
            eos: 0,
            f: |_: &[u32]| softmax(&[-20.0, 0.0]),
        };
        let mut c = cfg(2, 0.0);
        c.max_len = 3;
        c.nbest = 2;
        let hyps = seq2seq_beam_search(&scorer, None, &c).unwrap();
        assert_eq!(hyps[0].tokens, vec![1, 1, 1]);
        assert!(!hyps[0].terminal);
        assert!(hyps.iter().all(|h| h.tokens.len() <= 3));
    }

    #[test]
    fn positional_scorer_masks_and_renormalizes() {
        let m = probs(&[&[0.5, 0.1, 0.2, 0.2], &[0.25, 0.25, 0.25, 0.25]]);
        let s = PositionalScorer::new(&m, 2, &[0]).unwrap();
        let r = s.next_logprobs(&[]);
        assert_eq!(r[0], f64::NEG_INFINITY);
        assert!(log_sum_exp(&r).abs() < 1e-12);
        assert!((r[1] - (0.2f64).ln()).abs() < 1e-12);
        assert_eq!(s.next_logprobs(&[1, 1, 1]), s.next_logprobs(&[1]));
    }

    #[test]
    fn manifest_decoding_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let inv = crate::tokenizer::bpe_train(&["ab"], 7).unwrap();
        let v = inv.vocab_size();
        let mk = |ids: &[u32]| {
            let rows: Vec<Vec<f64>> = ids
                .iter()
                .map(|&k| (0..v).map(|j| if j as u32 == k { 0.9 } else { 0.1 / (v - 1) as f64 }).collect())
                .collect();
            PosteriorMatrix::from_probs(&rows).unwrap()
        };
        let (m, a, b) = (inv.marker(), inv.id("a").unwrap(), inv.id("b").unwrap());
        mk(&[m, a, 0, b]).write_file(&dir.path().join("u1.post")).unwrap();
        mk(&[m, b]).write_file(&dir.path().join("u2.post")).unwrap();
        std::fs::write(dir.path().join("bad.post"), b"garbage").unwrap();
        let text = r#"{"utt_id":"u1","posterior_path":"u1.post","text":"ab"}
{"utt_id":"bad","posterior_path":"bad.post","text":"x"}
{"utt_id":"u2","posterior_path":"u2.post","text":"b"}
"#;
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, text).unwrap();
        let man = Manifest::read(&path).unwrap();
        let c = cfg(4, 0.0);
        let table = decode_manifest(&man, &inv, None, DecoderChoice::Ctc, &c).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.errors.len(), 1);
        assert_eq!(table.errors[0].0, "bad");
        assert_eq!(table.text_of("u1"), Some("ab"));
        assert_eq!(table.text_of("u2"), Some("b"));
        // same as a direct call
        let stored = PosteriorMatrix::read_file(&dir.path().join("u1.post")).unwrap();
        let direct = ctc_prefix_beam_search(&stored, None, &c, 0).unwrap();
        assert_eq!(table.rows[0].score, direct[0].combined);
        assert!(table.to_tsv().starts_with("u1\tab\t"));

        let empty = Manifest::parse("", dir.path()).unwrap();
        assert!(decode_manifest(&empty, &inv, None, DecoderChoice::Ctc, &c).unwrap().rows.is_empty());
        assert!(matches!(
            Manifest::parse("{\"utt_id\":\"x\"}", dir.path()),
            Err(DecodeError::Manifest { line: 1, .. })
        ));
        let dup = "{\"utt_id\":\"x\",\"posterior_path\":\"p\"}\n{\"utt_id\":\"x\",\"posterior_path\":\"q\"}";
        assert!(matches!(Manifest::parse(dup, dir.path()), Err(DecodeError::Manifest { line: 2, .. })));

        let att = decode_manifest(&man, &inv, None, DecoderChoice::Attention, &c).unwrap();
        assert_eq!(att.rows.len(), 2);
    }

    /// Uniform rescaling of LM scores used for the argmax invariance check.
    struct Scaled<'a>(&'a dyn TokenLm, f64);

    impl TokenLm for Scaled<'_> {
        fn logprob(&self, prefix: &[u32], token: u32) -> f64 {
            self.1 * self.0.logprob(prefix, token)
        }
        fn eos_logprob(&self, prefix: &[u32]) -> f64 {
            self.1 * self.0.eos_logprob(prefix)
        }
    }

    fn post_strategy() -> impl Strategy<Value = PosteriorMatrix> {
        (1usize..6).prop_flat_map(|t| {
            proptest::collection::vec(-3.0f64..3.0, t * 4)
                .prop_map(move |v| PosteriorMatrix::from_logits(t, 4, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn combined_score_decomposes(post in post_strategy(), lambda in 0.0f64..2.0, beta in -1.0f64..1.0) {
            let lm = abc_lm(&["a b c", "c b", "a a"], 2);
            let c = FusionConfig { beam: 4, lm_weight: lambda, len_bonus: beta, max_len: 10, nbest: 4 };
            for h in ctc_prefix_beam_search(&post, Some(&lm), &c, 0).unwrap() {
                let again = h.acoustic + lambda * h.lm + beta * h.tokens.len() as f64;
                prop_assert!((h.combined - again).abs() < 1e-9);
                prop_assert!(!h.tokens.contains(&0));
            }
        }

        #[test]
        fn zero_weight_ignores_lm(post in post_strategy(), beam in 1usize..6) {
            let lm = abc_lm(&["a b c", "c b"], 3);
            let c = FusionConfig { beam, lm_weight: 0.0, len_bonus: 0.0, max_len: 10, nbest: beam };
            let with = ctc_prefix_beam_search(&post, Some(&lm), &c, 0).unwrap();
            let without = ctc_prefix_beam_search(&post, None, &c, 0).unwrap();
            prop_assert_eq!(with.len(), without.len());
            for (a, b) in with.iter().zip(&without) {
                prop_assert_eq!(&a.tokens, &b.tokens);
                prop_assert_eq!(a.acoustic.to_bits(), b.acoustic.to_bits());
                prop_assert_eq!(a.combined.to_bits(), b.combined.to_bits());
            }
        }

        #[test]
        fn no_beam_beats_the_exhaustive_beam(post in post_strategy(), lambda in 0.0f64..2.0) {
            // prefix scores under pruning are lower bounds of the exact ones,
            // so every beam's best is bounded by the unpruned search
            let lm = abc_lm(&["a b c", "c b", "a a"], 2);
            let full = FusionConfig { beam: 4usize.pow(post.frames() as u32), lm_weight: lambda, len_bonus: 0.0, max_len: 10, nbest: 1 };
            let best = ctc_prefix_beam_search(&post, Some(&lm), &full, 0).unwrap()[0].combined;
            for beam in 1..8 {
                let c = FusionConfig { beam, ..full.clone() };
                let got = ctc_prefix_beam_search(&post, Some(&lm), &c, 0).unwrap()[0].combined;
                prop_assert!(got <= best + 1e-12);
            }
        }

        #[test]
        fn rescaled_lm_keeps_ranking(post in post_strategy(), lambda in 0.0f64..2.0) {
            let lm = abc_lm(&["a b c", "b b a"], 2);
            let scaled = Scaled(&lm, 4.0);
            let c = FusionConfig { beam: 5, lm_weight: lambda, len_bonus: 0.0, max_len: 10, nbest: 5 };
            let c4 = FusionConfig { lm_weight: lambda / 4.0, ..c.clone() };
            let a = ctc_prefix_beam_search(&post, Some(&lm), &c, 0).unwrap();
            let b = ctc_prefix_beam_search(&post, Some(&scaled), &c4, 0).unwrap();
            let ta: Vec<_> = a.iter().map(|h| &h.tokens).collect();
            let tb: Vec<_> = b.iter().map(|h| &h.tokens).collect();
            prop_assert_eq!(ta, tb);
        }
    }
}
