//! Seeded synthetic pipeline: train units and an n-gram LM on a generated
//! corpus, synthesize confusable CTC posteriors for held-out utterances,
//! tune the fusion weights on dev and compare test WER with and without
//! the LM.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::decode::{decode_with, ctc_prefix_beam_search, FusionConfig, InventoryLm, TokenLm, TranscriptTable, Utterance};
use crate::eval::{score_corpus, tune_lm_weight, EvalError, GridPoint, Unit};
use crate::lm::{train, KnOptions, LmError, NGramModel, Vocab};
use crate::posterior::PosteriorMatrix;
use crate::tokenizer::{bpe_decode, bpe_encode, bpe_train, TokenInventory, TokenizerError, MARKER_ID, NUM_RESERVED};

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("invalid demo config: {0}")]
    Config(String),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoConfig {
    pub seed: u64,
    /// Probability that a unit is acoustically confused with another one.
    pub noise: f64,
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub test_sentences: usize,
    pub words: usize,
    pub lm_order: usize,
    pub bpe_vocab: usize,
    pub beam: usize,
    pub lambdas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            noise: 0.3,
            train_sentences: 1500,
            dev_sentences: 40,
            test_sentences: 60,
            words: 16,
            lm_order: 3,
            bpe_vocab: 30,
            beam: 6,
            lambdas: (0..=6).map(|i| i as f64 * 0.25).collect(),
            betas: vec![0.0],
        }
    }
}

impl DemoConfig {
    fn validate(&self) -> Result<(), DemoError> {
        let bad = |m: &str| Err(DemoError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1]");
        }
        if self.train_sentences == 0 || self.dev_sentences == 0 || self.test_sentences == 0 {
            return bad("every split needs at least one sentence");
        }
        if self.words < 2 {
            return bad("need at least two words");
        }
        if self.beam == 0 {
            return bad("beam must be at least 1");
        }
        if self.lambdas.is_empty() || self.betas.is_empty() {
            return bad("weight grids must be non-empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    pub bpe_units: usize,
    pub lm_ngrams: Vec<usize>,
    pub dev_grid: Vec<GridPoint>,
    pub lambda: f64,
    pub beta: f64,
    /// Best `beta` on dev with the LM switched off.
    pub baseline_beta: f64,
    pub test_wer_no_lm: f64,
    pub test_wer_fused: f64,
    /// `test_wer_no_lm - test_wer_fused`, in WER points (percent).
    pub reduction_points: f64,
}

impl DemoReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "seed {} noise {:.3}", c.seed, c.noise);
        let _ = writeln!(
            s,
            "sentences train {} dev {} test {}; {} words; {} BPE units; {}-gram LM {:?}",
            c.train_sentences, c.dev_sentences, c.test_sentences, c.words, self.bpe_units, c.lm_order, self.lm_ngrams
        );
        let _ = writeln!(s, "dev grid:");
        for p in &self.dev_grid {
            let _ = writeln!(s, "  lambda {:.3} beta {:.3} WER {:.4}", p.lambda, p.beta, p.wer);
        }
        let _ = writeln!(s, "tuned lambda {:.3} beta {:.3}", self.lambda, self.beta);
        let _ = writeln!(s, "test WER without LM {:.2}%", 100.0 * self.test_wer_no_lm);
        let _ = writeln!(s, "test WER with LM    {:.2}%", 100.0 * self.test_wer_fused);
        let _ = writeln!(s, "reduction {:.2} points", self.reduction_points);
        s
    }
}

/// Everything the demo builds, for callers that want to keep artifacts.
pub struct DemoRun {
    pub report: DemoReport,
    pub inventory: TokenInventory,
    pub lm: NGramModel,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

/// Word bigram chain with a few strongly preferred successors per word.
struct Language {
    words: Vec<String>,
    /// successors of `<s>` at index `words.len()`
    next: Vec<Vec<(usize, f64)>>,
}

impl Language {
    fn generate(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let letters: Vec<char> = "abcdefghi".chars().collect();
        let mut words: Vec<String> = Vec::new();
        while words.len() < n {
            let len = rng.gen_range(2..=4);
            let w: String = (0..len).map(|_| *letters.choose(rng).expect("letters")).collect();
            if !words.contains(&w) {
                words.push(w);
            }
        }
        let weights = [0.6, 0.3, 0.1];
        let next = (0..=n)
            .map(|_| {
                let mut picks: Vec<usize> = (0..n).collect();
                picks.shuffle(rng);
                picks.into_iter().zip(weights).collect()
            })
            .collect();
        Self { words, next }
    }

    fn sentence(&self, rng: &mut ChaCha8Rng) -> String {
        let len = rng.gen_range(3..=6);
        let mut prev = self.words.len();
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let succ = &self.next[prev];
            let w = succ.choose_weighted(rng, |s| s.1).expect("weights").0;
            out.push(self.words[w].as_str());
            prev = w;
        }
        out.join(" ")
    }
}

/// Two frames per unit and a blank frame after it. A confused unit puts
/// more mass on a random other unit than on itself.
fn synthesize(inv: &TokenInventory, text: &str, noise: f64, rng: &mut ChaCha8Rng) -> PosteriorMatrix {
    let v = inv.vocab_size();
    let confusers: Vec<u32> = (NUM_RESERVED as u32..v as u32).collect();
    let frame = |peaks: &[(u32, f64)]| {
        let rest = 1.0 - peaks.iter().map(|p| p.1).sum::<f64>();
        let mut row = vec![rest / v as f64; v];
        for &(k, p) in peaks {
            row[k as usize] += p;
        }
        row
    };
    let mut rows = Vec::new();
    for u in bpe_encode(inv, text) {
        let confused = u != MARKER_ID && rng.gen_bool(noise);
        let peaks = if confused {
            let mut c = *confusers.choose(rng).expect("units");
            while c == u {
                c = *confusers.choose(rng).expect("units");
            }
            vec![(c, 0.5), (u, 0.3)]
        } else {
            vec![(u, 0.8)]
        };
        rows.push(frame(&peaks));
        rows.push(frame(&peaks));
        rows.push(frame(&[(inv.blank(), 0.8)]));
    }
    PosteriorMatrix::from_probs(&rows).expect("rows are distributions")
}

fn split(inv: &TokenInventory, prefix: &str, texts: &[String], noise: f64, rng: &mut ChaCha8Rng) -> Vec<Utterance> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Utterance {
            utt_id: format!("{prefix}{i:04}"),
            text: t.clone(),
            posterior: Ok(synthesize(inv, t, noise, rng)),
        })
        .collect()
}

fn refs(utts: &[Utterance]) -> Vec<(String, String)> {
    utts.iter().map(|u| (u.utt_id.clone(), u.text.clone())).collect()
}

fn decode_split(utts: &[Utterance], inv: &TokenInventory, lm: &dyn TokenLm, beam: usize, lambda: f64, beta: f64) -> TranscriptTable {
    let cfg = FusionConfig {
        beam,
        lm_weight: lambda,
        len_bonus: beta,
        ..FusionConfig::default()
    };
    // with lambda = 0 the LM cannot change the ranking
    let lm = (lambda != 0.0).then_some(lm);
    decode_with(utts, |post| {
        let best = ctc_prefix_beam_search(post, lm, &cfg, inv.blank()).map_err(|e| e.to_string())?;
        let h = best.first().ok_or("no hypothesis")?;
        Ok((bpe_decode(inv, &h.tokens).map_err(|e| e.to_string())?, h.combined))
    })
}

pub fn run_demo(cfg: &DemoConfig) -> Result<DemoRun, DemoError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lang = Language::generate(cfg.words, &mut rng);
    let mut gen = |n: usize| (0..n).map(|_| lang.sentence(&mut rng)).collect::<Vec<_>>();
    let (train_text, dev_text, test_text) = (gen(cfg.train_sentences), gen(cfg.dev_sentences), gen(cfg.test_sentences));

    let inv = bpe_train(&train_text, cfg.bpe_vocab)?;
    let vocab = Vocab::from_inventory(&inv);
    let corpus: Vec<Vec<u32>> = train_text
        .iter()
        .map(|s| bpe_encode(&inv, s).iter().map(|&u| vocab.lookup(inv.token(u).unwrap_or(""))).collect())
        .collect();
    let (model, _) = train(&corpus, cfg.lm_order, &vocab, &KnOptions::default())?;
    let lm = InventoryLm::new(model.clone(), &inv);

    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let dev = split(&inv, "dev", &dev_text, cfg.noise, &mut noise_rng);
    let test = split(&inv, "test", &test_text, cfg.noise, &mut noise_rng);

    let dev_refs = refs(&dev);
    let tuned = tune_lm_weight(&dev_refs, &cfg.lambdas, &cfg.betas, |l, b| decode_split(&dev, &inv, &lm, cfg.beam, l, b))?;
    let baseline = tune_lm_weight(&dev_refs, &[0.0], &cfg.betas, |l, b| decode_split(&dev, &inv, &lm, cfg.beam, l, b))?;

    let test_refs = refs(&test);
    let score = |l: f64, b: f64| -> Result<f64, DemoError> {
        let table = decode_split(&test, &inv, &lm, cfg.beam, l, b);
        let mut hyps: Vec<(String, String)> = table.rows.iter().map(|r| (r.utt_id.clone(), r.text.clone())).collect();
        hyps.extend(table.errors.iter().map(|(id, _)| (id.clone(), String::new())));
        Ok(score_corpus(&test_refs, &hyps, Unit::Word)?.error_rate)
    };
    let no_lm = score(0.0, baseline.beta)?;
    let fused = score(tuned.lambda, tuned.beta)?;

    let report = DemoReport {
        config: cfg.clone(),
        bpe_units: inv.vocab_size(),
        lm_ngrams: model.ngram_counts(),
        dev_grid: tuned.grid,
        lambda: tuned.lambda,
        beta: tuned.beta,
        baseline_beta: baseline.beta,
        test_wer_no_lm: no_lm,
        test_wer_fused: fused,
        reduction_points: 100.0 * (no_lm - fused),
    };
    Ok(DemoRun {
        report,
        inventory: inv,
        lm: model,
        dev,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DemoConfig {
        DemoConfig {
            train_sentences: 300,
            dev_sentences: 10,
            test_sentences: 10,
            lambdas: vec![0.0, 0.5, 1.0],
            ..DemoConfig::default()
        }
    }

    #[test]
    fn zero_noise_is_perfect_both_ways() {
        let r = run_demo(&DemoConfig { noise: 0.0, ..small() }).unwrap().report;
        assert_eq!((r.test_wer_no_lm, r.test_wer_fused, r.reduction_points), (0.0, 0.0, 0.0));
        assert_eq!(r.lambda, 0.0);
    }

    #[test]
    fn degenerate_grid_gives_no_reduction() {
        let r = run_demo(&DemoConfig { lambdas: vec![0.0], ..small() }).unwrap().report;
        assert_eq!(r.reduction_points, 0.0);
        assert_eq!(r.test_wer_no_lm, r.test_wer_fused);
    }

    #[test]
    fn reruns_are_identical() {
        let a = run_demo(&small()).unwrap().report;
        let b = run_demo(&small()).unwrap().report;
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(matches!(run_demo(&DemoConfig { noise: 1.5, ..small() }), Err(DemoError::Config(_))));
        assert!(matches!(run_demo(&DemoConfig { lambdas: vec![], ..small() }), Err(DemoError::Config(_))));
    }
}
