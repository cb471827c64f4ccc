//! Shared fixtures for the criterion benches, built from the seeded demo
//! pipeline so that every bench runs on the same small synthetic task.

use asrdec_core::lm::{train, KnOptions, Vocab};
use asrdec_core::wfst::word_table;
use asrdec_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub inventory: TokenInventory,
    pub unit_lm: InventoryLm,
    pub posteriors: Vec<PosteriorMatrix>,
    pub targets: Vec<Vec<u32>>,
    pub sentences: Vec<String>,
    pub word_lm: NGramModel,
    pub lg: Wfst,
}

pub fn fixture() -> Fixture {
    let cfg = DemoConfig {
        lambdas: vec![0.0],
        ..DemoConfig::default()
    };
    let run = run_demo(&cfg).expect("demo pipeline");
    let posteriors: Vec<PosteriorMatrix> = run.test.iter().map(|u| u.posterior.clone().unwrap()).collect();
    let sentences: Vec<String> = run.test.iter().chain(&run.dev).map(|u| u.text.clone()).collect();
    let targets = run.test.iter().map(|u| bpe_encode(&run.inventory, &u.text)).collect();
    let word_lm = word_model(&sentences, 3);
    let lg = lg_graph(&run.inventory, &word_lm);
    Fixture {
        unit_lm: InventoryLm::new(run.lm, &run.inventory),
        inventory: run.inventory,
        posteriors,
        targets,
        sentences,
        word_lm,
        lg,
    }
}

pub fn word_model(sentences: &[String], order: usize) -> NGramModel {
    let vocab = Vocab::from_words(sentences.iter().flat_map(|s| s.split_whitespace()));
    let corpus: Vec<Vec<u32>> = sentences.iter().map(|s| vocab.encode_text(s)).collect();
    train(&corpus, order, &vocab, &KnOptions::default()).expect("word LM").0
}

pub fn lg_graph(inv: &TokenInventory, model: &NGramModel) -> Wfst {
    let mut lex = Lexicon::new(word_table(model), wfst::units_table(inv));
    let vocab = model.vocab();
    for (id, w) in vocab.words().iter().enumerate() {
        let id = id as u32;
        if id != vocab.bos() && id != vocab.eos() && id != vocab.unk() {
            lex.add(w, bpe_encode(inv, w)).expect("lexicon entry");
        }
    }
    let l = build_lexicon_fst(&lex).expect("lexicon fst");
    compose(&l, &arpa_to_grammar_fst(model)).expect("composition")
}

/// Random word-sequence pairs of roughly `len` tokens for edit distance.
pub fn word_pairs(n: usize, len: usize, seed: u64) -> Vec<(Vec<u32>, Vec<u32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r: Vec<u32> = (0..len).map(|_| rng.gen_range(0..50)).collect();
            let mut h = Vec::with_capacity(len);
            for &w in &r {
                if rng.gen::<f64>() < 0.1 {
                    continue;
                }
                h.push(if rng.gen::<f64>() < 0.15 { rng.gen_range(0..50) } else { w });
            }
            (r, h)
        })
        .collect()
}
