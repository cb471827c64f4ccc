use std::collections::HashMap;

use super::{LmError, Vocab, MAX_ORDER};

/// Raw and Kneser-Ney adjusted n-gram counts.
///
/// Every sentence is padded as `<s> w1 .. wk </s>`. Raw counts cover all
/// orders. Adjusted counts equal raw counts at the highest order and for
/// n-grams starting with `<s>`; every other lower-order n-gram gets its
/// continuation count, the number of distinct words seen to its left.
/// The lone unigram `<s>` is never counted since it is never predicted.
#[derive(Debug, Clone)]
pub struct CountTable {
    order: usize,
    bos: u32,
    eos: u32,
    sentences: usize,
    raw: Vec<HashMap<Vec<u32>, u64>>,
    adjusted: Vec<HashMap<Vec<u32>, u64>>,
}

impl CountTable {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn sentences(&self) -> usize {
        self.sentences
    }

    pub fn bos(&self) -> u32 {
        self.bos
    }

    pub fn eos(&self) -> u32 {
        self.eos
    }

    /// Raw occurrence count of an n-gram (`ngram.len()` selects the order).
    pub fn raw(&self, ngram: &[u32]) -> u64 {
        self.table(&self.raw, ngram)
    }

    /// Adjusted count used by the estimator.
    pub fn adjusted(&self, ngram: &[u32]) -> u64 {
        self.table(&self.adjusted, ngram)
    }

    fn table(&self, t: &[HashMap<Vec<u32>, u64>], ngram: &[u32]) -> u64 {
        match ngram.len() {
            0 => 0,
            n if n > self.order => 0,
            n => t[n - 1].get(ngram).copied().unwrap_or(0),
        }
    }

    /// Adjusted counts of one order.
    pub fn adjusted_order(&self, n: usize) -> &HashMap<Vec<u32>, u64> {
        &self.adjusted[n - 1]
    }

    pub fn raw_order(&self, n: usize) -> &HashMap<Vec<u32>, u64> {
        &self.raw[n - 1]
    }
}

/// Count n-grams up to `order` over unpadded id sentences.
pub fn count_ngrams(
    corpus: &[Vec<u32>],
    order: usize,
    vocab: &Vocab,
) -> Result<CountTable, LmError> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(LmError::BadOrder(order));
    }
    let (bos, eos) = (vocab.bos(), vocab.eos());
    let mut raw: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
    let mut padded = Vec::new();
    for (si, sentence) in corpus.iter().enumerate() {
        if let Some(&id) = sentence
            .iter()
            .find(|&&id| id as usize >= vocab.len() || id == bos || id == eos)
        {
            return Err(LmError::UnknownId { sentence: si, id });
        }
        padded.clear();
        padded.push(bos);
        padded.extend_from_slice(sentence);
        padded.push(eos);
        // n-grams ending at every position after <s>
        for end in 1..padded.len() {
            let max_n = order.min(end + 1);
            for n in 1..=max_n {
                let gram = &padded[end + 1 - n..=end];
                *raw[n - 1].entry(gram.to_vec()).or_default() += 1;
            }
        }
    }

    let mut adjusted = raw.clone();
    for n in 1..order {
        let mut continuation: HashMap<Vec<u32>, u64> = HashMap::new();
        for gram in raw[n].keys() {
            *continuation.entry(gram[1..].to_vec()).or_default() += 1;
        }
        for (gram, count) in adjusted[n - 1].iter_mut() {
            if gram[0] != bos {
                *count = continuation.get(gram).copied().unwrap_or(0);
            }
        }
    }

    Ok(CountTable {
        order,
        bos,
        eos,
        sentences: corpus.len(),
        raw,
        adjusted,
    })
}
