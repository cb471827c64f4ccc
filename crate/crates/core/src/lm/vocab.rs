use std::collections::HashMap;

use super::LmError;
use crate::tokenizer::{TokenInventory, BLANK_ID, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN};

/// Word list of an n-gram model. Ids are positions in the list.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
    bos: u32,
    eos: u32,
    unk: u32,
}

impl Vocab {
    /// Build from an ordered word list. `<s>` and `</s>` are required;
    /// `<unk>` is appended when absent.
    pub fn new(mut words: Vec<String>) -> Result<Self, LmError> {
        if !words.iter().any(|w| w == UNK_TOKEN) {
            words.push(UNK_TOKEN.to_string());
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            index.entry(w.clone()).or_insert(i as u32);
        }
        let get = |w: &'static str| index.get(w).copied().ok_or(LmError::MissingSpecial(w));
        let (bos, eos, unk) = (get(BOS_TOKEN)?, get(EOS_TOKEN)?, get(UNK_TOKEN)?);
        Ok(Self {
            words,
            index,
            bos,
            eos,
            unk,
        })
    }

    /// Every inventory unit except blank, in id order.
    pub fn from_inventory(inv: &TokenInventory) -> Self {
        let words = inv
            .tokens()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as u32 != BLANK_ID)
            .map(|(_, t)| t.clone())
            .collect();
        Self::new(words).expect("inventory carries the reserved tokens")
    }

    /// `<s>`, `</s>`, `<unk>` followed by the distinct words in sorted order.
    pub fn from_words<'a, I: IntoIterator<Item = &'a str>>(words: I) -> Self {
        let mut ws: Vec<&str> = words
            .into_iter()
            .filter(|w| ![BOS_TOKEN, EOS_TOKEN, UNK_TOKEN].contains(w))
            .collect();
        ws.sort_unstable();
        ws.dedup();
        let all = [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN]
            .into_iter()
            .chain(ws)
            .map(str::to_string)
            .collect();
        Self::new(all).expect("specials present")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    /// Id of `word`, or unk.
    pub fn lookup(&self, word: &str) -> u32 {
        self.id(word).unwrap_or(self.unk)
    }

    pub fn bos(&self) -> u32 {
        self.bos
    }

    pub fn eos(&self) -> u32 {
        self.eos
    }

    pub fn unk(&self) -> u32 {
        self.unk
    }

    /// Ids a model distributes probability over: everything but `<s>`.
    pub fn targets(&self) -> impl Iterator<Item = u32> + '_ {
        let bos = self.bos;
        (0..self.words.len() as u32).filter(move |&i| i != bos)
    }

    /// Split text on whitespace and map every word to an id.
    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|w| self.lookup(w)).collect()
    }
}
