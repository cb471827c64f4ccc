//! Byte-pair-encoding units.
//!
//! Every whitespace-separated word is encoded as the word-boundary unit
//! [`WORD_MARKER`] followed by the BPE units of the word itself. The marker
//! never takes part in merges, so a sentence always encodes to the
//! concatenation of its per-word encodings and decoding is unambiguous.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

pub const BLANK_TOKEN: &str = "<blank>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";
/// Word-boundary unit emitted before every word.
pub const WORD_MARKER: &str = "\u{2581}";

pub const BLANK_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const MARKER_ID: u32 = 4;

/// Number of reserved entries at the start of every inventory.
pub const NUM_RESERVED: usize = 5;

const HEADER_MAGIC: &str = "BPE v1";
const MERGES_LINE: &str = "#merges";

#[derive(Debug, Error, PartialEq)]
pub enum TokenizerError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocab_size {requested} is too small: minimum is {minimum} (characters plus reserved units)")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("token id {id} at position {position} is out of range for a vocabulary of {vocab_size}")]
    IdOutOfRange {
        id: u32,
        position: usize,
        vocab_size: usize,
    },
    #[error("inventory file line {line}: {message}")]
    Format { line: usize, message: String },
}

/// The unit alphabet shared by the language model, the decoders and the
/// lexicon transducer. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenInventory {
    tokens: Vec<String>,
    merges: Vec<(String, String)>,
    index: HashMap<String, u32>,
    /// (left, right) -> (rank, merged id)
    merge_table: HashMap<(u32, u32), (usize, u32)>,
}

impl TokenInventory {
    fn from_parts(
        tokens: Vec<String>,
        merges: Vec<(String, String)>,
    ) -> Result<Self, TokenizerError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(TokenizerError::Format {
                    line: i + 2,
                    message: format!("duplicate token {t:?}"),
                });
            }
        }
        let mut merge_table = HashMap::with_capacity(merges.len());
        for (rank, (l, r)) in merges.iter().enumerate() {
            let lookup = |s: &str| {
                index.get(s).copied().ok_or_else(|| TokenizerError::Format {
                    line: 0,
                    message: format!("merge {rank} references unknown token {s:?}"),
                })
            };
            let (li, ri) = (lookup(l)?, lookup(r)?);
            let merged = lookup(&format!("{l}{r}"))?;
            merge_table.entry((li, ri)).or_insert((rank, merged));
        }
        Ok(Self {
            tokens,
            merges,
            index,
            merge_table,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn blank(&self) -> u32 {
        BLANK_ID
    }

    pub fn bos(&self) -> u32 {
        BOS_ID
    }

    pub fn eos(&self) -> u32 {
        EOS_ID
    }

    pub fn unk(&self) -> u32 {
        UNK_ID
    }

    pub fn marker(&self) -> u32 {
        MARKER_ID
    }

    /// True for blank, bos, eos and unk.
    pub fn is_special(&self, id: u32) -> bool {
        id < MARKER_ID
    }

    /// Serialize to the `BPE v1` text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER_MAGIC} {}", self.tokens.len());
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out.push_str(MERGES_LINE);
        out.push('\n');
        for (l, r) in &self.merges {
            let _ = writeln!(out, "{l} {r}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        let fmt = |line: usize, message: String| TokenizerError::Format { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines
            .next()
            .ok_or_else(|| fmt(1, "missing header".into()))?;
        let size: usize = header
            .strip_prefix(HEADER_MAGIC)
            .map(str::trim)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt(1, format!("expected `{HEADER_MAGIC} <vocab_size>`, got {header:?}")))?;
        let mut tokens = Vec::with_capacity(size);
        for _ in 0..size {
            let (n, line) = lines
                .next()
                .ok_or_else(|| fmt(tokens.len() + 2, "unexpected end of token list".into()))?;
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(fmt(n, format!("invalid token {line:?}")));
            }
            tokens.push(line.to_string());
        }
        let reserved = [BLANK_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, WORD_MARKER];
        for (i, want) in reserved.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*want) {
                return Err(fmt(i + 2, format!("reserved token {want:?} expected at id {i}")));
            }
        }
        match lines.next() {
            Some((_, MERGES_LINE)) => {}
            Some((n, other)) => return Err(fmt(n, format!("expected `{MERGES_LINE}`, got {other:?}"))),
            None => return Err(fmt(size + 2, format!("missing `{MERGES_LINE}`"))),
        }
        let mut merges = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()))
                }
                _ => return Err(fmt(n, format!("malformed merge {line:?}"))),
            }
        }
        Self::from_parts(tokens, merges)
    }

    /// Apply the merge table to one word (without marker).
    fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let mut syms: Vec<u32> = word
            .chars()
            .map(|c| {
                let mut buf = [0u8; 4];
                self.id(c.encode_utf8(&mut buf)).unwrap_or(UNK_ID)
            })
            .collect();
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| self.merge_table.get(&(w[0], w[1])).map(|&(rank, _)| rank))
                .min();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges[rank];
            let (li, ri) = (self.index[l], self.index[r]);
            let merged = self.merge_table[&(li, ri)].1;
            syms = apply_merge(&syms, li, ri, merged);
        }
        out.extend_from_slice(&syms);
    }
}

/// Replace non-overlapping occurrences of `(left, right)` scanning left to right.
fn apply_merge(syms: &[u32], left: u32, right: u32, merged: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
            out.push(merged);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    out
}

/// Learn a BPE inventory with at most `vocab_size` entries.
///
/// Merges are ranked greedily by pair frequency with ties broken by the
/// lexicographic order of the pair strings. Training stops early when no
/// pair is left to merge.
pub fn bpe_train<S: AsRef<str>>(
    corpus: &[S],
    vocab_size: usize,
) -> Result<TokenInventory, TokenizerError> {
    let mut word_counts: HashMap<&str, u64> = HashMap::new();
    for sentence in corpus {
        for w in sentence.as_ref().split_whitespace() {
            *word_counts.entry(w).or_default() += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let chars: BTreeSet<char> = word_counts.keys().flat_map(|w| w.chars()).collect();
    let minimum = NUM_RESERVED + chars.len();
    if vocab_size < minimum {
        return Err(TokenizerError::VocabTooSmall {
            requested: vocab_size,
            minimum,
        });
    }

    let mut tokens: Vec<String> = [BLANK_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, WORD_MARKER]
        .iter()
        .map(|s| s.to_string())
        .collect();
    tokens.extend(chars.iter().map(|c| c.to_string()));
    let mut index: HashMap<String, u32> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();

    // Sorted for a deterministic iteration order.
    let mut words: Vec<(Vec<u32>, u64)> = {
        let mut ws: Vec<_> = word_counts.into_iter().collect();
        ws.sort_unstable();
        ws.into_iter()
            .map(|(w, c)| (w.chars().map(|ch| index[&ch.to_string()]).collect(), c))
            .collect()
    };

    let mut merges = Vec::new();
    while tokens.len() < vocab_size {
        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        for (syms, count) in &words {
            for w in syms.windows(2) {
                *pair_counts.entry((w[0], w[1])).or_default() += count;
            }
        }
        let best = pair_counts.into_iter().max_by(|(pa, ca), (pb, cb)| {
            ca.cmp(cb).then_with(|| {
                // smaller pair string wins the tie, so it must compare as "greater"
                let ka = (&tokens[pa.0 as usize], &tokens[pa.1 as usize]);
                let kb = (&tokens[pb.0 as usize], &tokens[pb.1 as usize]);
                kb.cmp(&ka)
            })
        });
        let Some(((l, r), _)) = best else { break };
        let merged_str = format!("{}{}", tokens[l as usize], tokens[r as usize]);
        let merged = match index.get(&merged_str) {
            Some(&id) => id,
            None => {
                let id = tokens.len() as u32;
                tokens.push(merged_str.clone());
                index.insert(merged_str, id);
                id
            }
        };
        merges.push((tokens[l as usize].clone(), tokens[r as usize].clone()));
        for (syms, _) in &mut words {
            if syms.windows(2).any(|w| w[0] == l && w[1] == r) {
                *syms = apply_merge(syms, l, r, merged);
            }
        }
    }
    TokenInventory::from_parts(tokens, merges)
}

/// Encode text into unit ids. Characters outside the inventory become unk.
pub fn bpe_encode(inv: &TokenInventory, text: &str) -> Vec<u32> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        out.push(MARKER_ID);
        inv.encode_word(word, &mut out);
    }
    out
}

/// Decode unit ids back into text. Blank, bos and eos are dropped; unk is
/// rendered as its token string.
pub fn bpe_decode(inv: &TokenInventory, ids: &[u32]) -> Result<String, TokenizerError> {
    let mut out = String::new();
    for (position, &id) in ids.iter().enumerate() {
        let tok = inv.token(id).ok_or(TokenizerError::IdOutOfRange {
            id,
            position,
            vocab_size: inv.vocab_size(),
        })?;
        match id {
            BLANK_ID | BOS_ID | EOS_ID => {}
            MARKER_ID => out.push(' '),
            _ => out.push_str(tok),
        }
    }
    Ok(match out.strip_prefix(' ') {
        Some(rest) => rest.to_string(),
        None => out,
    })
}
