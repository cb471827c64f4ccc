//! Lexicon (L) and grammar (G) construction.

use std::collections::{BTreeSet, HashMap};

use super::{Arc, FstError, SymbolTable, Wfst, EPSILON};
use crate::lm::NGramModel;
use crate::tokenizer::TokenInventory;

const LN_10: f64 = std::f64::consts::LN_10;

/// Unit alphabet of an inventory: `<eps>`, then every token in id order.
pub fn units_table(inv: &TokenInventory) -> SymbolTable {
    let mut t = SymbolTable::new();
    for tok in inv.tokens() {
        t.add(tok);
    }
    t
}

/// Word alphabet of a grammar: `<eps>`, then every LM word in id order.
pub fn word_table(model: &NGramModel) -> SymbolTable {
    let mut t = SymbolTable::new();
    for w in model.vocab().words() {
        t.add(w);
    }
    t
}

/// Word pronunciations as unit sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    words: SymbolTable,
    units: SymbolTable,
    /// (word label, inventory unit ids)
    prons: Vec<(u32, Vec<u32>)>,
}

impl Lexicon {
    pub fn new(words: SymbolTable, units: SymbolTable) -> Self {
        Self {
            words,
            units,
            prons: Vec::new(),
        }
    }

    /// Add a pronunciation given as inventory unit ids.
    pub fn add(&mut self, word: &str, units: Vec<u32>) -> Result<(), FstError> {
        let label = self.words.id(word).filter(|&l| l != EPSILON).ok_or_else(|| FstError::UnknownWord(word.into()))?;
        if units.is_empty() {
            return Err(FstError::EmptyPronunciation(word.into()));
        }
        if let Some(&u) = units.iter().find(|&&u| u as usize + 1 >= self.units.len()) {
            return Err(FstError::UnknownUnit {
                word: word.into(),
                unit: format!("#{u}"),
            });
        }
        self.prons.push((label, units));
        Ok(())
    }

    /// Parse `word<TAB>unit unit ...` lines; units are inventory token
    /// strings and words must be in `words`.
    pub fn parse(text: &str, inv: &TokenInventory, words: &SymbolTable) -> Result<Self, FstError> {
        let mut lex = Self::new(words.clone(), units_table(inv));
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, pron) = line.split_once('\t').ok_or_else(|| FstError::Parse {
                line: i + 1,
                message: "expected word<TAB>units".into(),
            })?;
            let units = pron
                .split_whitespace()
                .map(|u| {
                    inv.id(u).ok_or_else(|| FstError::UnknownUnit {
                        word: word.into(),
                        unit: u.into(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            lex.add(word, units)?;
        }
        Ok(lex)
    }

    pub fn words(&self) -> &SymbolTable {
        &self.words
    }

    pub fn units(&self) -> &SymbolTable {
        &self.units
    }

    pub fn pronunciations(&self) -> &[(u32, Vec<u32>)] {
        &self.prons
    }

    pub fn len(&self) -> usize {
        self.prons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prons.is_empty()
    }
}

/// One linear path per pronunciation from the shared start state. The word
/// label rides on the first arc, later arcs output epsilon, and an epsilon
/// arc returns to the start state, which is the only final state. When
/// several words share a pronunciation, each copy ends in its own `#k`
/// symbol.
pub fn build_lexicon_fst(lex: &Lexicon) -> Result<Wfst, FstError> {
    if lex.is_empty() {
        return Err(FstError::EmptyLexicon);
    }
    let mut groups: HashMap<&[u32], usize> = HashMap::new();
    for (_, units) in &lex.prons {
        *groups.entry(units.as_slice()).or_default() += 1;
    }
    let max_dup = groups.values().copied().max().unwrap_or(1);
    let mut isyms = lex.units.clone();
    let aux: Vec<u32> = if max_dup > 1 {
        (1..=max_dup).map(|k| isyms.add(&format!("#{k}"))).collect()
    } else {
        Vec::new()
    };

    let mut fst = Wfst::new(isyms, lex.words.clone());
    fst.set_final(0, 0.0);
    let mut seen: HashMap<&[u32], usize> = HashMap::new();
    for (word, units) in &lex.prons {
        let mut state = 0;
        for (i, &u) in units.iter().enumerate() {
            let next = fst.add_state();
            let olabel = if i == 0 { *word } else { EPSILON };
            fst.add_arc(state, Arc { ilabel: u + 1, olabel, weight: 0.0, next });
            state = next;
        }
        if groups[units.as_slice()] > 1 {
            let k = seen.entry(units.as_slice()).or_default();
            let next = fst.add_state();
            fst.add_arc(state, Arc { ilabel: aux[*k], olabel: EPSILON, weight: 0.0, next });
            *k += 1;
            state = next;
        }
        fst.add_arc(state, Arc { ilabel: EPSILON, olabel: EPSILON, weight: 0.0, next: 0 });
    }
    Ok(fst)
}

/// Backoff grammar acceptor: one state per stored history (the `<s>`
/// history is the start state), a word arc `-ln P(w | h)` for every stored
/// n-gram leading to the longest stored history that ends in `w`, an
/// epsilon arc `-ln backoff(h)` to the next shorter history, and final
/// weight `-ln P(</s> | h)` where that n-gram is stored.
///
/// A plain epsilon backoff arc would let a path skip a stored n-gram and
/// continue from a shorter history, which can be cheaper and makes the
/// tropical weight of a sentence undercount its cost. The backoff arc of a
/// history therefore leads to a copy of the lower-order states without the
/// words stored at that history (failure-arc semantics), so the cheapest
/// path of every sentence carries exactly its model score. The copies grow
/// the machine by up to a factor of the model order.
pub fn arpa_to_grammar_fst(model: &NGramModel) -> Wfst {
    let syms = word_table(model);
    let vocab = model.vocab();
    let (bos, eos) = (vocab.bos(), vocab.eos());
    let max_hist = model.order() - 1;

    let mut hists: Vec<(Vec<u32>, usize)> = model
        .walk()
        .into_iter()
        .filter(|(ctx, _)| ctx.len() <= max_hist)
        .collect();
    // start state first
    if let Some(pos) = hists.iter().position(|(ctx, _)| ctx.as_slice() == [bos]) {
        let s = hists.remove(pos);
        hists.insert(0, s);
    }
    let state_of: HashMap<Vec<u32>, u32> = hists
        .iter()
        .enumerate()
        .map(|(i, (ctx, _))| (ctx.clone(), i as u32))
        .collect();
    let longest_suffix = |seq: &[u32]| -> u32 {
        let seq = &seq[seq.len().saturating_sub(max_hist)..];
        (0..=seq.len())
            .find_map(|k| state_of.get(&seq[k..]).copied())
            .expect("the empty history is always a state")
    };

    struct History {
        /// `(word, cost, next)`, `</s>` included with `next` unused
        words: Vec<(u32, f64, u32)>,
        backoff: Option<(f64, u32)>,
        stored: BTreeSet<u32>,
    }
    let states: Vec<History> = hists
        .iter()
        .map(|(ctx, node)| {
            let node = &model.nodes[*node];
            let mut words: Vec<(u32, f64, u32)> = node
                .probs
                .iter()
                .filter(|(&w, _)| w != bos)
                .map(|(&w, &p)| {
                    let mut next = ctx.clone();
                    next.push(w);
                    let to = if w == eos { 0 } else { longest_suffix(&next) };
                    (w, -LN_10 * p, to)
                })
                .collect();
            words.sort_unstable_by_key(|&(w, _, _)| w);
            let backoff = (!ctx.is_empty()).then(|| (-LN_10 * node.backoff, longest_suffix(&ctx[1..])));
            let stored = words.iter().map(|&(w, _, _)| w).collect();
            History { words, backoff, stored }
        })
        .collect();

    let mut fst = Wfst::new(syms.clone(), syms);
    for _ in 1..hists.len() {
        fst.add_state();
    }
    let mut copies: HashMap<(u32, BTreeSet<u32>), u32> = HashMap::new();
    let mut pending: Vec<(u32, u32, BTreeSet<u32>)> = (0..states.len() as u32).map(|s| (s, s, BTreeSet::new())).collect();
    while let Some((src, g, excluded)) = pending.pop() {
        let h = &states[g as usize];
        for &(w, cost, next) in &h.words {
            if excluded.contains(&w) {
                continue;
            }
            if w == eos {
                fst.set_final(src, cost);
            } else {
                fst.add_arc(src, Arc { ilabel: w + 1, olabel: w + 1, weight: cost, next });
            }
        }
        let Some((bo, lower)) = h.backoff else { continue };
        let mut drop = excluded;
        drop.extend(h.stored.iter().copied());
        let next = if drop.is_empty() {
            lower
        } else {
            match copies.get(&(lower, drop.clone())) {
                Some(&c) => c,
                None => {
                    let c = fst.add_state();
                    copies.insert((lower, drop.clone()), c);
                    pending.push((c, lower, drop));
                    c
                }
            }
        };
        fst.add_arc(src, Arc { ilabel: EPSILON, olabel: EPSILON, weight: bo, next });
    }
    fst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{arpa_parse, train, KnOptions, Vocab};
    use crate::tokenizer::bpe_train;

    fn inv() -> TokenInventory {
        bpe_train(&["a b c"], 8).unwrap()
    }

    fn words(ws: &[&str]) -> SymbolTable {
        let mut t = SymbolTable::new();
        for w in ws {
            t.add(w);
        }
        t
    }

    fn ids(inv: &TokenInventory, units: &str) -> Vec<u32> {
        units.chars().map(|c| inv.id(&c.to_string()).unwrap()).collect()
    }

    fn labels(inv: &TokenInventory, units: &str) -> Vec<u32> {
        ids(inv, units).into_iter().map(|u| u + 1).collect()
    }

    #[test]
    fn single_word_path() {
        let inv = inv();
        let w = words(&["ab"]);
        let mut lex = Lexicon::new(w.clone(), units_table(&inv));
        lex.add("ab", ids(&inv, "ab")).unwrap();
        let l = build_lexicon_fst(&lex).unwrap();
        l.validate().unwrap();
        let ab = w.id("ab").unwrap();
        assert_eq!(l.transduction_weight(&labels(&inv, "ab"), &[ab]).unwrap(), Some(0.0));
        assert_eq!(l.transduction_weight(&labels(&inv, "abab"), &[ab, ab]).unwrap(), Some(0.0));
        assert_eq!(l.transduction_weight(&labels(&inv, "ba"), &[ab]).unwrap(), None);
        assert_eq!(l.transduction_weight(&labels(&inv, "a"), &[ab]).unwrap(), None);
    }

    #[test]
    fn shared_prefix_words_get_separate_paths() {
        let inv = inv();
        let w = words(&["ab", "ac"]);
        let mut lex = Lexicon::new(w.clone(), units_table(&inv));
        lex.add("ab", ids(&inv, "ab")).unwrap();
        lex.add("ac", ids(&inv, "ac")).unwrap();
        let l = build_lexicon_fst(&lex).unwrap();
        // start, two states per word
        assert_eq!(l.num_states(), 5);
        let firsts: Vec<u32> = l.arcs(0).iter().map(|a| a.olabel).collect();
        assert_eq!(firsts, vec![w.id("ab").unwrap(), w.id("ac").unwrap()]);
        assert!(l.arcs(0).iter().all(|a| a.ilabel == ids(&inv, "a")[0] + 1));
        assert_eq!(l.transduction_weight(&labels(&inv, "ac"), &[w.id("ac").unwrap()]).unwrap(), Some(0.0));
        assert_eq!(l.transduction_weight(&labels(&inv, "ac"), &[w.id("ab").unwrap()]).unwrap(), None);
    }

    #[test]
    fn homophones_get_aux_symbols() {
        let inv = inv();
        let w = words(&["x", "y", "z"]);
        let mut lex = Lexicon::new(w.clone(), units_table(&inv));
        lex.add("x", ids(&inv, "ab")).unwrap();
        lex.add("y", ids(&inv, "ab")).unwrap();
        lex.add("z", ids(&inv, "c")).unwrap();
        let l = build_lexicon_fst(&lex).unwrap();
        let (a1, a2) = (l.isyms().id("#1").unwrap(), l.isyms().id("#2").unwrap());
        let mut input = labels(&inv, "ab");
        input.push(a2);
        assert_eq!(l.transduction_weight(&input, &[w.id("y").unwrap()]).unwrap(), Some(0.0));
        input[2] = a1;
        assert_eq!(l.transduction_weight(&input, &[w.id("y").unwrap()]).unwrap(), None);
        assert_eq!(l.isyms().num_aux(), 2);
    }

    #[test]
    fn lexicon_errors() {
        let inv = inv();
        let mut lex = Lexicon::new(words(&["a"]), units_table(&inv));
        assert_eq!(lex.add("a", vec![]), Err(FstError::EmptyPronunciation("a".into())));
        assert_eq!(lex.add("q", vec![5]), Err(FstError::UnknownWord("q".into())));
        assert_eq!(build_lexicon_fst(&lex), Err(FstError::EmptyLexicon));
        let err = Lexicon::parse("a\ta z\n", &inv, &words(&["a"])).unwrap_err();
        assert!(matches!(err, FstError::UnknownUnit { .. }));
        let ok = Lexicon::parse("a\t\u{2581} a\n", &inv, &words(&["a"])).unwrap();
        assert_eq!(ok.pronunciations()[0].1, vec![inv.marker(), inv.id("a").unwrap()]);
    }

    #[test]
    fn unigram_grammar_has_one_state() {
        let text = "\\data\\\nngram 1=4\n\n\\1-grams:\n-99\t<s>\n-0.30103\ta\n-0.30103\t</s>\n-99\t<unk>\n\n\\end\\\n";
        let m = arpa_parse(text).unwrap();
        let g = arpa_to_grammar_fst(&m);
        assert_eq!(g.num_states(), 1);
        let a = g.isyms().id("a").unwrap();
        let arc = g.arcs(0).iter().find(|x| x.ilabel == a).unwrap();
        assert!((arc.weight - 0.5f64.ln().abs()).abs() < 1e-5);
        assert_eq!(arc.next, 0);
        assert!((g.final_weight(0).unwrap() - 0.5f64.ln().abs()).abs() < 1e-5);
    }

    #[test]
    fn bigram_grammar_matches_model_scores() {
        let vocab = Vocab::from_words(["a", "b"]);
        let corpus: Vec<Vec<u32>> = ["a b", "a b a", "b"].iter().map(|s| vocab.encode_text(s)).collect();
        let (m, _) = train(&corpus, 2, &vocab, &KnOptions::default()).unwrap();
        let g = arpa_to_grammar_fst(&m);
        g.validate().unwrap();
        let (a, b) = (vocab.id("a").unwrap(), vocab.id("b").unwrap());
        // stored bigrams: direct path
        let expect = -LN_10 * m.sequence_logprob(&[a, b]);
        let got = g.transduction_weight(&[a + 1, b + 1], &[a + 1, b + 1]).unwrap().unwrap();
        assert!((got - expect).abs() < 1e-9);
        // unseen (b, b) goes through the backoff arc
        assert!(m.stored_logprob(&[b, b]).is_none());
        let expect = -LN_10 * m.sequence_logprob(&[b, b]);
        let got = g.transduction_weight(&[b + 1, b + 1], &[b + 1, b + 1]).unwrap().unwrap();
        assert!((got - expect).abs() < 1e-9);
        assert_eq!(g.start(), 0);
    }

    #[test]
    fn backoff_route_cannot_bypass_a_stored_bigram() {
        // P(b | a) = 0.01 is stored, but backoff(a) * P(b) = 0.5 * 0.4 is larger
        let text = "\\data\\\nngram 1=5\nngram 2=1\n\n\\1-grams:\n-99\t<s>\n-0.397940\ta\t-0.301030\n-0.397940\tb\n-0.698970\t</s>\n-99\t<unk>\n\n\\2-grams:\n-2\ta b\n\n\\end\\\n";
        let m = arpa_parse(text).unwrap();
        let g = arpa_to_grammar_fst(&m);
        g.validate().unwrap();
        let (a, b) = (m.vocab().id("a").unwrap(), m.vocab().id("b").unwrap());
        for s in [vec![a, b], vec![a, a, b], vec![b, a, b, b], vec![a]] {
            let labels: Vec<u32> = s.iter().map(|w| w + 1).collect();
            let got = g.transduction_weight(&labels, &labels).unwrap().unwrap();
            let expect = -LN_10 * m.sequence_logprob(&s);
            assert!((got - expect).abs() < 1e-9, "{s:?}: {got} vs {expect}");
        }
        // one restricted copy of the unigram state
        assert_eq!(g.num_states(), 3);
    }
}
