//! A small weighted finite-state transducer engine over the tropical
//! semiring (weights are `-ln` probabilities, added along paths, minimized
//! across paths).
//!
//! Label 0 is epsilon in every alphabet. Unit alphabets put token-inventory
//! id `k` at label `k + 1`; grammar alphabets put LM vocabulary id `k` at
//! label `k + 1`. Auxiliary disambiguation symbols (`#1`, `#2`, ...) are
//! appended after the units.

mod build;
mod compose;
mod tlg;

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

pub use build::{arpa_to_grammar_fst, build_lexicon_fst, units_table, word_table, Lexicon};
pub use compose::compose;
pub use tlg::{tlg_decode, TlgResult};

pub const EPSILON: u32 = 0;
pub const EPSILON_SYMBOL: &str = "<eps>";

#[derive(Debug, Error, PartialEq)]
pub enum FstError {
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("word {0:?} has an empty pronunciation")]
    EmptyPronunciation(String),
    #[error("word {0:?} is not in the grammar vocabulary")]
    UnknownWord(String),
    #[error("unit {unit:?} in the pronunciation of {word:?} is not in the token inventory")]
    UnknownUnit { word: String, unit: String },
    #[error("invalid transducer: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("negative-weight cycle reachable from the start state")]
    NegativeCycle,
    #[error("no surviving path (best partial: {partial:?})")]
    NoSurvivingPath { partial: Vec<String> },
}

/// Dense symbol table with `<eps>` at id 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for SymbolTable {
    fn default() -> Self {
        Self::new()
    }
}

impl SymbolTable {
    pub fn new() -> Self {
        let mut t = Self {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        t.add(EPSILON_SYMBOL);
        t
    }

    /// Id of `symbol`, adding it if new.
    pub fn add(&mut self, symbol: &str) -> u32 {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(symbol.to_string());
        self.index.insert(symbol.to_string(), id);
        id
    }

    pub fn id(&self, symbol: &str) -> Option<u32> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `#<digits>` disambiguation symbols.
    pub fn is_aux(&self, id: u32) -> bool {
        self.symbol(id).is_some_and(is_aux_symbol)
    }

    pub fn num_aux(&self) -> usize {
        self.symbols.iter().filter(|s| is_aux_symbol(s)).count()
    }

    /// `symbol<TAB>id` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.symbols.iter().enumerate() {
            let _ = writeln!(out, "{s}\t{i}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, FstError> {
        let mut t = Self {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parse = |m: &str| FstError::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let (sym, id) = line.rsplit_once('\t').ok_or_else(|| parse("expected symbol<TAB>id"))?;
            let id: usize = id.parse().map_err(|_| parse("invalid symbol id"))?;
            if id != t.symbols.len() {
                return Err(parse("symbol ids must be dense and ascending"));
            }
            if t.index.contains_key(sym) {
                return Err(parse("duplicate symbol"));
            }
            t.add(sym);
        }
        if t.symbol(EPSILON) != Some(EPSILON_SYMBOL) {
            return Err(FstError::Parse {
                line: 1,
                message: format!("id 0 must be {EPSILON_SYMBOL}"),
            });
        }
        Ok(t)
    }
}

fn is_aux_symbol(s: &str) -> bool {
    s.len() > 1 && s.starts_with('#') && s[1..].bytes().all(|b| b.is_ascii_digit())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub ilabel: u32,
    pub olabel: u32,
    pub weight: f64,
    pub next: u32,
}

/// A transducer with dense state ids, one start state and optional final
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Wfst {
    start: u32,
    arcs: Vec<Vec<Arc>>,
    finals: Vec<Option<f64>>,
    isyms: SymbolTable,
    osyms: SymbolTable,
}

/// A successful path: total weight and its non-epsilon labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FstPath {
    pub weight: f64,
    pub ilabels: Vec<u32>,
    pub olabels: Vec<u32>,
}

impl Wfst {
    /// A machine with a single non-final start state 0.
    pub fn new(isyms: SymbolTable, osyms: SymbolTable) -> Self {
        Self {
            start: 0,
            arcs: vec![Vec::new()],
            finals: vec![None],
            isyms,
            osyms,
        }
    }

    pub fn add_state(&mut self) -> u32 {
        self.arcs.push(Vec::new());
        self.finals.push(None);
        (self.arcs.len() - 1) as u32
    }

    pub fn add_arc(&mut self, from: u32, arc: Arc) {
        self.arcs[from as usize].push(arc);
    }

    pub fn set_final(&mut self, state: u32, weight: f64) {
        self.finals[state as usize] = Some(weight);
    }

    pub fn set_start(&mut self, state: u32) {
        self.start = state;
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn arcs(&self, state: u32) -> &[Arc] {
        &self.arcs[state as usize]
    }

    pub fn final_weight(&self, state: u32) -> Option<f64> {
        self.finals[state as usize]
    }

    pub fn isyms(&self) -> &SymbolTable {
        &self.isyms
    }

    pub fn osyms(&self) -> &SymbolTable {
        &self.osyms
    }

    pub fn validate(&self) -> Result<(), FstError> {
        let n = self.num_states();
        if self.start as usize >= n {
            return Err(FstError::Invalid(format!("start state {} does not exist", self.start)));
        }
        for (s, arcs) in self.arcs.iter().enumerate() {
            for a in arcs {
                if a.next as usize >= n {
                    return Err(FstError::Invalid(format!("arc from {s} targets missing state {}", a.next)));
                }
                if !a.weight.is_finite() {
                    return Err(FstError::Invalid(format!("arc from {s} has weight {}", a.weight)));
                }
                if a.ilabel as usize >= self.isyms.len() || a.olabel as usize >= self.osyms.len() {
                    return Err(FstError::Invalid(format!("arc from {s} has a label outside its alphabet")));
                }
            }
        }
        if let Some(s) = self.finals.iter().position(|f| f.is_some_and(|w| !w.is_finite())) {
            return Err(FstError::Invalid(format!("state {s} has a non-finite final weight")));
        }
        Ok(())
    }

    /// Text form: `src<TAB>dst<TAB>ilabel<TAB>olabel<TAB>weight` per arc and
    /// `state<TAB>weight` per final state. The start state's arcs come
    /// first, so the first line names the start state.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let order = std::iter::once(self.start).chain((0..self.num_states() as u32).filter(|&s| s != self.start));
        for s in order {
            for a in self.arcs(s) {
                let _ = writeln!(out, "{s}\t{}\t{}\t{}\t{}", a.next, a.ilabel, a.olabel, a.weight);
            }
            if let Some(w) = self.final_weight(s) {
                let _ = writeln!(out, "{s}\t{w}");
            }
        }
        out
    }

    pub fn from_text(text: &str, isyms: SymbolTable, osyms: SymbolTable) -> Result<Self, FstError> {
        let mut fst = Self::new(isyms, osyms);
        let mut start = None;
        let ensure = |fst: &mut Wfst, s: u32| {
            while fst.num_states() <= s as usize {
                fst.add_state();
            }
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse = |m: &str| FstError::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            let num = |s: &str| s.parse::<u32>().map_err(|_| parse("invalid integer field"));
            let weight = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|w| w.is_finite())
                    .ok_or_else(|| parse("invalid weight"))
            };
            let src = num(f[0])?;
            start.get_or_insert(src);
            ensure(&mut fst, src);
            match f.len() {
                1 | 2 => {
                    let w = if f.len() == 2 { weight(f[1])? } else { 0.0 };
                    fst.set_final(src, w);
                }
                4 | 5 => {
                    let next = num(f[1])?;
                    ensure(&mut fst, next);
                    let w = if f.len() == 5 { weight(f[4])? } else { 0.0 };
                    fst.add_arc(
                        src,
                        Arc {
                            ilabel: num(f[2])?,
                            olabel: num(f[3])?,
                            weight: w,
                            next,
                        },
                    );
                }
                _ => return Err(parse("expected 2 or 5 tab-separated fields")),
            }
        }
        fst.start = start.unwrap_or(0);
        fst.validate()?;
        Ok(fst)
    }

    /// Lowest-weight accepting path, or `None` if no final state is
    /// reachable.
    pub fn shortest_path(&self) -> Result<Option<FstPath>, FstError> {
        let n = self.num_states();
        let (dist, parent) = spfa(n, self.start as usize, |s, out| {
            for (k, a) in self.arcs(s as u32).iter().enumerate() {
                out.push((a.next as usize, a.weight, k));
            }
        })?;
        let mut best: Option<(f64, usize)> = None;
        for s in 0..n {
            if let (Some(d), Some(f)) = (dist[s], self.finals[s]) {
                if best.is_none_or(|(b, _)| d + f < b) {
                    best = Some((d + f, s));
                }
            }
        }
        let Some((weight, end)) = best else {
            return Ok(None);
        };
        let mut arcs = Vec::new();
        let mut s = end;
        while let Some((p, k)) = parent[s] {
            arcs.push(self.arcs[p][k]);
            s = p;
        }
        arcs.reverse();
        Ok(Some(FstPath {
            weight,
            ilabels: arcs.iter().map(|a| a.ilabel).filter(|&l| l != EPSILON).collect(),
            olabels: arcs.iter().map(|a| a.olabel).filter(|&l| l != EPSILON).collect(),
        }))
    }

    /// Lowest weight of any accepting path whose non-epsilon input and
    /// output labels are exactly `input` and `output`.
    pub fn transduction_weight(&self, input: &[u32], output: &[u32]) -> Result<Option<f64>, FstError> {
        let (ni, no) = (input.len() + 1, output.len() + 1);
        let n = self.num_states() * ni * no;
        let key = |s: usize, i: usize, j: usize| (s * ni + i) * no + j;
        let (dist, _) = spfa(n, key(self.start as usize, 0, 0), |k, out| {
            let (s, i, j) = (k / (ni * no), (k / no) % ni, k % no);
            for (idx, a) in self.arcs(s as u32).iter().enumerate() {
                let i2 = match a.ilabel {
                    EPSILON => i,
                    l if i < input.len() && input[i] == l => i + 1,
                    _ => continue,
                };
                let j2 = match a.olabel {
                    EPSILON => j,
                    l if j < output.len() && output[j] == l => j + 1,
                    _ => continue,
                };
                out.push((key(a.next as usize, i2, j2), a.weight, idx));
            }
        })?;
        let mut best: Option<f64> = None;
        for s in 0..self.num_states() {
            if let (Some(d), Some(f)) = (dist[key(s, input.len(), output.len())], self.finals[s]) {
                best = Some(best.map_or(d + f, |b: f64| b.min(d + f)));
            }
        }
        Ok(best)
    }
}

type Parents = Vec<Option<(usize, usize)>>;

/// Single-source shortest paths with possibly negative weights (label
/// correcting). `edges(s, out)` pushes `(target, weight, arc index)`.
pub(crate) fn spfa<F>(n: usize, source: usize, mut edges: F) -> Result<(Vec<Option<f64>>, Parents), FstError>
where
    F: FnMut(usize, &mut Vec<(usize, f64, usize)>),
{
    let mut dist: Vec<Option<f64>> = vec![None; n];
    let mut parent: Parents = vec![None; n];
    let mut in_queue = vec![false; n];
    let mut relaxations = vec![0usize; n];
    let mut queue = VecDeque::new();
    dist[source] = Some(0.0);
    queue.push_back(source);
    in_queue[source] = true;
    let mut out = Vec::new();
    while let Some(s) = queue.pop_front() {
        in_queue[s] = false;
        let d = dist[s].expect("queued states have a distance");
        out.clear();
        edges(s, &mut out);
        for &(t, w, k) in &out {
            let nd = d + w;
            if dist[t].is_none_or(|old| nd < old - 1e-12) {
                dist[t] = Some(nd);
                parent[t] = Some((s, k));
                relaxations[t] += 1;
                if relaxations[t] > n + 1 {
                    return Err(FstError::NegativeCycle);
                }
                if !in_queue[t] {
                    in_queue[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    Ok((dist, parent))
}
