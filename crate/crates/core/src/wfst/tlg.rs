//! CTC decoding constrained by an L∘G graph.
//!
//! The CTC topology is implicit. Hypotheses are collapsed unit prefixes, as
//! in CTC prefix beam search: blank frames and repeated units keep the
//! prefix, a new unit extends it. Each prefix carries the set of L∘G states
//! that its unit sequence can reach, with the lowest graph weight and the
//! word labels of that best path. Acoustic scores are summed over the CTC
//! alignments of the prefix; graph weights use the tropical minimum. A
//! prefix that no graph path accepts is dropped.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use super::{spfa, FstError, Wfst, EPSILON};
use crate::decode::FusionConfig;
use crate::math::log_add;
use crate::posterior::PosteriorMatrix;

/// Best complete path of [`tlg_decode`].
#[derive(Debug, Clone, PartialEq)]
pub struct TlgResult {
    pub words: Vec<String>,
    pub word_labels: Vec<u32>,
    /// Collapsed CTC units as inventory ids.
    pub units: Vec<u32>,
    /// Natural-log acoustic score of the unit sequence.
    pub acoustic: f64,
    /// Graph weight (`-ln`) of the best accepting path, final weight included.
    pub graph: f64,
    /// `acoustic - lm_weight * graph + len_bonus * words`.
    pub score: f64,
}

#[derive(Debug, Clone)]
struct GraphToken {
    cost: f64,
    words: Vec<u32>,
}

fn better(a: &GraphToken, b: &GraphToken) -> bool {
    match a.cost.partial_cmp(&b.cost) {
        Some(Ordering::Less) => true,
        Some(Ordering::Equal) => a.words < b.words,
        _ => false,
    }
}

fn keep_best(map: &mut BTreeMap<u32, GraphToken>, state: u32, tok: GraphToken) {
    match map.get(&state) {
        Some(old) if !better(&tok, old) => {}
        _ => {
            map.insert(state, tok);
        }
    }
}

#[derive(Debug, Clone)]
struct Prefix {
    blank: f64,
    label: f64,
    graph: BTreeMap<u32, GraphToken>,
}

impl Prefix {
    fn acoustic(&self) -> f64 {
        log_add(self.blank, self.label)
    }

    fn best(&self) -> Option<&GraphToken> {
        self.graph.values().fold(None, |acc: Option<&GraphToken>, t| match acc {
            Some(b) if !better(t, b) => Some(b),
            _ => Some(t),
        })
    }
}

/// States reachable through epsilon or auxiliary input arcs, each with its
/// lowest weight and the output labels picked up on the way.
struct Closures<'a> {
    lg: &'a Wfst,
    cache: RefCell<HashMap<u32, std::rc::Rc<Vec<(u32, f64, Vec<u32>)>>>>,
}

impl<'a> Closures<'a> {
    fn new(lg: &'a Wfst) -> Self {
        Self {
            lg,
            cache: RefCell::new(HashMap::new()),
        }
    }

    fn passes(&self, ilabel: u32) -> bool {
        ilabel == EPSILON || self.lg.isyms().is_aux(ilabel)
    }

    fn of(&self, state: u32) -> Result<std::rc::Rc<Vec<(u32, f64, Vec<u32>)>>, FstError> {
        if let Some(c) = self.cache.borrow().get(&state) {
            return Ok(c.clone());
        }
        let lg = self.lg;
        let (dist, parent) = spfa(lg.num_states(), state as usize, |s, out| {
            for (k, a) in lg.arcs(s as u32).iter().enumerate() {
                if self.passes(a.ilabel) {
                    out.push((a.next as usize, a.weight, k));
                }
            }
        })?;
        let mut found = Vec::new();
        for (s, d) in dist.iter().enumerate() {
            let Some(d) = *d else { continue };
            let mut words = Vec::new();
            let mut cur = s;
            while let Some((p, k)) = parent[cur] {
                let o = lg.arcs(p as u32)[k].olabel;
                if o != EPSILON {
                    words.push(o);
                }
                cur = p;
            }
            words.reverse();
            found.push((s as u32, d, words));
        }
        let found = std::rc::Rc::new(found);
        self.cache.borrow_mut().insert(state, found.clone());
        Ok(found)
    }

    /// Graph states after consuming unit `label` from `from`.
    fn advance(&self, from: &BTreeMap<u32, GraphToken>, label: u32, cap: usize) -> Result<BTreeMap<u32, GraphToken>, FstError> {
        let mut out = BTreeMap::new();
        for (&s, tok) in from {
            for (s2, c2, w2) in self.of(s)?.iter() {
                for arc in self.lg.arcs(*s2) {
                    if arc.ilabel != label {
                        continue;
                    }
                    let mut words = tok.words.clone();
                    words.extend_from_slice(w2);
                    if arc.olabel != EPSILON {
                        words.push(arc.olabel);
                    }
                    let cost = tok.cost + c2 + arc.weight;
                    keep_best(&mut out, arc.next, GraphToken { cost, words });
                }
            }
        }
        if out.len() > cap {
            let mut v: Vec<(u32, GraphToken)> = out.into_iter().collect();
            v.sort_by(|a, b| {
                if better(&a.1, &b.1) {
                    Ordering::Less
                } else if better(&b.1, &a.1) {
                    Ordering::Greater
                } else {
                    a.0.cmp(&b.0)
                }
            });
            v.truncate(cap);
            out = v.into_iter().collect();
        }
        Ok(out)
    }

    /// Best way to finish from a token: closure then final weight.
    fn finish(&self, state: u32, tok: &GraphToken) -> Result<Option<GraphToken>, FstError> {
        let mut best: Option<GraphToken> = None;
        for (s2, c2, w2) in self.of(state)?.iter() {
            if let Some(f) = self.lg.final_weight(*s2) {
                let mut words = tok.words.clone();
                words.extend_from_slice(w2);
                let cand = GraphToken {
                    cost: tok.cost + c2 + f,
                    words,
                };
                if best.as_ref().is_none_or(|b| better(&cand, b)) {
                    best = Some(cand);
                }
            }
        }
        Ok(best)
    }
}

/// Decode `post` against the composed lexicon-grammar graph `lg`, whose
/// input labels are inventory ids plus one (with `#k` symbols after them).
/// Prefixes are ranked by `acoustic - lm_weight * graph + len_bonus *
/// words` using their best graph token; `beam` bounds both the number of
/// prefixes and the graph states kept per prefix.
pub fn tlg_decode(post: &PosteriorMatrix, lg: &Wfst, blank: u32, cfg: &FusionConfig) -> Result<TlgResult, FstError> {
    cfg.validate().map_err(|e| FstError::Invalid(e.to_string()))?;
    let units = lg.isyms().len() - lg.isyms().num_aux();
    if units != post.vocab() + 1 {
        return Err(FstError::AlphabetMismatch(format!(
            "posteriors have {} units, graph input alphabet has {}",
            post.vocab(),
            units - 1
        )));
    }
    let post = post.clone().normalized();
    let closures = Closures::new(lg);
    let ninf = f64::NEG_INFINITY;
    let score = |ac: f64, tok: &GraphToken| ac - cfg.lm_weight * tok.cost + cfg.len_bonus * tok.words.len() as f64;

    let mut start_graph = BTreeMap::new();
    start_graph.insert(lg.start(), GraphToken { cost: 0.0, words: Vec::new() });
    let mut beam: Vec<(Vec<u32>, Prefix)> = vec![(
        Vec::new(),
        Prefix {
            blank: 0.0,
            label: ninf,
            graph: start_graph,
        },
    )];

    for t in 0..post.frames() {
        let row = post.row(t);
        let mut next: HashMap<Vec<u32>, Prefix> = HashMap::new();
        for (prefix, entry) in &beam {
            let total = entry.acoustic();
            for (c, &p) in row.iter().enumerate() {
                if p == ninf {
                    continue;
                }
                let c = c as u32;
                let fresh = || Prefix {
                    blank: ninf,
                    label: ninf,
                    graph: entry.graph.clone(),
                };
                if c == blank {
                    let e = next.entry(prefix.clone()).or_insert_with(fresh);
                    e.blank = log_add(e.blank, total + p);
                    continue;
                }
                let repeat = prefix.last() == Some(&c);
                if repeat {
                    let e = next.entry(prefix.clone()).or_insert_with(fresh);
                    e.label = log_add(e.label, entry.label + p);
                }
                let mut extended = prefix.clone();
                extended.push(c);
                let gain = if repeat { entry.blank + p } else { total + p };
                if gain == ninf {
                    continue;
                }
                if !next.contains_key(&extended) {
                    let graph = closures.advance(&entry.graph, c + 1, cfg.beam)?;
                    if graph.is_empty() {
                        continue;
                    }
                    next.insert(
                        extended.clone(),
                        Prefix {
                            blank: ninf,
                            label: ninf,
                            graph,
                        },
                    );
                }
                let e = next.get_mut(&extended).expect("inserted above");
                e.label = log_add(e.label, gain);
            }
        }
        let mut ranked: Vec<(Vec<u32>, Prefix, f64)> = next
            .into_iter()
            .filter(|(_, e)| e.acoustic() > ninf)
            .filter_map(|(p, e)| {
                let s = score(e.acoustic(), e.best()?);
                Some((p, e, s))
            })
            .collect();
        ranked.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(cfg.beam);
        beam = ranked.into_iter().map(|(p, e, _)| (p, e)).collect();
    }

    let mut best: Option<(f64, Vec<u32>, f64, GraphToken)> = None;
    for (prefix, entry) in &beam {
        let ac = entry.acoustic();
        for (&s, tok) in &entry.graph {
            let Some(done) = closures.finish(s, tok)? else { continue };
            let sc = score(ac, &done);
            let wins = match &best {
                None => true,
                Some((bs, bp, _, bt)) => match sc.partial_cmp(bs) {
                    Some(Ordering::Greater) => true,
                    Some(Ordering::Equal) => (&done.words, prefix) < (&bt.words, bp),
                    _ => false,
                },
            };
            if wins {
                best = Some((sc, prefix.clone(), ac, done));
            }
        }
    }
    let name = |labels: &[u32]| -> Vec<String> {
        labels
            .iter()
            .map(|&l| lg.osyms().symbol(l).unwrap_or("<unk>").to_string())
            .collect()
    };
    match best {
        Some((score, units, acoustic, tok)) => Ok(TlgResult {
            words: name(&tok.words),
            word_labels: tok.words,
            units,
            acoustic,
            graph: tok.cost,
            score,
        }),
        None => Err(FstError::NoSurvivingPath {
            partial: beam
                .first()
                .and_then(|(_, e)| e.best())
                .map(|t| name(&t.words))
                .unwrap_or_default(),
        }),
    }
}
