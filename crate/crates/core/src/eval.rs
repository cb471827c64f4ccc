//! Error-rate scoring, fusion-weight tuning and checkpoint selection.
//!
//! Texts are normalized by trimming and collapsing runs of whitespace; no
//! case folding is applied. Character error rates count spaces as
//! characters.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::decode::TranscriptTable;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("utterance ids differ: missing from hypotheses {missing_in_hyp:?}, missing from references {missing_in_ref:?}")]
    IdMismatch {
        missing_in_hyp: Vec<String>,
        missing_in_ref: Vec<String>,
    },
    #[error("reference corpus has no words or characters to score against")]
    EmptyReference,
    #[error("grid is empty")]
    EmptyGrid,
    #[error("invalid grid {0:?}: expected start:stop:step or a comma-separated list")]
    BadGrid(String),
    #[error("every utterance failed to decode at lambda={lambda}, beta={beta}")]
    AllFailed { lambda: f64, beta: f64 },
    #[error("no checkpoints to choose from")]
    NoCandidates,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Word,
    Char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EditOp {
    Match { r: usize, h: usize },
    Sub { r: usize, h: usize },
    Del { r: usize },
    Ins { h: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Alignment {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ops: Vec<EditOp>,
}

impl Alignment {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Unit-cost Levenshtein alignment. The trace is recovered from the end,
/// preferring substitution (or match), then deletion, then insertion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Alignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i * w + j] = diag.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let (mut i, mut j) = (n, m);
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut s, mut del, mut ins) = (0, 0, 0);
    while i > 0 || j > 0 {
        let cur = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if d[(i - 1) * w + j - 1] + usize::from(!same) == cur {
                ops.push(if same {
                    EditOp::Match { r: i - 1, h: j - 1 }
                } else {
                    s += 1;
                    EditOp::Sub { r: i - 1, h: j - 1 }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == cur {
            del += 1;
            ops.push(EditOp::Del { r: i - 1 });
            i -= 1;
        } else {
            ins += 1;
            ops.push(EditOp::Ins { h: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    Alignment {
        substitutions: s,
        deletions: del,
        insertions: ins,
        ops,
    }
}

pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn units_of(text: &str, unit: Unit) -> Vec<String> {
    let norm = normalize(text);
    match unit {
        Unit::Word => norm.split(' ').filter(|w| !w.is_empty()).map(str::to_string).collect(),
        Unit::Char => norm.chars().map(|c| c.to_string()).collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub ref_len: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl Counts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Errors over reference length; infinite for an empty reference with
    /// errors, 0 when both are empty.
    pub fn rate(&self) -> f64 {
        match (self.errors(), self.ref_len) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            (e, n) => e as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceScore {
    pub utt_id: String,
    pub counts: Counts,
    /// One code per aligned position: `C` match, `S`, `D`, `I`.
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub unit: Unit,
    pub utterances: Vec<UtteranceScore>,
    pub totals: Counts,
    /// `totals.errors() / totals.ref_len`.
    pub error_rate: f64,
}

impl EvalReport {
    pub fn metric(&self) -> &'static str {
        match self.unit {
            Unit::Word => "WER",
            Unit::Char => "CER",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>6} {:>5} {:>5} {:>5} {:>8}", "utt_id", "ref", "sub", "del", "ins", self.metric());
        for u in &self.utterances {
            let c = &u.counts;
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>5} {:>5} {:>5} {:>8.4}",
                u.utt_id,
                c.ref_len,
                c.substitutions,
                c.deletions,
                c.insertions,
                c.rate()
            );
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>5} {:>5} {:>5} {:>8.4}",
            "TOTAL", t.ref_len, t.substitutions, t.deletions, t.insertions, self.error_rate
        );
        let _ = writeln!(out, "{} {:.4}", self.metric(), self.error_rate);
        out
    }
}

/// Score hypotheses against references, matched by utterance id and
/// reported in reference order.
pub fn score_corpus(refs: &[(String, String)], hyps: &[(String, String)], unit: Unit) -> Result<EvalReport, EvalError> {
    let hyp_map: HashMap<&str, &str> = hyps.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    let ref_ids: HashSet<&str> = refs.iter().map(|(k, _)| k.as_str()).collect();
    let missing_in_hyp: Vec<String> = refs
        .iter()
        .filter(|(k, _)| !hyp_map.contains_key(k.as_str()))
        .map(|(k, _)| k.clone())
        .collect();
    let missing_in_ref: Vec<String> = hyps
        .iter()
        .filter(|(k, _)| !ref_ids.contains(k.as_str()))
        .map(|(k, _)| k.clone())
        .collect();
    if !missing_in_hyp.is_empty() || !missing_in_ref.is_empty() {
        return Err(EvalError::IdMismatch {
            missing_in_hyp,
            missing_in_ref,
        });
    }
    let mut totals = Counts::default();
    let mut utterances = Vec::with_capacity(refs.len());
    for (id, r) in refs {
        let (ru, hu) = (units_of(r, unit), units_of(hyp_map[id.as_str()], unit));
        let a = edit_distance(&ru, &hu);
        let counts = Counts {
            ref_len: ru.len(),
            substitutions: a.substitutions,
            deletions: a.deletions,
            insertions: a.insertions,
        };
        totals.ref_len += counts.ref_len;
        totals.substitutions += counts.substitutions;
        totals.deletions += counts.deletions;
        totals.insertions += counts.insertions;
        let trace = a
            .ops
            .iter()
            .map(|op| match op {
                EditOp::Match { .. } => 'C',
                EditOp::Sub { .. } => 'S',
                EditOp::Del { .. } => 'D',
                EditOp::Ins { .. } => 'I',
            })
            .collect();
        utterances.push(UtteranceScore {
            utt_id: id.clone(),
            counts,
            trace,
        });
    }
    if totals.ref_len == 0 {
        return Err(EvalError::EmptyReference);
    }
    Ok(EvalReport {
        unit,
        utterances,
        error_rate: totals.errors() as f64 / totals.ref_len as f64,
        totals,
    })
}

/// Parse `utt_id<TAB>text` lines. A line without a tab is an utterance
/// with empty text.
pub fn read_tsv(text: &str) -> Result<Vec<(String, String)>, EvalError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line.split_once('\t').unwrap_or((line, ""));
        // decoder tables carry a trailing score column
        let text = rest.split('\t').next().unwrap_or("");
        if !seen.insert(id.to_string()) {
            return Err(EvalError::Parse {
                line: i + 1,
                message: format!("duplicate utt_id {id:?}"),
            });
        }
        out.push((id.to_string(), text.to_string()));
    }
    Ok(out)
}

/// Grid values from `start:stop:step` (inclusive, values rounded to 1e-9)
/// or `a,b,c`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, EvalError> {
    let bad = || EvalError::BadGrid(spec.to_string());
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    let parts: Vec<&str> = spec.split(':').collect();
    let values = match parts.len() {
        1 => spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        3 => {
            let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if step <= 0.0 || stop < start {
                return Err(bad());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect()
        }
        _ => return Err(bad()),
    };
    if values.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub beta: f64,
    pub wer: f64,
    /// Utterances that failed to decode and were scored as empty output.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningResult {
    pub grid: Vec<GridPoint>,
    pub lambda: f64,
    pub beta: f64,
    pub wer: f64,
}

/// Decode the dev set at every `(lambda, beta)` grid point with `decode`
/// and keep the lowest WER, preferring smaller `lambda`, then smaller
/// `beta`, on ties. Utterances that fail to decode count as empty output.
pub fn tune_lm_weight<F>(refs: &[(String, String)], lambdas: &[f64], betas: &[f64], decode: F) -> Result<TuningResult, EvalError>
where
    F: Fn(f64, f64) -> TranscriptTable + Sync,
{
    if lambdas.is_empty() || betas.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let points: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| betas.iter().map(move |&b| (l, b))).collect();
    let scored: Vec<Result<GridPoint, EvalError>> = points
        .par_iter()
        .map(|&(lambda, beta)| {
            let table = decode(lambda, beta);
            if !refs.is_empty() && table.rows.is_empty() {
                return Err(EvalError::AllFailed { lambda, beta });
            }
            let mut hyps: Vec<(String, String)> = table.rows.iter().map(|r| (r.utt_id.clone(), r.text.clone())).collect();
            hyps.extend(table.errors.iter().map(|(id, _)| (id.clone(), String::new())));
            let report = score_corpus(refs, &hyps, Unit::Word)?;
            Ok(GridPoint {
                lambda,
                beta,
                wer: report.error_rate,
                failed: table.errors.len(),
            })
        })
        .collect();
    let grid = scored.into_iter().collect::<Result<Vec<_>, _>>()?;
    let best = grid
        .iter()
        .min_by(|a, b| {
            a.wer
                .total_cmp(&b.wer)
                .then(a.lambda.total_cmp(&b.lambda))
                .then(a.beta.total_cmp(&b.beta))
        })
        .expect("grid is non-empty");
    Ok(TuningResult {
        lambda: best.lambda,
        beta: best.beta,
        wer: best.wer,
        grid,
    })
}

/// The lowest-WER checkpoint; the earliest wins ties.
pub fn select_best_checkpoint(candidates: &[(String, f64)]) -> Result<String, EvalError> {
    let mut best: Option<&(String, f64)> = None;
    for c in candidates {
        if best.is_none_or(|b| c.1 < b.1) {
            best = Some(c);
        }
    }
    best.map(|b| b.0.clone()).ok_or(EvalError::NoCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::TranscriptRow;
    use proptest::prelude::*;

    fn corpus(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    /// Breadth-first search over edit scripts: the fewest single-token
    /// edits turning `a` into `b`.
    fn brute_force_distance(a: &[u8], b: &[u8], alphabet: &[u8]) -> usize {
        use std::collections::VecDeque;
        let limit = a.len().max(b.len());
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([(a.to_vec(), 0usize)]);
        seen.insert(a.to_vec());
        while let Some((s, d)) = queue.pop_front() {
            if s == b {
                return d;
            }
            if s.len() > limit + 1 {
                continue;
            }
            let mut next = Vec::new();
            for i in 0..=s.len() {
                for &c in alphabet {
                    let mut t = s.clone();
                    t.insert(i, c);
                    next.push(t);
                }
                if i < s.len() {
                    let mut t = s.clone();
                    t.remove(i);
                    next.push(t);
                    for &c in alphabet {
                        let mut t = s.clone();
                        t[i] = c;
                        next.push(t);
                    }
                }
            }
            for t in next {
                if seen.insert(t.clone()) {
                    queue.push_back((t, d + 1));
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn hand_cases() {
        let a = edit_distance(&["a", "b", "c"], &["a", "b", "c"]);
        assert_eq!((a.substitutions, a.deletions, a.insertions), (0, 0, 0));
        let a = edit_distance(&["a", "b", "c"], &["a", "x", "c"]);
        assert_eq!((a.substitutions, a.deletions, a.insertions), (1, 0, 0));
        assert_eq!(a.ops[1], EditOp::Sub { r: 1, h: 1 });
        // substitution preferred over delete + insert
        let a = edit_distance(&["a"], &["b"]);
        assert_eq!(a.ops, vec![EditOp::Sub { r: 0, h: 0 }]);
        let a = edit_distance::<u8>(&[], &[1, 2]);
        assert_eq!(a.insertions, 2);
    }

    #[test]
    fn matches_edit_script_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..150 {
            let a: Vec<u8> = (0..rng.gen_range(0..5)).map(|_| rng.gen_range(0..3)).collect();
            let b: Vec<u8> = (0..rng.gen_range(0..5)).map(|_| rng.gen_range(0..3)).collect();
            assert_eq!(edit_distance(&a, &b).errors(), brute_force_distance(&a, &b, &[0, 1, 2]));
        }
    }

    #[test]
    fn corpus_scoring_cases() {
        let refs = corpus(&[("u1", "a b c"), ("u2", "a b")]);
        let same = score_corpus(&refs, &refs, Unit::Word).unwrap();
        assert_eq!(same.error_rate, 0.0);

        let one = score_corpus(&corpus(&[("u", "a b")]), &corpus(&[("u", "a")]), Unit::Word).unwrap();
        assert_eq!(one.totals.deletions, 1);
        assert_eq!(one.error_rate, 0.5);

        let sub = score_corpus(&corpus(&[("u", "a b c")]), &corpus(&[("u", "a x c")]), Unit::Word).unwrap();
        assert_eq!(sub.error_rate, 1.0 / 3.0);
        assert_eq!(sub.utterances[0].trace, "CSC");

        let cer = score_corpus(&corpus(&[("u", "ab")]), &corpus(&[("u", "ac")]), Unit::Char).unwrap();
        assert_eq!(cer.error_rate, 0.5);
        // spaces count as characters
        let sp = score_corpus(&corpus(&[("u", "a b")]), &corpus(&[("u", "ab")]), Unit::Char).unwrap();
        assert_eq!((sp.totals.ref_len, sp.totals.deletions), (3, 1));
        // whitespace is collapsed before scoring
        let ws = score_corpus(&corpus(&[("u", " a   b ")]), &corpus(&[("u", "a b")]), Unit::Char).unwrap();
        assert_eq!(ws.error_rate, 0.0);
    }

    #[test]
    fn empty_reference_utterance_counts_insertions() {
        let refs = corpus(&[("u1", "a b"), ("u2", "")]);
        let hyps = corpus(&[("u1", "a b"), ("u2", "x y")]);
        let r = score_corpus(&refs, &hyps, Unit::Word).unwrap();
        assert_eq!(r.utterances[1].counts.ref_len, 0);
        assert_eq!(r.totals.insertions, 2);
        assert_eq!(r.error_rate, 1.0);
        assert_eq!(
            score_corpus(&corpus(&[("u", "")]), &corpus(&[("u", "x")]), Unit::Word),
            Err(EvalError::EmptyReference)
        );
    }

    #[test]
    fn id_mismatch_lists_ids() {
        let err = score_corpus(&corpus(&[("a", "x"), ("b", "y")]), &corpus(&[("a", "x"), ("c", "z")]), Unit::Word).unwrap_err();
        assert_eq!(
            err,
            EvalError::IdMismatch {
                missing_in_hyp: vec!["b".into()],
                missing_in_ref: vec!["c".into()],
            }
        );
    }

    #[test]
    fn report_is_deterministic() {
        let refs = corpus(&[("u1", "a b c"), ("u2", "d")]);
        let hyps = corpus(&[("u1", "a c"), ("u2", "d e")]);
        let a = score_corpus(&refs, &hyps, Unit::Word).unwrap();
        let b = score_corpus(&refs, &hyps, Unit::Word).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_table(), b.to_table());
        assert!(a.to_table().ends_with("WER 0.5000\n"));
    }

    #[test]
    fn tsv_parsing() {
        let rows = read_tsv("u1\ta b\t-1.5\nu2\n\nu3\tc\n").unwrap();
        assert_eq!(rows, corpus(&[("u1", "a b"), ("u2", ""), ("u3", "c")]));
        assert!(matches!(read_tsv("u\ta\nu\tb\n"), Err(EvalError::Parse { line: 2, .. })));
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = parse_grid("0:1:0.1").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.3);
        assert_eq!(parse_grid("0.2,0.5").unwrap(), vec![0.2, 0.5]);
        assert_eq!(parse_grid("0").unwrap(), vec![0.0]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    fn table(rows: &[(&str, &str)], failed: &[&str]) -> TranscriptTable {
        TranscriptTable {
            rows: rows
                .iter()
                .map(|(id, t)| TranscriptRow {
                    utt_id: id.to_string(),
                    text: t.to_string(),
                    score: 0.0,
                })
                .collect(),
            errors: failed.iter().map(|id| (id.to_string(), "boom".to_string())).collect(),
        }
    }

    #[test]
    fn tuner_picks_lowest_wer_with_tie_breaks() {
        let refs = corpus(&[("u1", "a b"), ("u2", "c d")]);
        // the decoder is right only when lambda is close to 0.4
        let decode = |l: f64, _b: f64| {
            if (l - 0.4).abs() < 1e-9 {
                table(&[("u1", "a b"), ("u2", "c d")], &[])
            } else {
                table(&[("u1", "a x"), ("u2", "c d")], &[])
            }
        };
        let grid = parse_grid("0:1:0.2").unwrap();
        let r = tune_lm_weight(&refs, &grid, &[0.0], decode).unwrap();
        assert_eq!((r.lambda, r.wer), (0.4, 0.0));
        assert!(r.grid.iter().all(|p| p.wer >= r.wer));
        assert_eq!(r.grid.len(), 6);

        let flat = |_: f64, _: f64| table(&[("u1", "a b"), ("u2", "c")], &[]);
        let r = tune_lm_weight(&refs, &[0.5, 0.2, 0.9], &[1.0, 0.5], flat).unwrap();
        assert_eq!((r.lambda, r.beta), (0.2, 0.5));

        let single = tune_lm_weight(&refs, &[0.0], &[0.0], flat).unwrap();
        assert_eq!((single.lambda, single.wer), (0.0, 0.25));
    }

    #[test]
    fn tuner_failure_handling() {
        let refs = corpus(&[("u1", "a b"), ("u2", "c d")]);
        let partial = |_: f64, _: f64| table(&[("u1", "a b")], &["u2"]);
        let r = tune_lm_weight(&refs, &[0.0], &[0.0], partial).unwrap();
        assert_eq!((r.wer, r.grid[0].failed), (0.5, 1));
        let none = |l: f64, _: f64| if l > 0.5 { table(&[], &["u1", "u2"]) } else { table(&[("u1", "a b"), ("u2", "c d")], &[]) };
        assert!(matches!(tune_lm_weight(&refs, &[0.0, 1.0], &[0.0], none), Err(EvalError::AllFailed { .. })));
        assert_eq!(tune_lm_weight(&refs, &[], &[0.0], partial), Err(EvalError::EmptyGrid));
    }

    #[test]
    fn checkpoint_selection() {
        let c = |v: &[(&str, f64)]| v.iter().map(|(n, w)| (n.to_string(), *w)).collect::<Vec<_>>();
        assert_eq!(select_best_checkpoint(&c(&[("c1", 0.2)])).unwrap(), "c1");
        assert_eq!(select_best_checkpoint(&c(&[("c1", 0.3), ("c2", 0.25)])).unwrap(), "c2");
        assert_eq!(select_best_checkpoint(&c(&[("c1", 0.3), ("c2", 0.3)])).unwrap(), "c1");
        assert_eq!(select_best_checkpoint(&[]), Err(EvalError::NoCandidates));
    }

    fn seq() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0u8..3, 0..=5)
    }

    proptest! {
        #[test]
        fn edit_distance_is_a_metric(a in seq(), b in seq(), c in seq()) {
            let d = |x: &[u8], y: &[u8]| edit_distance(x, y).errors();
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert_eq!(d(&a, &b) == 0, a == b);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }

        #[test]
        fn trace_accounts_for_every_token(a in seq(), b in seq()) {
            let al = edit_distance(&a, &b);
            let refs = al.ops.iter().filter(|o| !matches!(o, EditOp::Ins { .. })).count();
            let hyps = al.ops.iter().filter(|o| !matches!(o, EditOp::Del { .. })).count();
            prop_assert_eq!((refs, hyps), (a.len(), b.len()));
        }

        #[test]
        fn wer_times_length_is_error_count(words in proptest::collection::vec("[abc]", 1..6), hyp in proptest::collection::vec("[abc]", 0..6)) {
            let refs = vec![("u".to_string(), words.join(" "))];
            let hyps = vec![("u".to_string(), hyp.join(" "))];
            let r = score_corpus(&refs, &hyps, Unit::Word).unwrap();
            prop_assert_eq!(r.error_rate * r.totals.ref_len as f64, r.totals.errors() as f64);
        }
    }
}
