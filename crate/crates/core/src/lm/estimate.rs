//! Interpolated modified Kneser-Ney estimation.
//!
//! For an n-gram `c w` with adjusted count `a > 0`:
//!
//! ```text
//! P(w | c) = (a - D(a)) / sum_x a(c x)  +  gamma(c) * P(w | c')
//! gamma(c) = (D1 N1(c) + D2 N2(c) + D3+ N3+(c)) / sum_x a(c x)
//! ```
//!
//! where `c'` drops the oldest word of `c` and `N_k(c)` counts the words
//! following `c` with adjusted count `k` (`3+` for three or more). Unigrams
//! interpolate with the uniform distribution over every word except `<s>`,
//! which is how unseen words and `<unk>` receive their floor. Discounts come
//! from counts-of-counts `t_k` of adjusted counts per order:
//!
//! ```text
//! Y = t1 / (t1 + 2 t2),   D_k = k - (k + 1) Y t_{k+1} / t_k   (k = 1, 2, 3)
//! ```
//!
//! Stored values are rounded to the six decimals of the ARPA format, then
//! every backoff weight is recomputed from the rounded probabilities so that
//! each history still normalizes. Rounding can still leave a history's mass
//! off by about 1e-6, so values are nudged by one unit in the last decimal,
//! largest contributions first, wherever that brings the mass closer to one.

use std::collections::{HashMap, HashSet};

use super::model::NGramModel;
use super::{CountTable, LmError, Vocab, BOS_LOGPROB};
use crate::math::round6;

/// Discount used for every count bin when counts-of-counts are degenerate.
pub const FALLBACK_DISCOUNT: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnOptions {
    /// Drop n-grams of order two and above whose adjusted count is below
    /// this value, unless they are the history of a kept longer n-gram.
    /// `0` or `1` disables pruning.
    pub prune_threshold: u64,
}

/// What the estimator decided per order.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildReport {
    /// `[D1, D2, D3+]` per order, index 0 = unigrams.
    pub discounts: Vec<[f64; 3]>,
    /// `[t1, t2, t3, t4]` per order.
    pub counts_of_counts: Vec<[u64; 4]>,
    /// Orders (1-based) that fell back to [`FALLBACK_DISCOUNT`].
    pub fallback_orders: Vec<usize>,
    /// Stored n-grams per order after pruning.
    pub ngram_counts: Vec<usize>,
}

/// Chen-Goodman discounts from counts-of-counts, or `None` when they are
/// not usable (a zero bin or a discount outside `(0, k)`).
pub fn chen_goodman_discounts(t: [u64; 4]) -> Option<[f64; 3]> {
    if t.contains(&0) {
        return None;
    }
    let t: [f64; 4] = t.map(|x| x as f64);
    let y = t[0] / (t[0] + 2.0 * t[1]);
    let mut d = [0.0; 3];
    for k in 1..=3 {
        let dk = k as f64 - (k as f64 + 1.0) * y * t[k] / t[k - 1];
        if !(dk > 0.0 && dk < k as f64) {
            return None;
        }
        d[k - 1] = dk;
    }
    Some(d)
}

#[derive(Default, Clone, Copy)]
struct HistoryStats {
    total: u64,
    n: [u64; 3],
}

/// Estimate an interpolated modified Kneser-Ney model from counts.
pub fn estimate_kneser_ney(
    counts: &CountTable,
    vocab: &Vocab,
    opts: &KnOptions,
) -> Result<(NGramModel, BuildReport), LmError> {
    if counts.sentences() == 0 {
        return Err(LmError::EmptyCorpus);
    }
    let order = counts.order();
    let bos = vocab.bos();
    let num_targets = vocab.targets().count() as f64;

    let mut discounts = Vec::with_capacity(order);
    let mut cocs = Vec::with_capacity(order);
    let mut fallback_orders = Vec::new();
    // exact interpolated probabilities and history weights, per order
    let mut interp: Vec<HashMap<Vec<u32>, f64>> = Vec::with_capacity(order);
    let mut gammas: Vec<HashMap<Vec<u32>, f64>> = Vec::with_capacity(order);

    for n in 1..=order {
        let table = counts.adjusted_order(n);
        let mut t = [0u64; 4];
        for &a in table.values() {
            if (1..=4).contains(&a) {
                t[a as usize - 1] += 1;
            }
        }
        let d = chen_goodman_discounts(t).unwrap_or_else(|| {
            fallback_orders.push(n);
            [FALLBACK_DISCOUNT; 3]
        });
        let discount = |a: u64| match a {
            0 => 0.0,
            1 => d[0],
            2 => d[1],
            _ => d[2],
        };

        let mut stats: HashMap<&[u32], HistoryStats> = HashMap::new();
        for (gram, &a) in table {
            if a == 0 {
                continue;
            }
            let s = stats.entry(&gram[..n - 1]).or_default();
            s.total += a;
            s.n[(a.min(3) - 1) as usize] += 1;
        }
        let gamma: HashMap<Vec<u32>, f64> = stats
            .iter()
            .map(|(ctx, s)| {
                let mass = d[0] * s.n[0] as f64 + d[1] * s.n[1] as f64 + d[2] * s.n[2] as f64;
                (ctx.to_vec(), mass / s.total as f64)
            })
            .collect();

        let mut probs: HashMap<Vec<u32>, f64> = HashMap::with_capacity(table.len());
        for (gram, &a) in table {
            if a == 0 {
                continue;
            }
            let ctx = &gram[..n - 1];
            let s = stats[ctx];
            let lower = if n == 1 {
                1.0 / num_targets
            } else {
                lower_prob(&interp, &gammas, &gram[1..], num_targets)
            };
            let p = (a as f64 - discount(a)) / s.total as f64 + gamma[ctx] * lower;
            probs.insert(gram.clone(), p);
        }
        if n == 1 {
            let g0 = gamma.get(&[][..]).copied().unwrap_or(1.0);
            for w in vocab.targets() {
                probs.entry(vec![w]).or_insert(g0 / num_targets);
            }
        }
        discounts.push(d);
        cocs.push(t);
        interp.push(probs);
        gammas.push(gamma);
    }

    // Pruning, longest order first so histories of kept n-grams survive.
    let mut kept: Vec<HashSet<Vec<u32>>> = vec![HashSet::new(); order];
    for n in (1..=order).rev() {
        let needed: HashSet<Vec<u32>> = if n < order {
            kept[n].iter().map(|g| g[..n].to_vec()).collect()
        } else {
            HashSet::new()
        };
        for gram in interp[n - 1].keys() {
            let keep = n == 1
                || opts.prune_threshold <= 1
                || counts.adjusted(gram) >= opts.prune_threshold
                || needed.contains(gram);
            if keep {
                kept[n - 1].insert(gram.clone());
            }
        }
    }

    let mut model = NGramModel::empty(order, vocab.clone());
    for n in 1..=order {
        let mut grams: Vec<&Vec<u32>> = kept[n - 1].iter().collect();
        grams.sort_unstable();
        for gram in grams {
            let p = interp[n - 1][gram];
            model.set_prob(&gram[..n - 1], gram[n - 1], round6(p.log10()));
        }
    }
    model.set_prob(&[], bos, BOS_LOGPROB);
    let unigrams: Vec<u32> = vocab.targets().collect();
    let mut values: Vec<(f64, f64)> = unigrams.iter().map(|&w| (model.logprob(&[], w), 1.0)).collect();
    balance(&mut values, 0.0);
    for (&w, (v, _)) in unigrams.iter().zip(values) {
        model.set_prob(&[], w, v);
    }
    assign_backoffs(&mut model, &gammas);

    let ngram_counts = model.ngram_counts();
    Ok((
        model,
        BuildReport {
            discounts,
            counts_of_counts: cocs,
            fallback_orders,
            ngram_counts,
        },
    ))
}

/// Exact interpolated probability of `gram`, backing off through the
/// history weights when the n-gram itself was never counted.
fn lower_prob(
    interp: &[HashMap<Vec<u32>, f64>],
    gammas: &[HashMap<Vec<u32>, f64>],
    gram: &[u32],
    num_targets: f64,
) -> f64 {
    let n = gram.len();
    if let Some(&p) = interp[n - 1].get(gram) {
        return p;
    }
    if n == 1 {
        let g0 = gammas[0].get(&[][..]).copied().unwrap_or(1.0);
        return g0 / num_targets;
    }
    let g = gammas[n - 1].get(&gram[..n - 1]).copied().unwrap_or(1.0);
    g * lower_prob(interp, gammas, &gram[1..], num_targets)
}

/// Backoff weights from the rounded probabilities, shortest histories
/// first. For history `c` with explicit successors `E`:
///
/// ```text
/// bo(c) = (1 - sum_{w in E} P(w|c)) / (S(c') - sum_{w in E} P(w|c'))
/// ```
///
/// where `S(c')` is the total mass of the shorter history as stored, so
/// rounding errors of lower orders do not accumulate.
fn assign_backoffs(
    model: &mut NGramModel,
    gammas: &[HashMap<Vec<u32>, f64>],
) {
    let order = model.order;
    let targets: Vec<u32> = model.vocab.targets().collect();
    let mut mass: HashMap<Vec<u32>, f64> = HashMap::new();
    let root_mass: f64 = targets
        .iter()
        .map(|&w| 10f64.powf(model.logprob(&[], w)))
        .sum();
    mass.insert(Vec::new(), root_mass);

    let mut histories: Vec<(Vec<u32>, usize)> = model
        .walk()
        .into_iter()
        .filter(|(ctx, _)| !ctx.is_empty() && ctx.len() < order)
        .collect();
    histories.sort_unstable_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
    for (hist, node) in &histories {
        let (hist, node) = (hist, *node);
        {
            let explicit: Vec<(u32, f64)> = model.nodes[node]
                .probs
                .iter()
                .map(|(&w, &p)| (w, 10f64.powf(p)))
                .collect();
            let shorter = &hist[1..];
            let shorter_mass = mass.get(shorter).copied().unwrap_or(1.0);
            if explicit.is_empty() {
                mass.insert(hist.clone(), shorter_mass);
                continue;
            }
            let num = 1.0 - explicit.iter().map(|(_, p)| p).sum::<f64>();
            let lower: f64 = explicit
                .iter()
                .map(|&(w, _)| 10f64.powf(model.logprob(shorter, w)))
                .sum();
            let den = shorter_mass - lower;
            let bo = if num > 0.0 && den > 1e-9 {
                num / den
            } else {
                gammas[hist.len()].get(hist).copied().unwrap_or(1.0)
            };
            let mut values: Vec<(f64, f64)> = explicit.iter().map(|(w, _)| (model.nodes[node].probs[w], 1.0)).collect();
            values.push((round6(bo.log10()), den));
            let total = balance(&mut values, 0.0);
            let bo_log = values.pop().expect("backoff entry").0;
            model.nodes[node].backoff = bo_log;
            for (&(w, _), (v, _)) in explicit.iter().zip(values) {
                model.nodes[node].probs.insert(w, v);
            }
            mass.insert(hist.clone(), total);
        }
    }
}

/// `values` are `(log10 value, scale)` pairs contributing `scale * 10^value`
/// to a mass of `base + sum`. Moves each value by at most one unit of the
/// sixth decimal, largest contribution first, whenever that brings the mass
/// closer to one, and returns the final mass.
fn balance(values: &mut [(f64, f64)], base: f64) -> f64 {
    let contribution = |&(v, s): &(f64, f64)| s * 10f64.powf(v);
    let mut total = base + values.iter().map(contribution).sum::<f64>();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| contribution(&values[b]).total_cmp(&contribution(&values[a])).then(a.cmp(&b)));
    for i in order {
        let step = if total < 1.0 { 1e-6 } else { -1e-6 };
        let moved = round6(values[i].0 + step);
        if moved > 0.0 {
            continue;
        }
        let new_total = total - contribution(&values[i]) + contribution(&(moved, values[i].1));
        if (new_total - 1.0).abs() < (total - 1.0).abs() {
            values[i].0 = moved;
            total = new_total;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::count_ngrams;

    fn train(sentences: &[&str], order: usize) -> (NGramModel, BuildReport, Vocab) {
        let vocab = Vocab::from_words(sentences.iter().flat_map(|s| s.split_whitespace()));
        let corpus: Vec<Vec<u32>> = sentences.iter().map(|s| vocab.encode_text(s)).collect();
        let counts = count_ngrams(&corpus, order, &vocab).unwrap();
        let (m, r) = estimate_kneser_ney(&counts, &vocab, &KnOptions::default()).unwrap();
        (m, r, vocab)
    }

    fn total_mass(m: &NGramModel, ctx: &[u32]) -> f64 {
        m.vocab()
            .targets()
            .map(|w| 10f64.powf(m.logprob(ctx, w)))
            .sum()
    }

    #[test]
    fn hand_computed_unigram_model() {
        // <s> a a b </s>: counts a=2 b=1 </s>=1; t = [2, 1, 0, 0] is
        // degenerate, so D = 0.5 for all bins. total 4,
        // gamma = 0.5 * 3 / 4 = 0.375, |targets| = 4 (a b </s> <unk>).
        let (m, r, v) = train(&["a a b"], 1);
        assert_eq!(r.fallback_orders, vec![1]);
        assert_eq!(r.counts_of_counts[0], [2, 1, 0, 0]);
        let p = |w: &str| 10f64.powf(m.logprob(&[], v.id(w).unwrap()));
        let expect = [
            ("a", 1.5 / 4.0 + 0.375 / 4.0),
            ("b", 0.5 / 4.0 + 0.375 / 4.0),
            ("</s>", 0.5 / 4.0 + 0.375 / 4.0),
            ("<unk>", 0.375 / 4.0),
        ];
        // stored values sit within one unit of the sixth decimal (plus the
        // half unit of rounding) of the exact log10
        for (w, e) in expect {
            assert!((p(w).log10() - f64::log10(e)).abs() < 1.5e-6, "{w}: {} vs {e}", p(w));
        }
        assert_eq!(m.logprob(&[], v.bos()), BOS_LOGPROB);
    }

    #[test]
    fn chen_goodman_formula() {
        let t = [10u64, 6, 4, 3];
        let y = 10.0 / (10.0 + 12.0);
        let d = chen_goodman_discounts(t).unwrap();
        assert!((d[0] - (1.0 - 2.0 * y * 6.0 / 10.0)).abs() < 1e-15);
        assert!((d[1] - (2.0 - 3.0 * y * 4.0 / 6.0)).abs() < 1e-15);
        assert!((d[2] - (3.0 - 4.0 * y * 3.0 / 4.0)).abs() < 1e-15);
        assert_eq!(chen_goodman_discounts([0, 1, 1, 1]), None);
        assert_eq!(chen_goodman_discounts([10, 1, 10, 1]), None);
    }

    #[test]
    fn non_degenerate_unigram_discounts_applied() {
        // highest-order counts are raw: five words seen 1x, three 2x,
        // two 3x and one 4x, plus </s> seen 4x (4 sentences) -> t = [5,3,2,2]
        let sentences = [
            "a b c d e f f g g",
            "h h i i i j j j k",
            "k k k",
            "",
        ];
        let (m, r, v) = train(&sentences, 1);
        assert_eq!(r.counts_of_counts[0], [5, 3, 2, 2]);
        assert!(r.fallback_orders.is_empty());
        let d = chen_goodman_discounts([5, 3, 2, 2]).unwrap();
        assert_eq!(r.discounts[0], d);
        let total = 5.0 + 6.0 + 6.0 + 4.0 + 4.0;
        let gamma = (d[0] * 5.0 + d[1] * 3.0 + d[2] * 4.0) / total;
        let nt = v.targets().count() as f64;
        let expect_k = (4.0 - d[2]) / total + gamma / nt;
        let got = 10f64.powf(m.logprob(&[], v.id("k").unwrap()));
        assert!((got - expect_k).abs() < 2e-6 * expect_k);
        assert!((total_mass(&m, &[]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn trigram_histories_normalize() {
        let (m, _, _) = train(
            &["a b c", "a b a c", "c b a", "b b c a", "a", "c c"],
            3,
        );
        for ctx in m.contexts() {
            let s = total_mass(&m, &ctx);
            assert!((s - 1.0).abs() < 1e-6, "{ctx:?}: {s}");
        }
    }

    #[test]
    fn every_history_is_a_stored_ngram() {
        let (m, _, _) = train(&["a b c a", "b c b", "c a b c"], 3);
        for n in 2..=3 {
            for (gram, p, _) in m.ngrams(n) {
                assert!(p <= 0.0 && p.is_finite());
                assert!(m.stored_logprob(&gram[..n - 1]).is_some(), "{gram:?}");
            }
        }
    }

    #[test]
    fn pruning_keeps_histories_and_normalization() {
        let sentences = ["a b c a", "b c b", "c a b c", "a b c", "a b", "c b a"];
        let vocab = Vocab::from_words(sentences.iter().flat_map(|s| s.split_whitespace()));
        let corpus: Vec<Vec<u32>> = sentences.iter().map(|s| vocab.encode_text(s)).collect();
        let counts = count_ngrams(&corpus, 3, &vocab).unwrap();
        let (full, _) = estimate_kneser_ney(&counts, &vocab, &KnOptions::default()).unwrap();
        let (pruned, report) = estimate_kneser_ney(
            &counts,
            &vocab,
            &KnOptions { prune_threshold: 2 },
        )
        .unwrap();
        assert!(report.ngram_counts[2] < full.ngram_counts()[2]);
        for (gram, _, _) in pruned.ngrams(3) {
            assert!(pruned.stored_logprob(&gram[..2]).is_some());
        }
        for ctx in pruned.contexts() {
            assert!((total_mass(&pruned, &ctx) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let vocab = Vocab::from_words(["a"]);
        let counts = count_ngrams(&[], 2, &vocab).unwrap();
        assert_eq!(
            estimate_kneser_ney(&counts, &vocab, &KnOptions::default()).unwrap_err(),
            LmError::EmptyCorpus
        );
    }
}
