//! Composition with an epsilon-sequencing filter.

use std::collections::{HashMap, VecDeque};

use super::{Arc, FstError, Wfst, EPSILON};

/// `a ∘ b`: pairs paths whose `a` output equals the `b` input; weights add.
///
/// Epsilon moves are sequenced so each path pair is produced once: while
/// `a` is emitting epsilon outputs, `b` waits; once `b` takes an epsilon
/// input move, `a` may not take another epsilon-output move until both
/// machines advance together on a real label. Only states reachable from
/// the start pair are built, numbered in breadth-first order.
pub fn compose(a: &Wfst, b: &Wfst) -> Result<Wfst, FstError> {
    if a.osyms() != b.isyms() {
        return Err(FstError::AlphabetMismatch(format!(
            "left output alphabet has {} symbols, right input alphabet has {}",
            a.osyms().len(),
            b.isyms().len()
        )));
    }
    // b's arcs grouped by input label
    let by_input: Vec<HashMap<u32, Vec<&Arc>>> = (0..b.num_states() as u32)
        .map(|s| {
            let mut m: HashMap<u32, Vec<&Arc>> = HashMap::new();
            for arc in b.arcs(s) {
                m.entry(arc.ilabel).or_default().push(arc);
            }
            m
        })
        .collect();

    let mut out = Wfst::new(a.isyms().clone(), b.osyms().clone());
    let mut ids: HashMap<(u32, u32, u8), u32> = HashMap::new();
    let mut queue = VecDeque::new();
    let start = (a.start(), b.start(), 0u8);
    ids.insert(start, 0);
    queue.push_back(start);

    let mut intern = |key: (u32, u32, u8), out: &mut Wfst, queue: &mut VecDeque<(u32, u32, u8)>| -> u32 {
        *ids.entry(key).or_insert_with(|| {
            queue.push_back(key);
            out.add_state()
        })
    };

    while let Some(key @ (sa, sb, filter)) = queue.pop_front() {
        let src = intern(key, &mut out, &mut queue);
        for x in a.arcs(sa) {
            if x.olabel == EPSILON {
                if filter == 0 {
                    let next = intern((x.next, sb, 0), &mut out, &mut queue);
                    out.add_arc(src, Arc { ilabel: x.ilabel, olabel: EPSILON, weight: x.weight, next });
                }
                continue;
            }
            if let Some(matches) = by_input[sb as usize].get(&x.olabel) {
                for y in matches {
                    let next = intern((x.next, y.next, 0), &mut out, &mut queue);
                    out.add_arc(
                        src,
                        Arc {
                            ilabel: x.ilabel,
                            olabel: y.olabel,
                            weight: x.weight + y.weight,
                            next,
                        },
                    );
                }
            }
        }
        if let Some(eps) = by_input[sb as usize].get(&EPSILON) {
            for y in eps {
                let next = intern((sa, y.next, 1), &mut out, &mut queue);
                out.add_arc(src, Arc { ilabel: EPSILON, olabel: y.olabel, weight: y.weight, next });
            }
        }
        if let (Some(fa), Some(fb)) = (a.final_weight(sa), b.final_weight(sb)) {
            out.set_final(src, fa + fb);
        }
    }
    Ok(out)
}
