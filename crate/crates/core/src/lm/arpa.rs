//! ARPA text interchange.
//!
//! ```text
//! \data\
//! ngram 1=<count>
//! ngram 2=<count>
//!
//! \1-grams:
//! <log10 prob>\t<w1>\t<log10 backoff>
//! ...
//! \end\
//! ```
//!
//! The backoff column is written only when non-zero. Fields are printed
//! with six decimals; models produced by the estimator already hold values
//! at that precision, so writing and parsing reproduces every score.

use std::fmt::Write as _;

use super::{LmError, NGramModel, Vocab, MAX_ORDER};

pub fn arpa_write(model: &NGramModel) -> String {
    let per_order: Vec<_> = (1..=model.order()).map(|n| model.ngrams(n)).collect();
    let vocab = model.vocab();
    let mut out = String::from("\\data\\\n");
    for (i, grams) in per_order.iter().enumerate() {
        let _ = writeln!(out, "ngram {}={}", i + 1, grams.len());
    }
    for (i, grams) in per_order.iter().enumerate() {
        let n = i + 1;
        let _ = write!(out, "\n\\{n}-grams:\n");
        for (gram, p, bo) in grams {
            let _ = write!(out, "{p:.6}\t");
            for (j, &w) in gram.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                out.push_str(vocab.word(w).unwrap_or("<unk>"));
            }
            if n < model.order() && *bo != 0.0 {
                let _ = write!(out, "\t{bo:.6}");
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

struct Entry<'a> {
    line: usize,
    prob: f64,
    words: Vec<&'a str>,
    backoff: f64,
}

fn parse_entry(line_no: usize, line: &str, n: usize) -> Result<Entry<'_>, LmError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != n + 1 && fields.len() != n + 2 {
        return Err(LmError::arpa(
            line_no,
            format!("expected {} or {} fields for a {n}-gram, got {}", n + 1, n + 2, fields.len()),
        ));
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| LmError::arpa(line_no, format!("invalid number {s:?}")))
    };
    let prob = num(fields[0])?;
    if prob > 0.0 {
        return Err(LmError::arpa(line_no, format!("log10 probability {prob} is positive")));
    }
    let backoff = if fields.len() == n + 2 { num(fields[n + 1])? } else { 0.0 };
    Ok(Entry {
        line: line_no,
        prob,
        words: fields[1..=n].to_vec(),
        backoff,
    })
}

pub fn arpa_parse(text: &str) -> Result<NGramModel, LmError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    // preamble up to \data\
    let mut data_line = None;
    for (n, l) in lines.by_ref() {
        if l == "\\data\\" {
            data_line = Some(n);
            break;
        }
    }
    let data_line = data_line.ok_or_else(|| LmError::arpa(1, "missing \\data\\ header"))?;

    let mut declared: Vec<usize> = Vec::new();
    let mut section_header = None;
    for (n, l) in lines.by_ref() {
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix("ngram ") {
            let (ord, cnt) = rest
                .split_once('=')
                .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
                .ok_or_else(|| LmError::arpa(n, format!("malformed count line {l:?}")))?;
            if ord != declared.len() + 1 {
                return Err(LmError::arpa(n, format!("expected ngram {}=, got order {ord}", declared.len() + 1)));
            }
            declared.push(cnt);
        } else {
            section_header = Some((n, l));
            break;
        }
    }
    if declared.is_empty() {
        return Err(LmError::arpa(data_line, "no ngram counts declared"));
    }
    if declared.len() > MAX_ORDER {
        return Err(LmError::arpa(data_line, format!("order {} exceeds {MAX_ORDER}", declared.len())));
    }
    let order = declared.len();

    let mut sections: Vec<Vec<Entry>> = Vec::with_capacity(order);
    let mut ended = false;
    let mut header = section_header;
    while let Some((hn, hl)) = header.take() {
        if hl == "\\end\\" {
            ended = true;
            break;
        }
        let expect = format!("\\{}-grams:", sections.len() + 1);
        if hl != expect || sections.len() >= order {
            return Err(LmError::arpa(hn, format!("expected {expect:?}, got {hl:?}")));
        }
        let n = sections.len() + 1;
        let mut entries = Vec::with_capacity(declared[n - 1]);
        for (ln, l) in lines.by_ref() {
            if l.is_empty() {
                continue;
            }
            if l.starts_with('\\') {
                header = Some((ln, l));
                break;
            }
            entries.push(parse_entry(ln, l, n)?);
        }
        if entries.len() != declared[n - 1] {
            return Err(LmError::arpa(
                hn,
                format!("header declares {} {n}-grams, section has {}", declared[n - 1], entries.len()),
            ));
        }
        sections.push(entries);
    }
    if !ended {
        return Err(LmError::arpa(text.lines().count(), "missing \\end\\"));
    }
    if sections.len() != order {
        return Err(LmError::arpa(
            text.lines().count(),
            format!("{} sections for {order} declared orders", sections.len()),
        ));
    }

    let vocab = Vocab::new(sections[0].iter().map(|e| e.words[0].to_string()).collect())
        .map_err(|e| LmError::arpa(data_line, e.to_string()))?;
    let mut model = NGramModel::empty(order, vocab.clone());
    if !sections[0].iter().any(|e| e.words[0] == "<unk>") {
        model.set_prob(&[], vocab.unk(), super::BOS_LOGPROB);
    }
    for (i, entries) in sections.iter().enumerate() {
        let n = i + 1;
        for e in entries {
            let ids = e
                .words
                .iter()
                .map(|w| {
                    vocab
                        .id(w)
                        .ok_or_else(|| LmError::arpa(e.line, format!("word {w:?} has no unigram entry")))
                })
                .collect::<Result<Vec<u32>, _>>()?;
            if n > 1 && model.find_node(&ids[..n - 1]).is_none() {
                return Err(LmError::arpa(e.line, "history of this n-gram is not a stored n-gram"));
            }
            model.set_prob(&ids[..n - 1], ids[n - 1], e.prob);
            if e.backoff != 0.0 {
                if n == order {
                    return Err(LmError::arpa(e.line, "highest-order n-gram carries a backoff"));
                }
                model.set_backoff(&ids, e.backoff);
            }
        }
    }
    Ok(model)
}
