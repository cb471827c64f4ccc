use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use asrdec_core::decode::{decode_loaded, decode_with, DecoderChoice, Utterance};
use asrdec_core::demo::run_demo;
use asrdec_core::lm::{train, Vocab};
use asrdec_core::posterior::PosteriorKind;
use asrdec_core::tokenizer::UNK_ID;
use asrdec_core::wfst::{units_table, word_table};
use asrdec_core::*;

use crate::*;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::BpeTrain(a) => bpe_train_cmd(&a),
        Command::LmTrain(a) => lm_train_cmd(&a),
        Command::LmScore(a) => lm_score_cmd(&a),
        Command::LossCheck(a) => loss_check_cmd(&a),
        Command::DecodeCtc(a) => decode_cmd(&a, DecoderChoice::Ctc),
        Command::DecodeAttn(a) => decode_cmd(&a, DecoderChoice::Attention),
        Command::TlgBuild(a) => tlg_build_cmd(&a),
        Command::DecodeTlg(a) => decode_tlg_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
        Command::Tune(a) => tune_cmd(&a),
        Command::Demo(a) => demo_cmd(&a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sentences(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.trim().is_empty()).collect()
}

fn load_inventory(path: &Path) -> Result<TokenInventory> {
    TokenInventory::from_text(&read(path)?).with_context(|| format!("invalid inventory {}", path.display()))
}

fn load_lm(path: &Path) -> Result<NGramModel> {
    arpa_parse(&read(path)?).with_context(|| format!("invalid ARPA file {}", path.display()))
}

/// LM ids of a sentence, over words or over the units of `inv`.
fn lm_ids(vocab: &Vocab, inv: Option<&TokenInventory>, sentence: &str) -> Vec<u32> {
    match inv {
        Some(inv) => bpe_encode(inv, sentence)
            .iter()
            .map(|&u| vocab.lookup(inv.token(u).unwrap_or("")))
            .collect(),
        None => vocab.encode_text(sentence),
    }
}

fn bpe_train_cmd(a: &BpeTrainArgs) -> Result<()> {
    let text = read(&a.corpus)?;
    let inv = bpe_train(&sentences(&text), a.vocab_size)?;
    write(&a.out, &inv.to_text())?;
    eprintln!("{} units, {} merges", inv.vocab_size(), inv.merges().len());
    Ok(())
}

fn lm_train_cmd(a: &LmTrainArgs) -> Result<()> {
    let mut text = String::new();
    for p in &a.corpus {
        text.push_str(&read(p)?);
        text.push('\n');
    }
    let lines = sentences(&text);
    let inv = a.inventory.as_deref().map(load_inventory).transpose()?;
    let vocab = match &inv {
        Some(inv) => Vocab::from_inventory(inv),
        None => Vocab::from_words(lines.iter().flat_map(|l| l.split_whitespace())),
    };
    let corpus: Vec<Vec<u32>> = lines.iter().map(|l| lm_ids(&vocab, inv.as_ref(), l)).collect();
    let opts = KnOptions {
        prune_threshold: a.prune,
    };
    let (model, report) = train(&corpus, a.order, &vocab, &opts)?;
    write(&a.out, &arpa_write(&model))?;
    for (n, (d, count)) in report.discounts.iter().zip(&report.ngram_counts).enumerate() {
        eprintln!("order {}: {count} n-grams, D = [{:.4}, {:.4}, {:.4}]", n + 1, d[0], d[1], d[2]);
    }
    if !report.fallback_orders.is_empty() {
        eprintln!("fallback discounts for orders {:?}", report.fallback_orders);
    }
    Ok(())
}

fn lm_score_cmd(a: &LmScoreArgs) -> Result<()> {
    let model = load_lm(&a.lm)?;
    let inv = a.inventory.as_deref().map(load_inventory).transpose()?;
    let text = read(&a.text)?;
    let (mut total, mut tokens) = (0.0, 0usize);
    let mut out = String::new();
    for line in sentences(&text) {
        let ids = lm_ids(model.vocab(), inv.as_ref(), line);
        let lp = model.sequence_logprob(&ids);
        total += lp;
        tokens += ids.len() + 1;
        out.push_str(&format!("{lp:.6}\t{line}\n"));
    }
    ensure!(tokens > 0, "no sentences in {}", a.text.display());
    out.push_str(&format!(
        "total log10 {total:.6} over {tokens} tokens, perplexity {:.4}\n",
        10f64.powf(-total / tokens as f64)
    ));
    print!("{out}");
    Ok(())
}

fn loss_check_cmd(a: &LossCheckArgs) -> Result<()> {
    let post = PosteriorMatrix::read_file(&a.posterior)?.normalized();
    let target: Vec<u32> = match (&a.target, &a.ids) {
        (Some(text), None) => {
            let inv_path = a.inventory.as_deref().context("--target needs --inventory")?;
            bpe_encode(&load_inventory(inv_path)?, text)
        }
        (None, Some(ids)) => ids
            .split(',')
            .map(|s| s.trim().parse::<u32>().with_context(|| format!("bad unit id {s:?}")))
            .collect::<Result<_>>()?,
        _ => bail!("give exactly one of --target or --ids"),
    };
    let out = ctc_loss(&post, &target, a.blank)?;
    println!("ctc_loss\t{:.6}", out.loss);
    println!("frames\t{}\ttarget_len\t{}", post.frames(), target.len());
    if a.fd_check > 0 {
        let n = post.values().len();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for j in 0..a.fd_check.min(n) {
            let i = j * n / a.fd_check.min(n);
            let bump = |d: f64| -> Result<f64> {
                let mut v = post.values().to_vec();
                v[i] += d;
                let p = PosteriorMatrix::new(post.frames(), post.vocab(), v, PosteriorKind::LogPosterior)?;
                Ok(ctc_loss(&p, &target, a.blank)?.loss)
            };
            let fd = (bump(h)? - bump(-h)?) / (2.0 * h);
            let rel = (out.grad[i] - fd).abs() / out.grad[i].abs().max(fd.abs()).max(1e-2);
            worst = worst.max(rel);
        }
        println!("gradient_check\tmax_rel_err\t{worst:.3e}");
        ensure!(worst < 1e-4, "gradient check failed: relative error {worst:.3e}");
    }
    Ok(())
}

fn load_manifest(path: &Path) -> Result<Vec<Utterance>> {
    let m = Manifest::read(path).with_context(|| format!("cannot load manifest {}", path.display()))?;
    Ok(m.load())
}

fn report_failures(table: &TranscriptTable) -> Result<()> {
    for (id, e) in &table.errors {
        eprintln!("warning: {id}: {e}");
    }
    ensure!(!table.rows.is_empty() || table.errors.is_empty(), "every utterance failed to decode");
    Ok(())
}

fn fusion_config(f: &FusionArgs) -> FusionConfig {
    FusionConfig {
        beam: f.beam,
        lm_weight: f.lm_weight,
        len_bonus: f.len_bonus,
        max_len: f.max_len,
        nbest: 1,
    }
}

fn decode_cmd(a: &DecodeArgs, choice: DecoderChoice) -> Result<()> {
    let inv = load_inventory(&a.inventory)?;
    let lm = a.lm.as_deref().map(load_lm).transpose()?.map(|m| InventoryLm::new(m, &inv));
    let utts = load_manifest(&a.manifest)?;
    let cfg = fusion_config(&a.fusion);
    let table = decode_loaded(&utts, &inv, lm.as_ref().map(|l| l as &dyn TokenLm), choice, &cfg)?;
    report_failures(&table)?;
    emit(a.out.as_deref(), &table.to_tsv())
}

fn tlg_build_cmd(a: &TlgBuildArgs) -> Result<()> {
    let model = load_lm(&a.lm)?;
    let inv = load_inventory(&a.inventory)?;
    let words = word_table(&model);
    let lex = match &a.lexicon {
        Some(p) => Lexicon::parse(&read(p)?, &inv, &words)?,
        None => {
            let mut lex = Lexicon::new(words.clone(), units_table(&inv));
            let vocab = model.vocab();
            for (id, w) in vocab.words().iter().enumerate() {
                let id = id as u32;
                if id == vocab.bos() || id == vocab.eos() || id == vocab.unk() {
                    continue;
                }
                let units = bpe_encode(&inv, w);
                if units.contains(&UNK_ID) {
                    eprintln!("warning: {w:?} has characters outside the inventory; skipped");
                    continue;
                }
                lex.add(w, units)?;
            }
            lex
        }
    };
    let l = build_lexicon_fst(&lex)?;
    let g = arpa_to_grammar_fst(&model);
    let lg = compose(&l, &g)?;
    lg.validate()?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    write(&a.out.join("lg.fst.txt"), &lg.to_text())?;
    write(&a.out.join("isyms.txt"), &lg.isyms().to_text())?;
    write(&a.out.join("osyms.txt"), &lg.osyms().to_text())?;
    eprintln!(
        "L: {} states, G: {} states, LG: {} states {} arcs",
        l.num_states(),
        g.num_states(),
        lg.num_states(),
        lg.num_arcs()
    );
    Ok(())
}

fn decode_tlg_cmd(a: &DecodeTlgArgs) -> Result<()> {
    let isyms = SymbolTable::from_text(&read(&a.graph.join("isyms.txt"))?)?;
    let osyms = SymbolTable::from_text(&read(&a.graph.join("osyms.txt"))?)?;
    let lg = Wfst::from_text(&read(&a.graph.join("lg.fst.txt"))?, isyms, osyms)?;
    let cfg = FusionConfig {
        beam: a.beam,
        lm_weight: a.lm_weight,
        len_bonus: a.len_bonus,
        ..FusionConfig::default()
    };
    cfg.validate()?;
    let utts = load_manifest(&a.manifest)?;
    let table = decode_with(&utts, |post| {
        let r = tlg_decode(post, &lg, a.blank, &cfg).map_err(|e| e.to_string())?;
        Ok((r.words.join(" "), r.score))
    });
    report_failures(&table)?;
    emit(a.out.as_deref(), &table.to_tsv())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let refs = read_tsv(&read(&a.reference)?).with_context(|| format!("in {}", a.reference.display()))?;
    let hyps = read_tsv(&read(&a.hyp)?).with_context(|| format!("in {}", a.hyp.display()))?;
    let unit = match a.unit {
        UnitArg::Word => Unit::Word,
        UnitArg::Char => Unit::Char,
    };
    let report = score_corpus(&refs, &hyps, unit)?;
    if a.details {
        print!("{}", report.to_table());
    } else {
        let t = &report.totals;
        println!("{} {:.4}", report.metric(), report.error_rate);
        println!("ref {} sub {} del {} ins {}", t.ref_len, t.substitutions, t.deletions, t.insertions);
    }
    if let Some(p) = &a.json {
        write(p, &report.to_json())?;
    }
    Ok(())
}

fn tune_cmd(a: &TuneArgs) -> Result<()> {
    let inv = load_inventory(&a.inventory)?;
    let lm = InventoryLm::new(load_lm(&a.lm)?, &inv);
    let utts = load_manifest(&a.manifest)?;
    let refs: Vec<(String, String)> = utts.iter().map(|u| (u.utt_id.clone(), u.text.clone())).collect();
    let (lambdas, betas) = (parse_grid(&a.lambdas)?, parse_grid(&a.betas)?);
    let choice = match a.decoder {
        DecoderArg::Ctc => DecoderChoice::Ctc,
        DecoderArg::Attention => DecoderChoice::Attention,
    };
    let cfg_at = |l: f64, b: f64| FusionConfig {
        beam: a.beam,
        lm_weight: l,
        len_bonus: b,
        max_len: a.max_len,
        nbest: 1,
    };
    for &l in &lambdas {
        for &b in &betas {
            cfg_at(l, b).validate()?;
        }
    }
    let result = tune_lm_weight(&refs, &lambdas, &betas, |l, b| {
        decode_loaded(&utts, &inv, Some(&lm), choice, &cfg_at(l, b)).unwrap_or_default()
    })?;
    for p in &result.grid {
        println!("lambda {:.4}\tbeta {:.4}\tWER {:.4}\tfailed {}", p.lambda, p.beta, p.wer, p.failed);
    }
    println!("best lambda {:.4} beta {:.4} WER {:.4}", result.lambda, result.beta, result.wer);
    if let Some(p) = &a.json {
        write(p, &serde_json::to_string_pretty(&result)?)?;
    }
    Ok(())
}

fn demo_cmd(a: &DemoArgs) -> Result<()> {
    let cfg = DemoConfig {
        seed: a.seed,
        noise: a.noise,
        lambdas: parse_grid(&a.lambdas)?,
        betas: parse_grid(&a.betas)?,
        ..DemoConfig::default()
    };
    let run = run_demo(&cfg)?;
    let text = if a.json { run.report.to_json() + "\n" } else { run.report.to_text() };
    if let Some(dir) = &a.out_dir {
        write(&dir.join("inventory.txt"), &run.inventory.to_text())?;
        write(&dir.join("lm.arpa"), &arpa_write(&run.lm))?;
        let post_dir = dir.join("post");
        fs::create_dir_all(&post_dir).with_context(|| format!("cannot create {}", post_dir.display()))?;
        for (name, utts) in [("dev", &run.dev), ("test", &run.test)] {
            let mut manifest = String::new();
            let mut refs = String::new();
            for u in utts.iter() {
                let rel = format!("post/{}.post", u.utt_id);
                let post = u.posterior.as_ref().map_err(|e| anyhow::anyhow!("{e}"))?;
                post.write_file(&dir.join(&rel))?;
                let entry = ManifestEntry {
                    utt_id: u.utt_id.clone(),
                    posterior_path: rel,
                    text: u.text.clone(),
                };
                manifest.push_str(&serde_json::to_string(&entry)?);
                manifest.push('\n');
                refs.push_str(&format!("{}\t{}\n", u.utt_id, u.text));
            }
            write(&dir.join(format!("{name}.jsonl")), &manifest)?;
            write(&dir.join(format!("{name}.ref.tsv")), &refs)?;
        }
        write(&dir.join("report.json"), &(run.report.to_json() + "\n"))?;
        write(&dir.join("report.txt"), &run.report.to_text())?;
    }
    print!("{text}");
    Ok(())
}
