mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Decoding-side ASR toolkit: BPE units, n-gram LMs, shallow fusion, WFST
/// decoding and WER tooling over acoustic posterior files.
#[derive(Debug, Parser)]
#[command(name = "asrdec", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a BPE unit inventory from a text corpus (one sentence per line)
    #[command(name = "bpe-train", args_override_self = true)]
    BpeTrain(BpeTrainArgs),
    /// Train a modified Kneser-Ney n-gram LM and write it as ARPA
    #[command(name = "lm-train", args_override_self = true)]
    LmTrain(LmTrainArgs),
    /// Score sentences with an ARPA model
    #[command(name = "lm-score", args_override_self = true)]
    LmScore(LmScoreArgs),
    /// Compute the CTC loss of a target against a posterior file
    #[command(name = "loss-check", args_override_self = true)]
    LossCheck(LossCheckArgs),
    /// CTC prefix beam search over a manifest, with optional LM fusion
    #[command(name = "decode-ctc", args_override_self = true)]
    DecodeCtc(DecodeArgs),
    /// Seq2seq beam search over a manifest, with optional LM fusion
    #[command(name = "decode-attn", args_override_self = true)]
    DecodeAttn(DecodeArgs),
    /// Build a composed lexicon-grammar graph from an ARPA model
    #[command(name = "tlg-build", args_override_self = true)]
    TlgBuild(TlgBuildArgs),
    /// Decode a manifest against a lexicon-grammar graph
    #[command(name = "decode-tlg", args_override_self = true)]
    DecodeTlg(DecodeTlgArgs),
    /// Score hypotheses against references (WER or CER)
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Grid-search the LM weight and length bonus on a dev manifest
    #[command(args_override_self = true)]
    Tune(TuneArgs),
    /// Run the seeded synthetic end-to-end pipeline
    #[command(args_override_self = true)]
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct BpeTrainArgs {
    /// TOML file with defaults for any of this command's flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training text, one sentence per line
    #[arg(long)]
    pub corpus: PathBuf,
    /// Maximum inventory size, reserved units included
    #[arg(long)]
    pub vocab_size: usize,
    /// Inventory output file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LmTrainArgs {
    /// TOML file with defaults for any of this command's flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training text, one sentence per line; several files are concatenated
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    /// Model order, 1 to 20
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Train over BPE units of this inventory instead of words
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    /// Drop higher-order n-grams with adjusted count below this (0 = keep all)
    #[arg(long, default_value_t = 0)]
    pub prune: u64,
    /// ARPA output file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LmScoreArgs {
    /// TOML file with defaults for any of this command's flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ARPA model
    #[arg(long)]
    pub lm: PathBuf,
    /// Sentences to score, one per line
    #[arg(long)]
    pub text: PathBuf,
    /// Score BPE units of this inventory instead of words
    #[arg(long)]
    pub inventory: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossCheckArgs {
    /// TOML file with defaults for any of this command's flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Posterior file
    #[arg(long)]
    pub posterior: PathBuf,
    /// Target as text (needs --inventory)
    #[arg(long, conflicts_with = "ids")]
    pub target: Option<String>,
    /// Target as comma-separated unit ids
    #[arg(long)]
    pub ids: Option<String>,
    /// Unit inventory for --target
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    /// Blank unit id
    #[arg(long, default_value_t = 0)]
    pub blank: u32,
    /// Verify this many gradient entries against central differences
    #[arg(long, default_value_t = 0)]
    pub fd_check: usize,
}

#[derive(Debug, Args)]
pub struct FusionArgs {
    /// Beam width
    #[arg(long, default_value_t = 8)]
    pub beam: usize,
    /// LM weight (lambda)
    #[arg(long, default_value_t = 0.3)]
    pub lm_weight: f64,
    /// Per-token length bonus (beta)
    #[arg(long, default_value_t = 0.0)]
    pub len_bonus: f64,
    /// Maximum output length for the attention decoder
    #[arg(long, default_value_t = 200)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// TOML file with defaults for any of this command's flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON-lines manifest of {utt_id, posterior_path, text}
    #[arg(long)]
    pub manifest: PathBuf,
    /// Unit inventory
    #[arg(long)]
    pub inventory: PathBuf,
    /// Unit-level ARPA model for shallow fusion
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// Transcript output (utt_id, text, score); stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TlgBuildArgs {
    /// TOML file with defaults for any of this command's flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Word-level ARPA model
    #[arg(long)]
    pub lm: PathBuf,
    /// Unit inventory
    #[arg(long)]
    pub inventory: PathBuf,
    /// `word<TAB>unit unit ...` pronunciations; by default every LM word is
    /// spelled with the inventory's BPE segmentation
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Output directory for lg.fst.txt, isyms.txt and osyms.txt
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeTlgArgs {
    /// TOML file with defaults for any of this command's flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory written by tlg-build
    #[arg(long)]
    pub graph: PathBuf,
    /// JSON-lines manifest of {utt_id, posterior_path, text}
    #[arg(long)]
    pub manifest: PathBuf,
    /// Beam width (prefixes, and graph states per prefix)
    #[arg(long, default_value_t = 8)]
    pub beam: usize,
    /// Graph weight (lambda)
    #[arg(long, default_value_t = 0.3)]
    pub lm_weight: f64,
    /// Per-word bonus (beta)
    #[arg(long, default_value_t = 0.0)]
    pub len_bonus: f64,
    /// Blank unit id
    #[arg(long, default_value_t = 0)]
    pub blank: u32,
    /// Transcript output; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UnitArg {
    Word,
    Char,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// TOML file with defaults for any of this command's flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference transcripts, `utt_id<TAB>text`
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Hypothesis transcripts, `utt_id<TAB>text[<TAB>score]`
    #[arg(long)]
    pub hyp: PathBuf,
    /// Scoring unit
    #[arg(long, value_enum, default_value_t = UnitArg::Word)]
    pub unit: UnitArg,
    /// Print the per-utterance table
    #[arg(long)]
    pub details: bool,
    /// Write the full report as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DecoderArg {
    Ctc,
    Attention,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// TOML file with defaults for any of this command's flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dev manifest; its `text` fields are the references
    #[arg(long)]
    pub manifest: PathBuf,
    /// Unit inventory
    #[arg(long)]
    pub inventory: PathBuf,
    /// Unit-level ARPA model
    #[arg(long)]
    pub lm: PathBuf,
    /// Decoder to tune
    #[arg(long, value_enum, default_value_t = DecoderArg::Ctc)]
    pub decoder: DecoderArg,
    /// LM weight grid, `start:stop:step` or `a,b,c`
    #[arg(long, default_value = "0:1:0.1")]
    pub lambdas: String,
    /// Length bonus grid, `start:stop:step` or `a,b,c`
    #[arg(long, default_value = "0")]
    pub betas: String,
    /// Beam width
    #[arg(long, default_value_t = 8)]
    pub beam: usize,
    /// Maximum output length for the attention decoder
    #[arg(long, default_value_t = 200)]
    pub max_len: usize,
    /// Write the full grid as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// TOML file with defaults for any of this command's flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for corpus and posterior generation
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Probability that a unit is acoustically confused
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    /// LM weight grid, `start:stop:step` or `a,b,c`
    #[arg(long, default_value = "0:1.5:0.25")]
    pub lambdas: String,
    /// Length bonus grid, `start:stop:step` or `a,b,c`
    #[arg(long, default_value = "0")]
    pub betas: String,
    /// Write the inventory, LM, manifests, posteriors and report here
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Print the report as JSON instead of text
    #[arg(long)]
    pub json: bool,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match config::parse_with_config(&argv) {
        Ok(cli) => cli,
        Err(config::ParseFailure::Clap(e)) => e.exit(),
        Err(config::ParseFailure::Usage(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("ASRDEC_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("ASRDEC_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}
