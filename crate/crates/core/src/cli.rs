//! Command-line front end. Every table goes to stdout (or the named file)
//! as CSV with a header row; progress and summaries go to stderr.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{collect_gate_histograms, grad_check_case, trace_sentence, GateHistogram, GradCheckCase};
use crate::cell::GateMode;
use crate::checkpoint::{infer_tokenizer, read_checkpoint, write_checkpoint};
use crate::compress::{compress_and_report, CompressionReport, CompressionSpec};
use crate::corpus::{load_corpus_dir, TokenizerKind, UnigramModel, Vocabulary};
use crate::error::Error;
use crate::network::{evaluate, EvalOptions, Model, ModelConfig};
use crate::sampling::{prop1_default_grid, verify_prop1, Prop1Report, RngState};
use crate::train::{train_loop_with, Optimizer, TrainConfig, TrainLogRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Derived-stream id for parameter initialisation.
const INIT_STREAM: u64 = 0x1_0000;

#[derive(Parser, Debug)]
#[command(name = "g2lstm", version, about = "LSTM language models with binary-concrete gates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a language model and write its best-validation checkpoint.
    Train(TrainArgs),
    /// Perplexity of a checkpoint on a corpus split.
    Eval(EvalArgs),
    /// Quantize or low-rank truncate the input/forget gates of a checkpoint.
    Compress(CompressArgs),
    /// Input and forget gate histograms over a corpus split.
    GateStats(GateStatsArgs),
    /// Per-token mean input and forget gates while reading a sentence.
    Trace(TraceArgs),
    /// Check binary-concrete tail masses against their Bernoulli limit.
    VerifyGumbel(VerifyArgs),
    /// Finite-difference check of the backpropagated gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GateArg {
    Standard,
    Sharpened,
    Gumbel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TokenizerArg {
    Char,
    Word,
}

impl From<TokenizerArg> for TokenizerKind {
    fn from(t: TokenizerArg) -> Self {
        match t {
            TokenizerArg::Char => TokenizerKind::Char,
            TokenizerArg::Word => TokenizerKind::Word,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Valid,
    Test,
}

impl SplitArg {
    fn file(self) -> &'static str {
        match self {
            SplitArg::Train => "train.txt",
            SplitArg::Valid => "valid.txt",
            SplitArg::Test => "test.txt",
        }
    }

    fn name(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Valid => "valid",
            SplitArg::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CompressKind {
    Round,
    Roundclip,
    Lowrank,
}

#[derive(Args, Debug)]
struct GateModeArgs {
    #[arg(long, value_enum, default_value = "gumbel")]
    gate_mode: GateArg,
    /// Gate temperature; defaults to 0.2 (sharpened) or 0.9 (gumbel).
    #[arg(long)]
    tau: Option<f64>,
}

impl GateModeArgs {
    fn resolve(&self) -> Result<GateMode, CliError> {
        let mode = match (self.gate_mode, self.tau) {
            (GateArg::Standard, None) => GateMode::Standard,
            (GateArg::Standard, Some(_)) => {
                return Err(CliError::Usage("--tau does not apply to --gate-mode standard".into()))
            }
            (GateArg::Sharpened, t) => GateMode::SharpenedSigmoid(t.unwrap_or(0.2)),
            (GateArg::Gumbel, t) => GateMode::GumbelGate(t.unwrap_or(0.9)),
        };
        mode.validate().map_err(usage)?;
        Ok(mode)
    }
}

#[derive(Args, Debug)]
struct EvalShape {
    /// Streams evaluated side by side.
    #[arg(long, default_value_t = 20)]
    batch: usize,
    /// Steps per window; state carries across windows.
    #[arg(long, default_value_t = 35)]
    window: usize,
}

impl EvalShape {
    fn options(&self, hard_gates: bool) -> Result<EvalOptions, CliError> {
        if self.batch == 0 || self.window == 0 {
            return Err(CliError::Usage("--batch and --window must be at least 1".into()));
        }
        Ok(EvalOptions {
            batch: self.batch,
            window: self.window,
            hard_gates,
        })
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory holding train.txt, valid.txt and test.txt.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "char")]
    tokenizer: TokenizerArg,
    /// Word mode: rarer training words become <unk>.
    #[arg(long, default_value_t = 1)]
    min_freq: usize,
    #[command(flatten)]
    gate: GateModeArgs,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 256)]
    embed: usize,
    /// Share the embedding with the output projection; defaults to on for
    /// word tokens and off for characters.
    #[arg(long)]
    tie_embeddings: Option<bool>,
    /// Dropout between stacked layers.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: OptimizerArg,
    /// Defaults to 2e-3 for Adam and 1.0 for SGD.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// SGD: learning-rate factor applied on a validation plateau.
    #[arg(long, default_value_t = 0.25)]
    decay_factor: f64,
    /// SGD: validations without improvement before decaying.
    #[arg(long, default_value_t = 1)]
    patience: usize,
    #[arg(long, default_value_t = 2.0)]
    clip_norm: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 35)]
    window: usize,
    #[arg(long, default_value_t = 20)]
    batch: usize,
    /// Also validate every N steps (0: epoch ends only).
    #[arg(long, default_value_t = 0)]
    eval_every: usize,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV; stdout when omitted.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Overrides the tokenizer inferred from the checkpoint vocabulary.
    #[arg(long, value_enum)]
    tokenizer: Option<TokenizerArg>,
    #[command(flatten)]
    shape: EvalShape,
    /// Replace input/forget gates with 1[σ(a/τ) ≥ 0.5].
    #[arg(long)]
    hard_gates: bool,
    /// Add a row for the add-one unigram model of the training split.
    #[arg(long)]
    unigram: bool,
}

#[derive(Args, Debug)]
struct CompressArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    kind: CompressKind,
    /// Rounding step.
    #[arg(long, default_value_t = 0.2)]
    r: f64,
    /// Clip bound (roundclip).
    #[arg(long, default_value_t = 0.4)]
    c: f64,
    /// Rank kept (lowrank).
    #[arg(long)]
    k: Option<usize>,
    /// Corpus used to measure perplexity before and after.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_enum)]
    tokenizer: Option<TokenizerArg>,
    #[command(flatten)]
    shape: EvalShape,
    /// Write the compressed model here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report CSV; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GateStatsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_enum)]
    tokenizer: Option<TokenizerArg>,
    #[arg(long, default_value_t = 0)]
    layer: usize,
    /// Use at most this many lines of the split.
    #[arg(long)]
    max_lines: Option<usize>,
    /// Directory for input_histogram.csv and forget_histogram.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sentence to read.
    #[arg(long, conflicts_with = "text_file", required_unless_present = "text_file")]
    text: Option<String>,
    #[arg(long)]
    text_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    tokenizer: Option<TokenizerArg>,
    #[arg(long, default_value_t = 0)]
    layer: usize,
    /// Trace CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Named (α, τ, ε) grid; overridden by --alpha/--tau/--epsilon.
    #[arg(long, default_value = "default")]
    grid: String,
    #[arg(long, requires_all = ["tau", "epsilon"])]
    alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    tau: Option<f64>,
    #[arg(long, requires = "alpha")]
    epsilon: Option<f64>,
    /// Samples per grid point.
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Mode to check; all three when omitted.
    #[arg(long, value_enum)]
    gate_mode: Option<GateArg>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tie_embeddings: bool,
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Check training mode (frozen noise) rather than evaluation mode.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    training: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
    /// Ran to completion, but a check it performed failed.
    Check(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(Error::io(path, e))
}

/// Parses `args` (program name first) and runs the subcommand, writing to
/// the process stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run_with(args, &mut out, &mut err)
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a, out, err),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Compress(a) => cmd_compress(a, out, err),
        Command::GateStats(a) => cmd_gate_stats(a, out),
        Command::Trace(a) => cmd_trace(a, out),
        Command::VerifyGumbel(a) => cmd_verify(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
        Err(CliError::Check(msg)) => {
            let _ = writeln!(err, "check failed: {msg}");
            EXIT_FAILURE
        }
    }
}

/// Opens `path` for writing, or falls back to `out`.
fn with_sink<R>(
    path: Option<&Path>,
    out: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> Result<R, CliError>,
) -> Result<R, CliError> {
    match path {
        Some(p) => {
            let file = fs::File::create(p).map_err(io_err(p))?;
            let mut w = std::io::BufWriter::new(file);
            let r = f(&mut w)?;
            w.flush().map_err(io_err(p))?;
            Ok(r)
        }
        None => f(out),
    }
}

fn write_out(w: &mut dyn Write, text: &str) -> Result<(), CliError> {
    w.write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(Error::io("<output>", e)))
}

fn load_model(path: &Path, tokenizer: Option<TokenizerArg>) -> Result<(Model, Vocabulary, TokenizerKind), CliError> {
    let (model, vocab) = read_checkpoint(path)?;
    let kind = tokenizer.map(Into::into).unwrap_or_else(|| infer_tokenizer(&vocab));
    Ok((model, vocab, kind))
}

fn read_split(data: &Path, split: SplitArg) -> Result<String, CliError> {
    let path = data.join(split.file());
    fs::read_to_string(&path).map_err(io_err(&path))
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mode = a.gate.resolve()?;
    let tokenizer: TokenizerKind = a.tokenizer.into();
    let tie = a.tie_embeddings.unwrap_or(tokenizer == TokenizerKind::Word);
    let optimizer = match a.optimizer {
        OptimizerArg::Adam => Optimizer::Adam {
            lr: a.lr.unwrap_or(2e-3),
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        },
        OptimizerArg::Sgd => Optimizer::Sgd {
            lr: a.lr.unwrap_or(1.0),
            decay_factor: a.decay_factor,
            patience: a.patience,
        },
    };
    let cfg = TrainConfig {
        optimizer,
        clip_norm: a.clip_norm,
        epochs: a.epochs,
        seed: a.seed,
        window: a.window,
        batch: a.batch,
        eval_every: a.eval_every,
    };
    cfg.validate().map_err(usage)?;

    let corpus = load_corpus_dir(&a.data, tokenizer, a.min_freq)?;
    let config = ModelConfig {
        vocab_size: corpus.vocab.len(),
        embed_dim: a.embed,
        hidden_dim: a.hidden,
        num_layers: a.layers,
        gate_mode: mode,
        tie_embeddings: tie,
        dropout_p: a.dropout,
    };
    config.validate().map_err(usage)?;
    let model = Model::init(config, &mut RngState::new(a.seed).derive(INIT_STREAM))?;
    let _ = writeln!(
        err,
        "training {mode} model: {} params, vocab {}, {} training tokens",
        model.num_params(),
        corpus.vocab.len(),
        corpus.train.len()
    );

    let outcome = with_sink(a.log.as_deref(), out, |w| {
        write_out(w, &format!("{}\n", TrainLogRow::CSV_HEADER))?;
        let mut write_failed = None;
        let outcome = train_loop_with(model, &corpus.train, &corpus.valid, &cfg, |row| {
            if write_failed.is_none() {
                if let Err(e) = writeln!(w, "{}", row.csv_row()) {
                    write_failed = Some(e);
                }
            }
        })?;
        if let Some(e) = write_failed {
            return Err(CliError::Runtime(Error::io("<training log>", e)));
        }
        Ok(outcome)
    })?;
    write_checkpoint(&a.out, &outcome.best, &corpus.vocab)?;
    let opts = EvalOptions {
        batch: a.batch,
        window: a.window,
        hard_gates: false,
    };
    let test = if corpus.test.len() >= 2 {
        evaluate(&outcome.best, &corpus.test, &opts)?.perplexity().to_string()
    } else {
        "n/a".into()
    };
    let _ = writeln!(
        err,
        "best validation perplexity {:.4}; test perplexity {test}; wrote {}",
        outcome.best_val_ppl,
        a.out.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let opts = a.shape.options(a.hard_gates)?;
    let (model, vocab, kind) = load_model(&a.model, a.tokenizer)?;
    let ids = vocab.encode(kind, &read_split(&a.data, a.split)?);
    let r = evaluate(&model, &ids, &opts)?;
    let mut csv = String::from("model,split,tokens,mean_nll,perplexity\n");
    csv.push_str(&format!(
        "{},{},{},{},{}\n",
        model.config.gate_mode.name(),
        a.split.name(),
        r.n_targets,
        r.mean_nll(),
        r.perplexity()
    ));
    if a.unigram {
        let train = vocab.encode(kind, &read_split(&a.data, SplitArg::Train)?);
        let uni = UnigramModel::fit(&train, vocab.len())?;
        let ppl = uni.perplexity(&ids)?;
        csv.push_str(&format!(
            "unigram,{},{},{},{ppl}\n",
            a.split.name(),
            ids.len() - 1,
            ppl.ln()
        ));
    }
    write_out(out, &csv)
}

fn cmd_compress(a: CompressArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let spec = match a.kind {
        CompressKind::Round => CompressionSpec::Round { r: a.r },
        CompressKind::Roundclip => CompressionSpec::RoundClip { r: a.r, c: a.c },
        CompressKind::Lowrank => CompressionSpec::LowRank {
            k: a.k.ok_or_else(|| CliError::Usage("--kind lowrank needs --k".into()))?,
        },
    };
    spec.validate().map_err(usage)?;
    let opts = a.shape.options(false)?;
    let (model, vocab, kind) = load_model(&a.model, a.tokenizer)?;
    let ids = vocab.encode(kind, &read_split(&a.data, a.split)?);
    let (compressed, report) = compress_and_report(&model, &spec, &ids, &opts).map_err(|e| match e {
        Error::InvalidArgument(m) => CliError::Usage(m),
        e => CliError::Runtime(e),
    })?;
    if let Some(support) = &report.support_values {
        let shown: Vec<String> = support.iter().take(16).map(|v| v.to_string()).collect();
        let more = if support.len() > 16 { ", ..." } else { "" };
        let _ = writeln!(
            err,
            "gate support ({} values): {{{}{more}}}",
            support.len(),
            shown.join(", ")
        );
    }
    if let (Some(before), Some(after), Some(rate)) = (report.rank_before, report.rank_after, report.rate) {
        let _ = writeln!(err, "gate rank {before} -> {after}, stored fraction {rate:.4}");
    }
    if let Some(path) = &a.out {
        write_checkpoint(path, &compressed, &vocab)?;
    }
    with_sink(a.report.as_deref(), out, |w| {
        write_out(w, &format!("{}\n{}\n", CompressionReport::CSV_HEADER, report.csv_row()))
    })
}

/// One token stream per line of `text`, newline included.
fn line_streams(vocab: &Vocabulary, kind: TokenizerKind, text: &str, max: Option<usize>) -> Vec<Vec<u32>> {
    text.split_inclusive('\n')
        .map(|line| vocab.encode(kind, line))
        .filter(|ids| !ids.is_empty())
        .take(max.unwrap_or(usize::MAX))
        .collect()
}

fn cmd_gate_stats(a: GateStatsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (model, vocab, kind) = load_model(&a.model, a.tokenizer)?;
    if a.layer >= model.config.num_layers {
        return Err(CliError::Usage(format!(
            "--layer {} out of range for a {}-layer model",
            a.layer, model.config.num_layers
        )));
    }
    let sample = line_streams(&vocab, kind, &read_split(&a.data, a.split)?, a.max_lines);
    let (input, forget) = collect_gate_histograms(&model, &sample, a.layer)?;
    fs::create_dir_all(&a.out_dir).map_err(io_err(&a.out_dir))?;
    let mut summary = String::from("gate,total,saturation_low,saturation_high,saturation\n");
    for h in [&input, &forget] {
        let path = a.out_dir.join(format!("{}_histogram.csv", h.gate.name()));
        fs::write(&path, h.csv()).map_err(io_err(&path))?;
        summary.push_str(&summary_row(h));
    }
    write_out(out, &summary)
}

fn summary_row(h: &GateHistogram) -> String {
    format!(
        "{},{},{},{},{}\n",
        h.gate.name(),
        h.total,
        h.saturation_low,
        h.saturation_high,
        h.saturation()
    )
}

fn cmd_trace(a: TraceArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (model, vocab, kind) = load_model(&a.model, a.tokenizer)?;
    let text = match (&a.text, &a.text_file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => fs::read_to_string(p).map_err(io_err(p))?,
        (None, None) => return Err(CliError::Usage("give --text or --text-file".into())),
    };
    if a.layer >= model.config.num_layers {
        return Err(CliError::Usage(format!(
            "--layer {} out of range for a {}-layer model",
            a.layer, model.config.num_layers
        )));
    }
    let tokens = kind.split(&text);
    let trace = trace_sentence(&model, &vocab, &tokens, a.layer)?;
    with_sink(a.out.as_deref(), out, |w| write_out(w, &trace.csv()))
}

fn cmd_verify(a: VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let grid = match (a.alpha, a.tau, a.epsilon) {
        (Some(alpha), Some(tau), Some(eps)) => vec![(alpha, tau, eps)],
        _ if a.grid == "default" => prop1_default_grid(),
        _ => {
            return Err(CliError::Usage(format!(
                "unknown grid '{}' (expected 'default')",
                a.grid
            )))
        }
    };
    let root = RngState::new(a.seed);
    let mut csv = format!("{}\n", Prop1Report::CSV_HEADER);
    let mut failed = 0;
    for (i, &(alpha, tau, eps)) in grid.iter().enumerate() {
        let report = verify_prop1(alpha, tau, eps, a.n, &mut root.derive(i as u64)).map_err(usage)?;
        failed += usize::from(!report.holds());
        csv.push_str(&report.csv_row());
        csv.push('\n');
    }
    write_out(out, &csv)?;
    if failed > 0 {
        return Err(CliError::Check(format!(
            "{failed} of {} grid points violate the bounds",
            grid.len()
        )));
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.h > 0.0) || !(a.tol > 0.0) {
        return Err(CliError::Usage("--h and --tol must be positive".into()));
    }
    let modes = match a.gate_mode {
        Some(g) => vec![GateModeArgs {
            gate_mode: g,
            tau: a.tau,
        }
        .resolve()?],
        None => vec![
            GateMode::Standard,
            GateMode::SharpenedSigmoid(a.tau.unwrap_or(0.2)),
            GateMode::GumbelGate(a.tau.unwrap_or(0.9)),
        ],
    };
    let mut csv = format!("{}\n", crate::analysis::GradCheckReport::CSV_HEADER);
    let mut failed = Vec::new();
    for mode in modes {
        let mut case = GradCheckCase::small(mode, a.tie_embeddings, a.seed)?;
        case.training = a.training;
        let report = grad_check_case(&case, a.h, a.tol)?;
        for row in report.csv_rows() {
            csv.push_str(&row);
            csv.push('\n');
        }
        if !report.passed() {
            failed.push(mode.to_string());
        }
    }
    write_out(out, &csv)?;
    if !failed.is_empty() {
        return Err(CliError::Check(format!("gradient mismatch for {}", failed.join(", "))));
    }
    Ok(())
}
