//! `dyntok` command-line interface.

mod curriculum;
mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dyntok::entropy::{load_entropy_dump, save_entropy_dump, DumpEncoding};
use dyntok::merge::write_candidates;
use dyntok::stream::{read_stream, write_stream, StreamEncoding};
use dyntok::{
    decode, find_candidates, synthetic_corpus, Codec, MergeConfig, NgramModel, SynthConfig, UnknownPolicy, Vocabulary,
};

/// Errors caused by the invocation itself rather than by the data (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "dyntok", version, about = "Entropy-guided dynamic tokenization engine")]
struct Cli {
    /// Worker threads for parallel encoding and counting [default: available cores]
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed recorded in run configs and used by synth-corpus
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a base vocabulary from the characters of one or more corpora
    InitVocab {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode text into a token stream
    Encode {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Characters per parallel chunk
        #[arg(long, default_value_t = 65536)]
        chunk: usize,
        #[arg(long, value_enum, default_value_t = StreamFormat::Binary)]
        format: StreamFormat,
        /// Substitute this base character for characters outside the alphabet
        #[arg(long)]
        replace: Option<char>,
    },
    /// Decode a token stream back to text
    Decode {
        #[arg(long)]
        vocab: PathBuf,
        /// Stream file written by `encode`
        #[arg(long)]
        input: PathBuf,
        /// Output text file [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the smoothed n-gram entropy source on a token stream
    FitNgram {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
    /// Write a per-position entropy or surprisal dump for a stream
    Entropy {
        /// Model written by `fit-ngram`
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = TraceKindArg::Entropy)]
        kind: TraceKindArg,
        #[arg(long, value_enum, default_value_t = DumpFormat::F32le)]
        format: DumpFormat,
    },
    /// Extract merge candidates and optionally the expanded vocabulary
    MergeStep {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        entropy: PathBuf,
        /// Candidate file (JSON Lines), at most `cap` entries
        #[arg(long)]
        out: PathBuf,
        /// Write the expanded vocabulary here
        #[arg(long)]
        vocab_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.3)]
        epsilon: f64,
        #[arg(long, default_value_t = 3000)]
        cap: usize,
        #[arg(long, default_value_t = 8)]
        max_span_tokens: usize,
        #[arg(long, default_value_t = 2)]
        min_frequency: u64,
    },
    /// Keep the first `size` tokens of a vocabulary
    Reduce {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run or step a vocabulary curriculum
    Curriculum {
        #[command(subcommand)]
        action: curriculum::Action,
    },
    /// Write plot tables and slope fits for a run directory
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic phrase-bank corpus
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        chars: usize,
        #[arg(long, default_value_t = 400)]
        words: usize,
        #[arg(long, default_value_t = 200)]
        phrases: usize,
        #[arg(long, default_value_t = 100)]
        sentences: usize,
        #[arg(long, default_value_t = 0.003)]
        noise: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StreamFormat {
    Binary,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpFormat {
    F32le,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceKindArg {
    Entropy,
    Nll,
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_stream(path: &Path, vocab: &Vocabulary) -> Result<dyntok::TokenStream> {
    let stream = read_stream(path)?;
    stream.validate(vocab)?;
    Ok(stream)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::InitVocab { input, out } => {
            let mut text = String::new();
            for p in &input {
                text.push_str(&read_text(p)?);
            }
            Vocabulary::init_base(&text)?.save(&out)?;
        }
        Command::Encode {
            vocab,
            input,
            out,
            chunk,
            format,
            replace,
        } => {
            let vocab = Vocabulary::load(&vocab)?;
            let mut codec = Codec::new(&vocab);
            if let Some(c) = replace {
                codec = codec.with_policy(UnknownPolicy::Replace(c))?;
            }
            if chunk == 0 {
                return Err(usage("--chunk must be positive"));
            }
            let stream = codec.encode_batched(&read_text(&input)?, chunk)?;
            let enc = match format {
                StreamFormat::Binary => StreamEncoding::Binary,
                StreamFormat::Text => StreamEncoding::Text,
            };
            write_stream(&stream, &out, enc)?;
        }
        Command::Decode { vocab, input, out } => {
            let vocab = Vocabulary::load(&vocab)?;
            let text = decode(&load_stream(&input, &vocab)?, &vocab)?;
            match out {
                Some(p) => write_file(&p, text.as_bytes())?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
        }
        Command::FitNgram {
            vocab,
            input,
            out,
            order,
            alpha,
        } => {
            let vocab = Vocabulary::load(&vocab)?;
            let stream = load_stream(&input, &vocab)?;
            let model = NgramModel::fit(&stream.ids, vocab.len(), order, alpha)?;
            write_file(&out, model.to_json()?.as_bytes())?;
        }
        Command::Entropy {
            model,
            input,
            out,
            kind,
            format,
        } => {
            let model = NgramModel::from_json(&read_text(&model)?)?;
            let stream = read_stream(&input)?;
            let trace = match kind {
                TraceKindArg::Entropy => model.entropy_trace(&stream)?,
                TraceKindArg::Nll => model.nll_trace(&stream)?,
            };
            let enc = match format {
                DumpFormat::F32le => DumpEncoding::F32Le,
                DumpFormat::Text => DumpEncoding::Text,
            };
            save_entropy_dump(&trace, &out, enc)?;
        }
        Command::MergeStep {
            vocab,
            stream,
            entropy,
            out,
            vocab_out,
            epsilon,
            cap,
            max_span_tokens,
            min_frequency,
        } => {
            let vocab = Vocabulary::load(&vocab)?;
            let stream = load_stream(&stream, &vocab)?;
            let trace = load_entropy_dump(&entropy, &stream)?;
            let cfg = MergeConfig {
                epsilon,
                growth_cap: cap,
                max_span_tokens,
                min_frequency,
            };
            cfg.validate()?;
            let mut candidates = find_candidates(&stream, &trace, &vocab, &cfg)?;
            candidates.truncate(cap);
            write_candidates(&candidates, &out)?;
            if let Some(p) = vocab_out {
                vocab.add(&candidates, cap)?.save(&p)?;
            }
            log::info!("{} candidates", candidates.len());
        }
        Command::Reduce { vocab, size, out } => {
            Vocabulary::load(&vocab)?.reduce(size)?.save(&out)?;
        }
        Command::Curriculum { action } => curriculum::run(action, cli.seed)?,
        Command::Report { run, out } => report::run(&run, &out)?,
        Command::SynthCorpus {
            out,
            chars,
            words,
            phrases,
            sentences,
            noise,
        } => {
            if !(0.0..=1.0).contains(&noise) {
                return Err(usage("--noise must be in [0, 1]"));
            }
            let cfg = SynthConfig {
                chars,
                words,
                phrases,
                sentences,
                noise,
                seed: cli.seed.unwrap_or(0),
            };
            write_file(&out, synthetic_corpus(&cfg).as_bytes())?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let is_usage = err
        .chain()
        .any(|e| e.is::<UsageError>() || matches!(e.downcast_ref::<dyntok::Error>(), Some(dyntok::Error::Config(_))));
    if is_usage {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            let msg = msg.replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
