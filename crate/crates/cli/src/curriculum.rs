use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use dyntok::curriculum::stage_dir;
use dyntok::{Curriculum, CurriculumConfig, EntropySource, Error, Phase};
use serde_json::json;

use crate::usage;

#[derive(Subcommand)]
pub enum Action {
    /// Run the whole schedule into a run directory
    Run {
        /// TOML file with CurriculumConfig keys; flags override it
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Advance a run directory by one stage (external entropy handshake)
    ///
    /// Starts the run when the directory holds none yet. Prints one JSON
    /// line: status "advanced", "awaiting-entropy" (with the files the
    /// trainer must write) or "done".
    Step {
        /// Run directory
        #[arg(long)]
        state: PathBuf,
        /// Only used when starting a new run
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// One flag per config key.
#[derive(Args, Default)]
pub struct Overrides {
    /// Comma-separated schedule: expand, expand:<cap>, reduce:<target> [default: `iterations` expansions]
    #[arg(long, value_delimiter = ',')]
    phases: Option<Vec<Phase>>,
    /// Entropy threshold in bits [default: 0.3]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Tokens added per expansion at most [default: 3000]
    #[arg(long)]
    growth_cap: Option<usize>,
    /// Vocabulary size limit [default: 18000]
    #[arg(long)]
    vocab_cap: Option<usize>,
    /// Expansion stages when no phases are given [default: 5]
    #[arg(long)]
    iterations: Option<usize>,
    /// builtin-ngram or external-dump [default: builtin-ngram]
    #[arg(long)]
    entropy_source: Option<EntropySource>,
    /// Training text file
    #[arg(long)]
    train_corpus: Option<PathBuf>,
    /// [default: split from the training corpus]
    #[arg(long)]
    validation_corpus: Option<PathBuf>,
    /// [default: 0.05]
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// [default: 4]
    #[arg(long)]
    ngram_order: Option<usize>,
    /// [default: 0.01]
    #[arg(long)]
    ngram_alpha: Option<f64>,
    /// [default: 8]
    #[arg(long)]
    max_span_tokens: Option<usize>,
    /// [default: 2]
    #[arg(long)]
    min_frequency: Option<u64>,
    /// [default: 65536]
    #[arg(long)]
    chunk_chars: Option<usize>,
    /// Also run the compute-matched baseline [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    baseline: Option<bool>,
}

impl Overrides {
    fn is_empty(&self) -> bool {
        self.phases.is_none()
            && self.epsilon.is_none()
            && self.growth_cap.is_none()
            && self.vocab_cap.is_none()
            && self.iterations.is_none()
            && self.entropy_source.is_none()
            && self.train_corpus.is_none()
            && self.validation_corpus.is_none()
            && self.validation_fraction.is_none()
            && self.ngram_order.is_none()
            && self.ngram_alpha.is_none()
            && self.max_span_tokens.is_none()
            && self.min_frequency.is_none()
            && self.chunk_chars.is_none()
            && self.baseline.is_none()
    }

    fn apply(self, cfg: &mut CurriculumConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        set!(
            phases,
            epsilon,
            growth_cap,
            vocab_cap,
            iterations,
            entropy_source,
            validation_fraction,
            ngram_order,
            ngram_alpha,
            max_span_tokens,
            min_frequency,
            chunk_chars,
            baseline
        );
        if self.train_corpus.is_some() {
            cfg.train_corpus = self.train_corpus;
        }
        if self.validation_corpus.is_some() {
            cfg.validation_corpus = self.validation_corpus;
        }
    }
}

/// Config file, then flags. Relative corpus paths in the file resolve against its directory.
fn build_config(path: Option<&Path>, overrides: Overrides, seed: Option<u64>) -> Result<CurriculumConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            let mut cfg = CurriculumConfig::from_toml(&text).with_context(|| format!("config {}", p.display()))?;
            let base = p.parent().unwrap_or(Path::new("."));
            for corpus in [&mut cfg.train_corpus, &mut cfg.validation_corpus]
                .into_iter()
                .flatten()
            {
                if corpus.is_relative() {
                    *corpus = base.join(&*corpus);
                }
            }
            cfg
        }
        None => CurriculumConfig::default(),
    };
    overrides.apply(&mut cfg);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    if cfg.train_corpus.is_none() {
        return Err(usage(
            "no training corpus: set train_corpus in the config or pass --train-corpus",
        ));
    }
    Ok(cfg)
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

pub fn run(action: Action, seed: Option<u64>) -> Result<()> {
    match action {
        Action::Run { config, out, overrides } => {
            let cfg = build_config(config.as_deref(), overrides, seed)?;
            let state = Curriculum::from_config(cfg)?.with_output(&out).run()?;
            for r in &state.records {
                println!(
                    "stage {} vocab {} validation_bpc {}",
                    r.stage,
                    r.vocab_size,
                    r.validation_bpc.map_or("n/a".into(), |b| format!("{b:.4}"))
                );
            }
        }
        Action::Step {
            state: dir,
            config,
            overrides,
        } => {
            let started = dir.join("run.json").exists();
            if !started {
                let cfg = build_config(config.as_deref(), overrides, seed)?;
                Curriculum::from_config(cfg)?.with_output(&dir).init_run()?;
            } else if config.is_some() || !overrides.is_empty() || seed.is_some() {
                return Err(usage(format!(
                    "{} already holds a run; config flags only apply when starting one",
                    dir.display()
                )));
            }
            let (curriculum, mut state) = Curriculum::resume(&dir)?;
            if state.done {
                print_json(json!({"status": "done", "stage": state.stage, "vocab_size": state.vocab.len()}));
                return Ok(());
            }
            match curriculum.run_stage(&mut state) {
                Ok(()) => {
                    let rec = state.records.last().expect("a stage was recorded");
                    if state.done
                        && curriculum.config().baseline
                        && curriculum.config().entropy_source == EntropySource::BuiltinNgram
                    {
                        curriculum.write_baseline(&state)?;
                    }
                    print_json(json!({
                        "status": "advanced",
                        "stage": rec.stage,
                        "vocab_size": rec.vocab_size,
                        "validation_bpc": rec.validation_bpc,
                        "next_vocab_size": state.vocab.len(),
                        "done": state.done,
                    }));
                }
                Err(Error::AwaitingEntropy(k)) => {
                    let sd = stage_dir(&dir, k);
                    let path = |name: &str| sd.join(name).display().to_string();
                    print_json(json!({
                        "status": "awaiting-entropy",
                        "stage": k,
                        "vocab": path("vocab.jsonl"),
                        "stream": path("stream.bin"),
                        "val_stream": path("val_stream.bin"),
                        "write": {
                            "entropy": path("entropy.bin"),
                            "val_nll": path("val_nll.bin"),
                            "nll": path("nll.bin"),
                        },
                    }));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(())
}
