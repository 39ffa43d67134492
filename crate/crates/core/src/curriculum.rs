//! Alternates entropy-source fitting with vocabulary updates.
//!
//! Each stage encodes the corpus under the current vocabulary, obtains
//! entropy and surprisal traces (from the built-in n-gram model or from
//! dump files written by an external trainer), records validation BPC, and
//! then expands or reduces the vocabulary according to its phase.
//!
//! Run directory layout:
//!
//! ```text
//! run.json                  config echo and seed
//! state.json                stage counter and all stage records
//! stage_k/vocab.jsonl       vocabulary evaluated at stage k
//! stage_k/stream.bin        training corpus encoded under it
//! stage_k/val_stream.bin    validation corpus encoded under it
//! stage_k/entropy.bin       training entropy trace (external source: written by the trainer)
//! stage_k/val_nll.bin       validation surprisal (external source only)
//! stage_k/candidates.jsonl  merge candidates considered for the expansion
//! stage_k/metrics.json      validation BpcReport
//! baseline.json             compute-matched baseline records, when enabled
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::codec::Codec;
use crate::corpus::Corpus;
use crate::entropy::{load_entropy_dump, save_entropy_dump, DumpEncoding, EntropyTrace, NgramModel, TraceKind};
use crate::error::{Error, Result};
use crate::merge::{find_candidates, write_candidates, MergeConfig};
use crate::metrics::{bpc_report, BpcReport};
use crate::stream::{write_stream, StreamEncoding, TokenStream};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Phase {
    /// Grow by at most `cap` tokens (the configured growth cap when `None`).
    Expand { cap: Option<usize> },
    /// Prefix-slice to `target` tokens.
    Reduce { target: usize },
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Expand { cap: None } => f.write_str("expand"),
            Phase::Expand { cap: Some(c) } => write!(f, "expand:{c}"),
            Phase::Reduce { target } => write!(f, "reduce:{target}"),
        }
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "invalid phase `{s}` (expected expand, expand:<cap> or reduce:<target>)"
            ))
        };
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a.parse::<usize>().map_err(|_| bad())?)),
            None => (s, None),
        };
        match (kind, arg) {
            ("expand", None) => Ok(Phase::Expand { cap: None }),
            ("expand", Some(c)) if c > 0 => Ok(Phase::Expand { cap: Some(c) }),
            ("reduce", Some(t)) => Ok(Phase::Reduce { target: t }),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Phase {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Phase> for String {
    fn from(p: Phase) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EntropySource {
    #[default]
    BuiltinNgram,
    ExternalDump,
}

impl FromStr for EntropySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "builtin-ngram" => Ok(EntropySource::BuiltinNgram),
            "external-dump" => Ok(EntropySource::ExternalDump),
            _ => Err(Error::Config(format!("unknown entropy source `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    /// Explicit schedule. When empty, `iterations` expansion phases are run.
    pub phases: Vec<Phase>,
    pub epsilon: f64,
    pub growth_cap: usize,
    pub vocab_cap: usize,
    pub iterations: usize,
    pub entropy_source: EntropySource,
    pub train_corpus: Option<PathBuf>,
    /// Defaults to the final `validation_fraction` of the training corpus.
    pub validation_corpus: Option<PathBuf>,
    pub validation_fraction: f64,
    pub ngram_order: usize,
    pub ngram_alpha: f64,
    pub max_span_tokens: usize,
    pub min_frequency: u64,
    pub chunk_chars: usize,
    /// Also run the compute-matched baseline after the curriculum.
    pub baseline: bool,
    pub seed: u64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        let merge = MergeConfig::default();
        CurriculumConfig {
            phases: Vec::new(),
            epsilon: merge.epsilon,
            growth_cap: merge.growth_cap,
            vocab_cap: 18_000,
            iterations: 5,
            entropy_source: EntropySource::BuiltinNgram,
            train_corpus: None,
            validation_corpus: None,
            validation_fraction: 0.05,
            ngram_order: 4,
            ngram_alpha: 0.01,
            max_span_tokens: merge.max_span_tokens,
            min_frequency: merge.min_frequency,
            chunk_chars: 1 << 16,
            baseline: false,
            seed: 0,
        }
    }
}

impl CurriculumConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: CurriculumConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn merge_config(&self) -> MergeConfig {
        MergeConfig {
            epsilon: self.epsilon,
            growth_cap: self.growth_cap,
            max_span_tokens: self.max_span_tokens,
            min_frequency: self.min_frequency,
        }
    }

    pub fn schedule(&self) -> Vec<Phase> {
        if self.phases.is_empty() {
            vec![Phase::Expand { cap: None }; self.iterations]
        } else {
            self.phases.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.merge_config().validate()?;
        if self.vocab_cap == 0 {
            return Err(Error::Config("vocab_cap must be positive".into()));
        }
        if self.ngram_order == 0 {
            return Err(Error::Config("ngram_order must be at least 1".into()));
        }
        if !(self.ngram_alpha > 0.0 && self.ngram_alpha.is_finite()) {
            return Err(Error::Config("ngram_alpha must be positive".into()));
        }
        if self.chunk_chars == 0 {
            return Err(Error::Config("chunk_chars must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Measurements for the vocabulary evaluated at one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub vocab_size: usize,
    pub train_bpc: Option<f64>,
    pub validation_bpc: Option<f64>,
    /// Tokens added by this stage's update.
    pub added: usize,
    /// Tokens removed by this stage's update.
    pub removed: usize,
    pub wall_ms: u64,
    pub report: Option<BpcReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub vocab_size: usize,
    /// Training budget in corpus passes.
    pub passes: u64,
    pub train_bpc: Option<f64>,
    pub validation_bpc: Option<f64>,
    pub report: Option<BpcReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    pub stage: usize,
    pub vocab: Vocabulary,
    pub records: Vec<StageRecord>,
    /// Schedule exhausted, or an expansion found nothing to add.
    pub done: bool,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    stage: usize,
    vocab_stage: u32,
    done: bool,
    records: Vec<StageRecord>,
}

#[derive(Serialize, Deserialize)]
struct RunFile {
    config: CurriculumConfig,
    seed: u64,
}

struct Evaluation {
    train: TokenStream,
    train_entropy: EntropyTrace,
    train_bpc: Option<f64>,
    validation_bpc: Option<f64>,
    report: Option<BpcReport>,
}

pub fn stage_dir(run_dir: &Path, stage: usize) -> PathBuf {
    run_dir.join(format!("stage_{stage}"))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub struct Curriculum {
    cfg: CurriculumConfig,
    corpus: Corpus,
    out_dir: Option<PathBuf>,
}

impl Curriculum {
    pub fn new(cfg: CurriculumConfig, corpus: Corpus) -> Result<Self> {
        cfg.validate()?;
        if corpus.train.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Curriculum {
            cfg,
            corpus,
            out_dir: None,
        })
    }

    /// Loads the corpora named by the config.
    pub fn from_config(cfg: CurriculumConfig) -> Result<Self> {
        let train = cfg
            .train_corpus
            .clone()
            .ok_or_else(|| Error::Config("train_corpus is not set".into()))?;
        let corpus = Corpus::load(&train, cfg.validation_corpus.as_deref(), cfg.validation_fraction)?;
        Self::new(cfg, corpus)
    }

    /// Persists artifacts under `dir`. Required for the external entropy source.
    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    pub fn config(&self) -> &CurriculumConfig {
        &self.cfg
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    /// Base vocabulary over every character of the train and validation text.
    pub fn initial_state(&self) -> Result<CurriculumState> {
        let all = format!("{}{}", self.corpus.train, self.corpus.validation);
        let vocab = Vocabulary::init_base(&all)?;
        if self.cfg.vocab_cap < vocab.base_size() {
            return Err(Error::Config(format!(
                "vocab_cap {} is below the base alphabet size {}",
                self.cfg.vocab_cap,
                vocab.base_size()
            )));
        }
        Ok(CurriculumState {
            stage: 0,
            vocab,
            records: Vec::new(),
            done: false,
        })
    }

    fn encode(&self, codec: &Codec, text: &str) -> Result<TokenStream> {
        let chunk = self.cfg.chunk_chars.max(codec.max_token_chars());
        codec.encode_batched(text, chunk)
    }

    fn evaluate(&self, stage: usize, vocab: &Vocabulary, dir: Option<&Path>, passes: u64) -> Result<Evaluation> {
        let codec = Codec::new(vocab);
        let train = self.encode(&codec, &self.corpus.train)?;
        let validation = self.encode(&codec, &self.corpus.validation)?;
        if let Some(dir) = dir {
            create_dir(dir)?;
            vocab.save(dir.join("vocab.jsonl"))?;
            write_stream(&train, dir.join("stream.bin"), StreamEncoding::Binary)?;
            write_stream(&validation, dir.join("val_stream.bin"), StreamEncoding::Binary)?;
        }

        let (train_entropy, train_nll, val_nll) = match self.cfg.entropy_source {
            EntropySource::BuiltinNgram => {
                let model = NgramModel::fit_passes(
                    &train.ids,
                    vocab.len(),
                    self.cfg.ngram_order,
                    self.cfg.ngram_alpha,
                    passes,
                )?;
                let entropy = model.entropy_trace(&train)?;
                if let Some(dir) = dir {
                    save_entropy_dump(&entropy, dir.join("entropy.bin"), DumpEncoding::F32Le)?;
                }
                let val_nll = if validation.is_empty() {
                    None
                } else {
                    Some(model.nll_trace(&validation)?)
                };
                (entropy, Some(model.nll_trace(&train)?), val_nll)
            }
            EntropySource::ExternalDump => {
                let dir =
                    dir.ok_or_else(|| Error::Config("the external entropy source needs an output directory".into()))?;
                let load = |name: &str, stream: &TokenStream, kind: TraceKind| -> Result<Option<EntropyTrace>> {
                    let path = dir.join(name);
                    if !path.exists() {
                        return Ok(None);
                    }
                    let trace = load_entropy_dump(&path, stream)?;
                    trace.require_kind(kind)?;
                    Ok(Some(trace))
                };
                let entropy = load("entropy.bin", &train, TraceKind::Entropy)?.ok_or(Error::AwaitingEntropy(stage))?;
                let val_nll = if validation.is_empty() {
                    None
                } else {
                    Some(load("val_nll.bin", &validation, TraceKind::Nll)?.ok_or(Error::AwaitingEntropy(stage))?)
                };
                (entropy, load("nll.bin", &train, TraceKind::Nll)?, val_nll)
            }
        };

        let report = val_nll
            .as_ref()
            .map(|nll| bpc_report(&validation, nll, vocab))
            .transpose()?;
        if let (Some(dir), Some(report)) = (dir, &report) {
            write_json(report, &dir.join("metrics.json"))?;
        }
        Ok(Evaluation {
            train_bpc: train_nll.map(|t| t.bits_per_char(train.text_len)),
            validation_bpc: report.as_ref().map(|r| r.global_bpc),
            train,
            train_entropy,
            report,
        })
    }

    fn update(&self, vocab: &Vocabulary, phase: Phase, eval: &Evaluation, dir: Option<&Path>) -> Result<Vocabulary> {
        match phase {
            Phase::Reduce { target } => vocab.reduce(target),
            Phase::Expand { cap } => {
                let cap = cap.unwrap_or(self.cfg.growth_cap);
                let room = self.cfg.vocab_cap.saturating_sub(vocab.len());
                if room < cap {
                    warn!(
                        "vocabulary cap {} reached: clamping growth from {cap} to {room}",
                        self.cfg.vocab_cap
                    );
                }
                let cap = cap.min(room);
                if cap == 0 {
                    return vocab.add(&[], 1);
                }
                let candidates = find_candidates(&eval.train, &eval.train_entropy, vocab, &self.cfg.merge_config())?;
                if let Some(dir) = dir {
                    write_candidates(&candidates, dir.join("candidates.jsonl"))?;
                }
                vocab.add(&candidates, cap)
            }
        }
    }

    /// Evaluates the current vocabulary and applies the next scheduled
    /// update, or records the final evaluation once the schedule is done.
    pub fn run_stage(&self, state: &mut CurriculumState) -> Result<()> {
        if state.done {
            return Ok(());
        }
        let started = Instant::now();
        let schedule = self.cfg.schedule();
        let dir = self.out_dir.as_ref().map(|d| stage_dir(d, state.stage));
        let eval = self.evaluate(state.stage, &state.vocab, dir.as_deref(), 1)?;

        let mut record = StageRecord {
            stage: state.stage,
            vocab_size: state.vocab.len(),
            train_bpc: eval.train_bpc,
            validation_bpc: eval.validation_bpc,
            added: 0,
            removed: 0,
            wall_ms: 0,
            report: eval.report.clone(),
        };
        match schedule.get(state.stage) {
            None => state.done = true,
            Some(&phase) => {
                let next = self.update(&state.vocab, phase, &eval, dir.as_deref())?;
                record.added = next.len().saturating_sub(state.vocab.len());
                record.removed = state.vocab.len().saturating_sub(next.len());
                if matches!(phase, Phase::Expand { .. }) && record.added == 0 {
                    info!("stage {}: expansion found nothing to add, stopping", state.stage);
                    state.done = true;
                }
                state.vocab = next;
                state.stage += 1;
            }
        }
        record.wall_ms = started.elapsed().as_millis() as u64;
        info!(
            "stage {}: vocab {} validation bpc {} (+{} -{})",
            record.stage,
            record.vocab_size,
            record.validation_bpc.map_or("n/a".into(), |b| format!("{b:.4}")),
            record.added,
            record.removed
        );
        state.records.push(record);
        if let Some(out) = &self.out_dir {
            self.save_state(out, state)?;
        }
        Ok(())
    }

    /// Runs the whole schedule, then the compute-matched baseline when enabled.
    pub fn run(&self) -> Result<CurriculumState> {
        if let Some(out) = &self.out_dir {
            self.write_run_file(out)?;
        }
        let mut state = self.initial_state()?;
        if let Some(out) = &self.out_dir {
            self.save_state(out, &state)?;
        }
        while !state.done {
            self.run_stage(&mut state)?;
        }
        if self.cfg.baseline {
            self.write_baseline(&state)?;
        }
        Ok(state)
    }

    /// Runs the compute-matched baseline and writes `baseline.json` into the run directory.
    pub fn write_baseline(&self, state: &CurriculumState) -> Result<Vec<BaselineRecord>> {
        let baseline = self.compute_matched_baseline(state)?;
        if let Some(out) = &self.out_dir {
            write_json(&baseline, &out.join("baseline.json"))?;
        }
        Ok(baseline)
    }

    /// From-scratch runs on prefixes of the final vocabulary, one per
    /// curriculum stage size, each with the training budget the curriculum
    /// had spent by that stage (stage `k` gets `k + 1` passes).
    pub fn compute_matched_baseline(&self, state: &CurriculumState) -> Result<Vec<BaselineRecord>> {
        let final_vocab = &state.vocab;
        let mut out = Vec::with_capacity(state.records.len());
        for (k, rec) in state.records.iter().enumerate() {
            if rec.vocab_size > final_vocab.len() {
                return Err(Error::Config(
                    "compute-matched baselines need an expansion-only schedule".into(),
                ));
            }
            let vocab = final_vocab.reduce(rec.vocab_size)?;
            let passes = k as u64 + 1;
            let dir = self
                .out_dir
                .as_ref()
                .map(|d| d.join("baseline").join(format!("size_{}", rec.vocab_size)));
            let eval = self.evaluate(k, &vocab, dir.as_deref(), passes)?;
            info!(
                "baseline: vocab {} passes {passes} validation bpc {}",
                rec.vocab_size,
                eval.validation_bpc.map_or("n/a".into(), |b| format!("{b:.4}"))
            );
            out.push(BaselineRecord {
                vocab_size: rec.vocab_size,
                passes,
                train_bpc: eval.train_bpc,
                validation_bpc: eval.validation_bpc,
                report: eval.report,
            });
        }
        Ok(out)
    }

    fn write_run_file(&self, out: &Path) -> Result<()> {
        create_dir(out)?;
        write_json(
            &RunFile {
                config: self.cfg.clone(),
                seed: self.cfg.seed,
            },
            &out.join("run.json"),
        )
    }

    fn save_state(&self, out: &Path, state: &CurriculumState) -> Result<()> {
        create_dir(out)?;
        let dir = stage_dir(out, state.stage);
        create_dir(&dir)?;
        state.vocab.save(dir.join("vocab.jsonl"))?;
        write_json(
            &StateFile {
                stage: state.stage,
                vocab_stage: state.vocab.stage(),
                done: state.done,
                records: state.records.clone(),
            },
            &out.join("state.json"),
        )
    }

    /// Starts a run directory without evaluating anything.
    pub fn init_run(&self) -> Result<CurriculumState> {
        let out = self
            .out_dir
            .as_ref()
            .ok_or_else(|| Error::Config("no output directory".into()))?;
        self.write_run_file(out)?;
        let state = self.initial_state()?;
        self.save_state(out, &state)?;
        Ok(state)
    }

    /// Reopens a run directory written by [`Curriculum::run`] or [`Curriculum::init_run`].
    pub fn resume(run_dir: impl AsRef<Path>) -> Result<(Self, CurriculumState)> {
        let run_dir = run_dir.as_ref();
        let run: RunFile = read_json(&run_dir.join("run.json"))?;
        let file: StateFile = read_json(&run_dir.join("state.json"))?;
        let curriculum = Self::from_config(run.config)?.with_output(run_dir);
        let loaded = Vocabulary::load(stage_dir(run_dir, file.stage).join("vocab.jsonl"))?;
        let vocab = Vocabulary::from_tokens(loaded.tokens().to_vec(), file.vocab_stage)?;
        let state = CurriculumState {
            stage: file.stage,
            vocab,
            records: file.records,
            done: file.done,
        };
        Ok((curriculum, state))
    }
}

/// Run records read back from a run directory, for reporting.
pub struct RunRecords {
    pub config: CurriculumConfig,
    pub records: Vec<StageRecord>,
    pub baseline: Option<Vec<BaselineRecord>>,
}

pub fn read_run(run_dir: impl AsRef<Path>) -> Result<RunRecords> {
    let run_dir = run_dir.as_ref();
    let run: RunFile = read_json(&run_dir.join("run.json"))?;
    let state: StateFile = read_json(&run_dir.join("state.json"))?;
    let baseline_path = run_dir.join("baseline.json");
    let baseline = if baseline_path.exists() {
        Some(read_json(&baseline_path)?)
    } else {
        None
    };
    Ok(RunRecords {
        config: run.config,
        records: state.records,
        baseline,
    })
}
