//! Per-position conditional entropy of a token stream.
//!
//! The built-in source is an add-alpha smoothed n-gram model. External
//! models hand their traces over through the dump file format:
//!
//! ```text
//! {"format":"dyntok-entropy","vocab_hash":"…","stream_length":n,"unit":"bits","kind":"entropy","encoding":"f32le"}
//! ```
//!
//! followed by `n` little-endian `f32` values (`"encoding":"f32le"`) or `n`
//! decimal lines (`"encoding":"text"`). All values are in bits.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::TokenStream;
use crate::vocab::{TokenId, VocabHash};

pub const ENTROPY_FORMAT: &str = "dyntok-entropy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    /// Entropy of the predictive distribution.
    Entropy,
    /// Surprisal of the realized token.
    Nll,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Entropy => "entropy",
            TraceKind::Nll => "nll",
        }
    }
}

/// One value in bits per stream position.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTrace {
    pub kind: TraceKind,
    pub values: Vec<f64>,
    pub vocab_hash: VocabHash,
}

impl EntropyTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_aligned(&self, stream: &TokenStream) -> Result<()> {
        if self.vocab_hash != stream.vocab_hash {
            return Err(Error::HashMismatch {
                expected: stream.vocab_hash.to_string(),
                found: self.vocab_hash.to_string(),
            });
        }
        if self.values.len() != stream.len() {
            return Err(Error::LengthMismatch {
                expected: stream.len(),
                found: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn require_kind(&self, kind: TraceKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::WrongTraceKind {
                expected: kind.as_str().into(),
                found: self.kind.as_str().into(),
            });
        }
        Ok(())
    }

    /// Mean bits per character of the underlying text.
    pub fn bits_per_char(&self, text_len: usize) -> f64 {
        self.values.iter().sum::<f64>() / text_len as f64
    }
}

/// Shannon entropy in bits of add-alpha smoothed counts over `vocab_size`
/// outcomes. `counts` lists the nonzero counts only.
pub fn smoothed_entropy(counts: &[u64], vocab_size: usize, alpha: f64) -> f64 {
    let total: u64 = counts.iter().sum();
    let denom = total as f64 + vocab_size as f64 * alpha;
    if denom <= 0.0 {
        return (vocab_size as f64).log2();
    }
    let mut h = 0.0;
    for &c in counts {
        let p = (c as f64 + alpha) / denom;
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    let unseen = vocab_size.saturating_sub(counts.len());
    if unseen > 0 && alpha > 0.0 {
        let p0 = alpha / denom;
        h -= unseen as f64 * p0 * p0.log2();
    }
    h.max(0.0)
}

/// Surprisal in bits of an outcome seen `count` times in a context seen `total` times.
pub fn smoothed_surprisal(count: u64, total: u64, vocab_size: usize, alpha: f64) -> f64 {
    let denom = total as f64 + vocab_size as f64 * alpha;
    if denom <= 0.0 {
        return (vocab_size as f64).log2();
    }
    -((count as f64 + alpha) / denom).log2()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ContextStats {
    total: u64,
    entropy: f64,
}

/// Add-alpha n-gram model over token ids.
///
/// Counts are kept for every context length `0..order`, so a position with
/// fewer than `order - 1` predecessors reads the table of its shorter context.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    alpha: f64,
    vocab_size: usize,
    /// `ngrams[l]` maps `context ++ [next]` (context length `l`) to its count.
    ngrams: Vec<HashMap<Vec<TokenId>, u64>>,
    contexts: Vec<HashMap<Vec<TokenId>, ContextStats>>,
}

impl PartialEq for NgramModel {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.alpha.to_bits() == other.alpha.to_bits()
            && self.vocab_size == other.vocab_size
            && self.ngrams == other.ngrams
    }
}

impl NgramModel {
    pub fn empty(vocab_size: usize, order: usize, alpha: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if vocab_size == 0 {
            return Err(Error::Config("vocabulary size must be positive".into()));
        }
        Ok(NgramModel {
            order,
            alpha,
            vocab_size,
            ngrams: vec![HashMap::new(); order],
            contexts: vec![HashMap::new(); order],
        })
    }

    pub fn fit(ids: &[TokenId], vocab_size: usize, order: usize, alpha: f64) -> Result<Self> {
        Self::fit_passes(ids, vocab_size, order, alpha, 1)
    }

    /// Fits as if the stream were read `passes` times.
    pub fn fit_passes(ids: &[TokenId], vocab_size: usize, order: usize, alpha: f64, passes: u64) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut model = Self::empty(vocab_size, order, alpha)?;
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= vocab_size) {
            return Err(Error::UnknownToken {
                id: bad,
                size: vocab_size,
            });
        }
        for t in 0..ids.len() {
            let longest = t.min(order - 1);
            for l in 0..=longest {
                let key = &ids[t - l..=t];
                let table = &mut model.ngrams[l];
                match table.get_mut(key) {
                    Some(c) => *c += passes,
                    None => {
                        table.insert(key.to_vec(), passes);
                    }
                }
            }
        }
        model.refresh();
        Ok(model)
    }

    /// Adds another model's counts, e.g. one fitted on a different shard.
    pub fn merge(&mut self, other: &NgramModel) -> Result<()> {
        if self.order != other.order || self.vocab_size != other.vocab_size {
            return Err(Error::Config("cannot merge n-gram models of different shape".into()));
        }
        for (mine, theirs) in self.ngrams.iter_mut().zip(&other.ngrams) {
            for (k, &c) in theirs {
                *mine.entry(k.clone()).or_insert(0) += c;
            }
        }
        self.refresh();
        Ok(())
    }

    fn refresh(&mut self) {
        let (vocab_size, alpha) = (self.vocab_size, self.alpha);
        self.contexts = self
            .ngrams
            .par_iter()
            .map(|table| {
                let mut grouped: HashMap<&[TokenId], Vec<u64>> = HashMap::new();
                for (k, &c) in table {
                    grouped.entry(&k[..k.len() - 1]).or_default().push(c);
                }
                grouped
                    .into_iter()
                    .map(|(ctx, mut counts)| {
                        // fixed summation order
                        counts.sort_unstable();
                        let stats = ContextStats {
                            total: counts.iter().sum(),
                            entropy: smoothed_entropy(&counts, vocab_size, alpha),
                        };
                        (ctx.to_vec(), stats)
                    })
                    .collect()
            })
            .collect();
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Count of `next` after `context`. The context may be shorter than `order - 1`.
    pub fn count(&self, context: &[TokenId], next: TokenId) -> u64 {
        let mut key = context.to_vec();
        key.push(next);
        self.ngrams
            .get(context.len())
            .and_then(|t| t.get(key.as_slice()))
            .copied()
            .unwrap_or(0)
    }

    pub fn context_total(&self, context: &[TokenId]) -> u64 {
        self.contexts
            .get(context.len())
            .and_then(|t| t.get(context))
            .map_or(0, |s| s.total)
    }

    /// All `(ngram, count)` entries for context length `l`, sorted.
    pub fn entries(&self, l: usize) -> Vec<(&[TokenId], u64)> {
        let mut out: Vec<_> = self.ngrams[l].iter().map(|(k, &c)| (k.as_slice(), c)).collect();
        out.sort_unstable();
        out
    }

    fn context_at<'a>(&self, ids: &'a [TokenId], t: usize) -> &'a [TokenId] {
        &ids[t - t.min(self.order - 1)..t]
    }

    /// Predictive entropy after `context`.
    pub fn entropy_after(&self, context: &[TokenId]) -> f64 {
        match self.contexts.get(context.len()).and_then(|t| t.get(context)) {
            Some(s) => s.entropy,
            None => smoothed_entropy(&[], self.vocab_size, self.alpha),
        }
    }

    pub fn surprisal(&self, context: &[TokenId], next: TokenId) -> f64 {
        smoothed_surprisal(
            self.count(context, next),
            self.context_total(context),
            self.vocab_size,
            self.alpha,
        )
    }

    fn check_stream(&self, stream: &TokenStream) -> Result<()> {
        if let Some(&bad) = stream.ids.iter().find(|&&id| id as usize >= self.vocab_size) {
            return Err(Error::UnknownToken {
                id: bad,
                size: self.vocab_size,
            });
        }
        Ok(())
    }

    pub fn entropy_trace(&self, stream: &TokenStream) -> Result<EntropyTrace> {
        self.check_stream(stream)?;
        let ids = &stream.ids;
        let values = (0..ids.len())
            .into_par_iter()
            .map(|t| self.entropy_after(self.context_at(ids, t)))
            .collect();
        Ok(EntropyTrace {
            kind: TraceKind::Entropy,
            values,
            vocab_hash: stream.vocab_hash,
        })
    }

    pub fn nll_trace(&self, stream: &TokenStream) -> Result<EntropyTrace> {
        self.check_stream(stream)?;
        let ids = &stream.ids;
        let values = (0..ids.len())
            .into_par_iter()
            .map(|t| self.surprisal(self.context_at(ids, t), ids[t]))
            .collect();
        Ok(EntropyTrace {
            kind: TraceKind::Nll,
            values,
            vocab_hash: stream.vocab_hash,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = NgramFile {
            order: self.order,
            alpha: self.alpha,
            vocab_size: self.vocab_size,
            tables: (0..self.order)
                .map(|l| self.entries(l).into_iter().map(|(k, c)| (k.to_vec(), c)).collect())
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NgramFile = serde_json::from_str(text)?;
        let mut model = Self::empty(file.vocab_size, file.order, file.alpha)?;
        if file.tables.len() != file.order {
            return Err(Error::Config("table count does not match order".into()));
        }
        for (l, table) in file.tables.into_iter().enumerate() {
            for (key, count) in table {
                if key.len() != l + 1 || key.iter().any(|&id| id as usize >= file.vocab_size) {
                    return Err(Error::Config(format!("malformed n-gram entry {key:?}")));
                }
                model.ngrams[l].insert(key, count);
            }
        }
        model.refresh();
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct NgramFile {
    order: usize,
    alpha: f64,
    vocab_size: usize,
    tables: Vec<Vec<(Vec<TokenId>, u64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DumpEncoding {
    #[default]
    #[serde(rename = "f32le")]
    F32Le,
    #[serde(rename = "text")]
    Text,
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpHeader {
    format: String,
    vocab_hash: VocabHash,
    stream_length: u64,
    unit: String,
    kind: TraceKind,
    encoding: DumpEncoding,
}

pub fn save_entropy_dump(trace: &EntropyTrace, path: impl AsRef<Path>, encoding: DumpEncoding) -> Result<()> {
    let path = path.as_ref();
    let header = DumpHeader {
        format: ENTROPY_FORMAT.into(),
        vocab_hash: trace.vocab_hash,
        stream_length: trace.len() as u64,
        unit: "bits".into(),
        kind: trace.kind,
        encoding,
    };
    let mut buf = serde_json::to_vec(&header)?;
    buf.push(b'\n');
    match encoding {
        DumpEncoding::F32Le => {
            for &v in &trace.values {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        DumpEncoding::Text => {
            for &v in &trace.values {
                buf.extend_from_slice(format!("{v}\n").as_bytes());
            }
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a dump without checking it against a stream.
pub fn read_entropy_dump(path: impl AsRef<Path>) -> Result<EntropyTrace> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut line = String::new();
    reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let header: DumpHeader = serde_json::from_str(line.trim_end()).map_err(|e| parse_err(1, e.to_string()))?;
    if header.format != ENTROPY_FORMAT {
        return Err(parse_err(1, format!("unexpected format `{}`", header.format)));
    }
    if header.unit != "bits" {
        return Err(parse_err(1, format!("unit must be bits, got `{}`", header.unit)));
    }
    let n = header.stream_length as usize;
    let values: Vec<f64> = match header.encoding {
        DumpEncoding::F32Le => {
            let mut payload = Vec::new();
            reader.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
            if payload.len() != n * 4 {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: payload.len() / 4,
                });
            }
            payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect()
        }
        DumpEncoding::Text => {
            let mut values = Vec::with_capacity(n);
            for (i, l) in reader.lines().enumerate() {
                let l = l.map_err(|e| Error::io(path, e))?;
                values.push(l.trim().parse().map_err(|e| parse_err(i + 2, format!("{e}")))?);
            }
            if values.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: values.len(),
                });
            }
            values
        }
    };
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(parse_err(
            i + 2,
            format!("value {v} is not a non-negative number of bits"),
        ));
    }
    Ok(EntropyTrace {
        kind: header.kind,
        values,
        vocab_hash: header.vocab_hash,
    })
}

/// Reads a dump and checks that it annotates `stream`.
pub fn load_entropy_dump(path: impl AsRef<Path>, stream: &TokenStream) -> Result<EntropyTrace> {
    let trace = read_entropy_dump(path)?;
    trace.check_aligned(stream)?;
    Ok(trace)
}
