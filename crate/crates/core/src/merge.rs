//! Mergeability predicate and candidate extraction.
//!
//! A span of tokens is mergeable when every position after the first has
//! entropy strictly below its predecessor and strictly below `epsilon`.
//! Candidates are the maximal such spans, aggregated over the corpus by
//! surface and ranked by frequency.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::entropy::{EntropyTrace, TraceKind};
use crate::error::{Error, Result};
use crate::stream::TokenStream;
use crate::vocab::{selection_order, TokenId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeConfig {
    /// Entropy threshold in bits.
    pub epsilon: f64,
    /// Maximum number of tokens added per iteration.
    pub growth_cap: usize,
    pub max_span_tokens: usize,
    pub min_frequency: u64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            epsilon: 0.3,
            growth_cap: 3000,
            max_span_tokens: 8,
            min_frequency: 2,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.growth_cap < 1 {
            return Err(Error::Config("growth cap must be at least 1".into()));
        }
        if self.max_span_tokens < 2 {
            return Err(Error::Config("max span must be at least 2 tokens".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeCandidate {
    #[serde(rename = "components")]
    pub component_ids: Vec<TokenId>,
    pub surface: String,
    pub frequency: u64,
}

/// `true` iff each value after the first is below both its predecessor and `epsilon`.
pub fn is_mergeable(entropies: &[f64], epsilon: f64) -> Result<bool> {
    if entropies.len() < 2 {
        return Err(Error::SpanTooShort(entropies.len()));
    }
    Ok(entropies.windows(2).all(|w| w[1] < w[0] && w[1] < epsilon))
}

/// Maximal mergeable spans as half-open position ranges, left to right.
///
/// From each start the span is extended while the predicate holds (up to
/// `max_span_tokens`); the next start is the position after the span.
pub fn maximal_spans(values: &[f64], cfg: &MergeConfig) -> Vec<(usize, usize)> {
    let n = values.len();
    let mut spans = Vec::new();
    let mut i = 0;
    while i + 1 < n {
        let mut j = i;
        while j + 1 < n && j + 2 - i <= cfg.max_span_tokens && values[j + 1] < values[j] && values[j + 1] < cfg.epsilon
        {
            j += 1;
        }
        if j > i {
            spans.push((i, j + 1));
            i = j + 1;
        } else {
            i += 1;
        }
    }
    spans
}

fn check_inputs(stream: &TokenStream, trace: &EntropyTrace, cfg: &MergeConfig) -> Result<()> {
    cfg.validate()?;
    trace.require_kind(TraceKind::Entropy)?;
    trace
        .check_aligned(stream)
        .map_err(|e| Error::Misaligned(e.to_string()))
}

fn surface_of(ids: &[TokenId], vocab: &Vocabulary) -> Result<String> {
    let mut s = String::new();
    for &id in ids {
        let t = vocab.get(id).ok_or(Error::UnknownToken { id, size: vocab.len() })?;
        s.push_str(&t.surface);
    }
    Ok(s)
}

/// Ranked merge candidates from one (stream, entropy trace) pair.
///
/// Identical id-spans are counted together. Different id-spans with the same
/// surface collapse into one candidate carrying the summed frequency and the
/// components of the most frequent variant. Spans below `min_frequency` and
/// surfaces already in `vocab` are dropped.
pub fn find_candidates(
    stream: &TokenStream,
    trace: &EntropyTrace,
    vocab: &Vocabulary,
    cfg: &MergeConfig,
) -> Result<Vec<MergeCandidate>> {
    check_inputs(stream, trace, cfg)?;
    let mut span_counts: HashMap<&[TokenId], u64> = HashMap::new();
    for (a, b) in maximal_spans(&trace.values, cfg) {
        *span_counts.entry(&stream.ids[a..b]).or_insert(0) += 1;
    }

    struct Agg<'a> {
        frequency: u64,
        best: &'a [TokenId],
        best_count: u64,
    }
    let mut by_surface: HashMap<String, Agg> = HashMap::new();
    for (span, count) in span_counts {
        let surface = surface_of(span, vocab)?;
        let agg = by_surface.entry(surface).or_insert(Agg {
            frequency: 0,
            best: span,
            best_count: 0,
        });
        agg.frequency += count;
        if count > agg.best_count || (count == agg.best_count && span < agg.best) {
            agg.best = span;
            agg.best_count = count;
        }
    }

    let mut out: Vec<MergeCandidate> = by_surface
        .into_iter()
        .filter(|(surface, agg)| agg.frequency >= cfg.min_frequency && !vocab.contains_surface(surface))
        .map(|(surface, agg)| MergeCandidate {
            component_ids: agg.best.to_vec(),
            surface,
            frequency: agg.frequency,
        })
        .collect();
    out.sort_by(selection_order);
    Ok(out)
}

/// Reference implementation of [`find_candidates`] that re-checks every
/// window with [`is_mergeable`] directly. Output is sorted by surface.
pub fn verify_candidates_bruteforce(
    stream: &TokenStream,
    trace: &EntropyTrace,
    vocab: &Vocabulary,
    cfg: &MergeConfig,
) -> Result<Vec<MergeCandidate>> {
    check_inputs(stream, trace, cfg)?;
    let h = &trace.values;
    let n = h.len();
    let mut variants: BTreeMap<String, BTreeMap<Vec<TokenId>, u64>> = BTreeMap::new();
    let mut start = 0;
    while start < n {
        let mut end = None;
        for len in 2..=cfg.max_span_tokens.min(n - start) {
            if is_mergeable(&h[start..start + len], cfg.epsilon)? {
                end = Some(start + len);
            } else {
                break;
            }
        }
        match end {
            Some(end) => {
                let ids = stream.ids[start..end].to_vec();
                let surface = surface_of(&ids, vocab)?;
                *variants.entry(surface).or_default().entry(ids).or_insert(0) += 1;
                start = end;
            }
            None => start += 1,
        }
    }
    let mut out = Vec::new();
    for (surface, spans) in variants {
        let frequency: u64 = spans.values().sum();
        if frequency < cfg.min_frequency || vocab.contains_surface(&surface) {
            continue;
        }
        let top = spans.values().copied().max().unwrap_or(0);
        let (ids, _) = spans.into_iter().find(|(_, c)| *c == top).unwrap();
        out.push(MergeCandidate {
            component_ids: ids,
            surface,
            frequency,
        });
    }
    Ok(out)
}

pub fn write_candidates(candidates: &[MergeCandidate], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for c in candidates {
        serde_json::to_writer(&mut buf, c)?;
        buf.write_all(b"\n").expect("write to Vec");
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_candidates(path: impl AsRef<Path>) -> Result<Vec<MergeCandidate>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicate_examples() {
        assert!(is_mergeable(&[2.0, 0.25, 0.10], 0.3).unwrap());
        assert!(!is_mergeable(&[2.0, 0.40, 0.20], 0.3).unwrap());
        assert!(!is_mergeable(&[2.0, 0.10, 0.20], 0.3).unwrap());
        assert!(matches!(is_mergeable(&[0.1], 0.3), Err(Error::SpanTooShort(1))));
    }

    #[test]
    fn strict_inequalities() {
        assert!(!is_mergeable(&[1.0, 0.3], 0.3).unwrap());
        assert!(!is_mergeable(&[0.2, 0.2], 0.3).unwrap());
        // first value is unconstrained
        assert!(is_mergeable(&[0.01, 0.005], 0.3).unwrap());
    }

    #[test]
    fn span_at_positions_five_to_seven() {
        let mut h = vec![3.0; 10];
        h[5] = 1.9;
        h[6] = 0.2;
        h[7] = 0.1;
        assert_eq!(maximal_spans(&h, &MergeConfig::default()), [(5, 8)]);
    }

    #[test]
    fn no_spans_above_threshold() {
        let h = [1.0, 0.9, 0.8, 0.7, 0.6];
        assert!(maximal_spans(&h, &MergeConfig::default()).is_empty());
    }

    #[test]
    fn span_length_cap_restarts_after_span() {
        let h = [1.0, 0.29, 0.28, 0.27, 0.26, 0.25];
        let cfg = MergeConfig {
            max_span_tokens: 3,
            ..MergeConfig::default()
        };
        assert_eq!(maximal_spans(&h, &cfg), [(0, 3), (3, 6)]);
    }

    #[test]
    fn single_position() {
        assert!(maximal_spans(&[0.0], &MergeConfig::default()).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(MergeConfig::default().validate().is_ok());
        let bad = MergeConfig {
            max_span_tokens: 1,
            ..MergeConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = MergeConfig {
            epsilon: 0.0,
            ..MergeConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
