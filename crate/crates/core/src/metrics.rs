//! Bits-per-character aggregates, log-linear scaling fits and plot tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::entropy::{EntropyTrace, TraceKind};
use crate::error::{Error, Result};
use crate::stream::TokenStream;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct GroupStat {
    pub bpc: f64,
    pub token_count: u64,
    pub char_count: u64,
    /// Total surprisal in bits.
    pub bits: f64,
}

impl GroupStat {
    fn add(&mut self, bits: f64, chars: usize) {
        self.bits += bits;
        self.token_count += 1;
        self.char_count += chars as u64;
    }

    fn finish(&mut self) {
        self.bpc = if self.char_count == 0 {
            0.0
        } else {
            self.bits / self.char_count as f64
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpcReport {
    pub global_bpc: f64,
    /// Keyed by token surface length in characters.
    pub per_length: BTreeMap<usize, GroupStat>,
    /// Keyed by the iteration tag of the token.
    pub per_group: BTreeMap<u32, GroupStat>,
    pub n_chars: u64,
    pub n_tokens: u64,
}

impl BpcReport {
    /// BPC over tokens whose surface is at least `min_len` characters long.
    pub fn bpc_for_lengths_at_least(&self, min_len: usize) -> Option<f64> {
        let (bits, chars) = self
            .per_length
            .range(min_len..)
            .fold((0.0, 0u64), |(b, c), (_, s)| (b + s.bits, c + s.char_count));
        (chars > 0).then(|| bits / chars as f64)
    }
}

pub fn bpc_report(stream: &TokenStream, nll: &EntropyTrace, vocab: &Vocabulary) -> Result<BpcReport> {
    nll.require_kind(TraceKind::Nll)?;
    nll.check_aligned(stream)?;
    let mut per_length: BTreeMap<usize, GroupStat> = BTreeMap::new();
    let mut per_group: BTreeMap<u32, GroupStat> = BTreeMap::new();
    let mut total_bits = 0.0;
    for (t, (&id, &bits)) in stream.ids.iter().zip(&nll.values).enumerate() {
        let token = vocab.get(id).ok_or(Error::UnknownToken { id, size: vocab.len() })?;
        let chars = stream.token_chars(t);
        total_bits += bits;
        per_length.entry(chars).or_default().add(bits, chars);
        per_group.entry(token.iteration).or_default().add(bits, chars);
    }
    per_length.values_mut().for_each(GroupStat::finish);
    per_group.values_mut().for_each(GroupStat::finish);
    let n_chars = stream.text_len as u64;
    Ok(BpcReport {
        global_bpc: if n_chars == 0 { 0.0 } else { total_bits / n_chars as f64 },
        per_length,
        per_group,
        n_chars,
        n_tokens: stream.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of BPC against `log10(vocab_size)`.
pub fn fit_slope(points: &[(usize, f64)]) -> Result<SlopeFit> {
    let mut sizes: Vec<usize> = points.iter().map(|p| p.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(Error::Numeric(
            "slope fit needs at least two distinct vocabulary sizes".into(),
        ));
    }
    if let Some(&(v, _)) = points.iter().find(|p| p.0 == 0) {
        return Err(Error::Numeric(format!("vocabulary size {v} has no logarithm")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(SlopeFit { slope, intercept, r2 })
}

/// Percent improvement of `a` over `b` at each position: `100 (b - a) / b`.
pub fn improvement_table(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    a.iter()
        .zip(b)
        .map(|(&a, &b)| {
            if b == 0.0 {
                Err(Error::Numeric("baseline BPC is zero".into()))
            } else {
                Ok(100.0 * (b - a) / b)
            }
        })
        .collect()
}

/// A named series of `(vocab_size, bpc)` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(usize, f64)>,
}

/// One cell of the group-by-stage matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupCell {
    pub group: u32,
    pub stage: usize,
    pub bpc: f64,
}

/// Cells for every token group present at each stage's evaluation.
pub fn group_matrix(stage_reports: &[BpcReport]) -> Vec<GroupCell> {
    let mut cells: Vec<GroupCell> = stage_reports
        .iter()
        .enumerate()
        .flat_map(|(stage, r)| {
            r.per_group
                .iter()
                .filter(|(_, s)| s.char_count > 0)
                .map(move |(&group, s)| GroupCell {
                    group,
                    stage,
                    bpc: s.bpc,
                })
        })
        .collect();
    cells.sort_by_key(|c| (c.group, c.stage));
    cells
}

/// `vocab_size,bpc,series`, one row per point.
pub fn write_scaling_csv(series: &[Series], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["vocab_size", "bpc", "series"])?;
    for s in series {
        for &(size, bpc) in &s.points {
            w.write_record([size.to_string(), bpc.to_string(), s.name.clone()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// `length,bpc,count`, one row per token length.
pub fn write_length_csv(report: &BpcReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["length", "bpc", "count"])?;
    for (len, s) in &report.per_length {
        w.write_record([len.to_string(), s.bpc.to_string(), s.token_count.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// `group,stage,bpc`, one row per populated matrix cell.
pub fn write_group_csv(cells: &[GroupCell], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["group", "stage", "bpc"])?;
    for c in cells {
        w.write_record([c.group.to_string(), c.stage.to_string(), c.bpc.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge::MergeCandidate;
    use crate::vocab::VocabHash;

    #[test]
    fn one_token_length_four() {
        let v = Vocabulary::init_base("abcd").unwrap();
        let mut v2 = v.clone();
        for (s, ids) in [("ab", vec![0, 1]), ("abc", vec![4, 2]), ("abcd", vec![5, 3])] {
            v2 = v2
                .add(
                    &[MergeCandidate {
                        component_ids: ids,
                        surface: s.into(),
                        frequency: 1,
                    }],
                    1,
                )
                .unwrap();
        }
        let stream = TokenStream {
            ids: vec![6],
            offsets: vec![0],
            text_len: 4,
            vocab_hash: v2.hash(),
        };
        let nll = EntropyTrace {
            kind: TraceKind::Nll,
            values: vec![3.2],
            vocab_hash: v2.hash(),
        };
        let r = bpc_report(&stream, &nll, &v2).unwrap();
        assert!((r.per_length[&4].bpc - 0.8).abs() < 1e-12);
        assert_eq!(r.per_group[&3].token_count, 1);
        assert!((r.global_bpc - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rejects_entropy_trace() {
        let v = Vocabulary::init_base("a").unwrap();
        let stream = TokenStream {
            ids: vec![0],
            offsets: vec![0],
            text_len: 1,
            vocab_hash: v.hash(),
        };
        let tr = EntropyTrace {
            kind: TraceKind::Entropy,
            values: vec![1.0],
            vocab_hash: v.hash(),
        };
        assert!(matches!(
            bpc_report(&stream, &tr, &v),
            Err(Error::WrongTraceKind { .. })
        ));
        let tr = EntropyTrace {
            kind: TraceKind::Nll,
            values: vec![1.0],
            vocab_hash: VocabHash([9; 32]),
        };
        assert!(bpc_report(&stream, &tr, &v).is_err());
    }

    #[test]
    fn exact_line() {
        let pts: Vec<(usize, f64)> = [10usize, 100, 1000, 10_000]
            .iter()
            .map(|&v| (v, 2.0 - 0.1 * (v as f64).log10()))
            .collect();
        let fit = fit_slope(&pts).unwrap();
        assert!((fit.slope + 0.1).abs() < 1e-12);
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn slope_needs_two_sizes() {
        assert!(fit_slope(&[(92, 1.7), (92, 1.6)]).is_err());
        assert!(fit_slope(&[(92, 1.7)]).is_err());
    }

    #[test]
    fn improvement_examples() {
        let imp = improvement_table(&[1.4385, 1.3764], &[1.5103, 1.4637]).unwrap();
        assert_eq!(format!("{:.2}", imp[0]), "4.75");
        assert_eq!(format!("{:.2}", imp[1]), "5.96");
        assert_eq!(improvement_table(&[1.2, 0.7], &[1.2, 0.7]).unwrap(), [0.0, 0.0]);
        assert!(improvement_table(&[1.0], &[0.0]).is_err());
        assert!(improvement_table(&[1.0], &[]).is_err());
    }

    #[test]
    fn csv_row_counts() {
        let dir = tempfile::tempdir().unwrap();
        let series: Vec<Series> = ["a", "b"]
            .iter()
            .map(|n| Series {
                name: n.to_string(),
                points: (1..=6).map(|i| (i * 100, 1.0 / i as f64)).collect(),
            })
            .collect();
        let p = dir.path().join("scaling.csv");
        write_scaling_csv(&series, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 13);
        assert!(text.starts_with("vocab_size,bpc,series\n"));

        let mut per_length = BTreeMap::new();
        for l in [1usize, 2, 4] {
            per_length.insert(l, GroupStat::default());
        }
        let r = BpcReport {
            global_bpc: 0.0,
            per_length,
            per_group: BTreeMap::new(),
            n_chars: 0,
            n_tokens: 0,
        };
        let p = dir.path().join("len.csv");
        write_length_csv(&r, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 4);
    }

    #[test]
    fn lower_triangle_matrix() {
        let reports: Vec<BpcReport> = (0..6u32)
            .map(|stage| {
                let per_group = (0..=stage)
                    .map(|g| {
                        (
                            g,
                            GroupStat {
                                bpc: 1.0,
                                token_count: 1,
                                char_count: 1,
                                bits: 1.0,
                            },
                        )
                    })
                    .collect();
                BpcReport {
                    global_bpc: 1.0,
                    per_length: BTreeMap::new(),
                    per_group,
                    n_chars: 0,
                    n_tokens: 0,
                }
            })
            .collect();
        let cells = group_matrix(&reports);
        assert_eq!(cells.len(), 21);
        assert!(cells.iter().all(|c| c.group as usize <= c.stage));
    }
}
