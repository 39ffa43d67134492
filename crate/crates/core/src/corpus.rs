//! Corpus loading, train/validation split and a synthetic phrase-bank corpus.

use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub train: String,
    pub validation: String,
}

impl Corpus {
    /// Splits off the final `fraction` of `text`, by character count, as validation.
    pub fn split(text: &str, fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!("validation fraction {fraction} outside [0, 1)")));
        }
        let n = text.chars().count();
        if n == 0 {
            return Err(Error::EmptyCorpus);
        }
        let n_val = (n as f64 * fraction).round() as usize;
        let cut = text.char_indices().nth(n - n_val).map_or(text.len(), |(b, _)| b);
        Ok(Corpus {
            train: text[..cut].to_string(),
            validation: text[cut..].to_string(),
        })
    }

    pub fn load(train: &Path, validation: Option<&Path>, fraction: f64) -> Result<Self> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let text = read(train)?;
        match validation {
            Some(v) => Ok(Corpus {
                train: text,
                validation: read(v)?,
            }),
            None => Self::split(&text, fraction),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub chars: usize,
    pub words: usize,
    pub phrases: usize,
    pub sentences: usize,
    /// Probability that a character is replaced by a random alphabet character.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            chars: 1_000_000,
            words: 400,
            phrases: 200,
            sentences: 100,
            noise: 0.003,
            seed: 0,
        }
    }
}

const LETTERS: &str = "abcdefghijklmnopqrstuvwxyz";
const NOISE_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,;:'!?-";

/// Three nested banks: words of random letters, phrases of 2 to 6 words and
/// sentences of 2 to 4 phrases, each drawn with Zipf weights. The output is
/// a stream of sentences with character-level substitution noise.
pub fn synthetic_corpus(cfg: &SynthConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let letters: Vec<char> = LETTERS.chars().collect();
    let noise: Vec<char> = NOISE_ALPHABET.chars().collect();

    let words: Vec<String> = (0..cfg.words.max(1))
        .map(|_| {
            let len = rng.gen_range(2..=8);
            (0..len).map(|_| letters[rng.gen_range(0..letters.len())]).collect()
        })
        .collect();
    let word_weights = WeightedIndex::new((1..=words.len()).map(|r| 1.0 / r as f64)).unwrap();
    let phrases: Vec<String> = (0..cfg.phrases.max(1))
        .map(|_| {
            let n = rng.gen_range(2..=6);
            let mut p = (0..n)
                .map(|_| words[word_weights.sample(&mut rng)].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            match rng.gen_range(0..4) {
                0 => p.push('.'),
                1 => p.push(','),
                _ => {}
            }
            p
        })
        .collect();
    let phrase_weights = WeightedIndex::new((1..=phrases.len()).map(|r| 1.0 / r as f64)).unwrap();
    let sentences: Vec<String> = (0..cfg.sentences.max(1))
        .map(|_| {
            let n = rng.gen_range(2..=4);
            (0..n)
                .map(|_| phrases[phrase_weights.sample(&mut rng)].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let sentence_weights = WeightedIndex::new((1..=sentences.len()).map(|r| 1.0 / (r as f64).sqrt())).unwrap();

    let mut out = String::with_capacity(cfg.chars + 64);
    let mut count = 0;
    while count < cfg.chars {
        let sentence = &sentences[sentence_weights.sample(&mut rng)];
        for c in sentence
            .chars()
            .chain(std::iter::once(if rng.gen_bool(0.1) { '\n' } else { ' ' }))
        {
            if count == cfg.chars {
                break;
            }
            let c = if rng.gen_bool(cfg.noise) {
                noise[rng.gen_range(0..noise.len())]
            } else {
                c
            };
            out.push(c);
            count += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_by_chars() {
        let c = Corpus::split("aébcdefghij", 0.2).unwrap();
        assert_eq!(c.validation, "ij");
        assert_eq!(c.train, "aébcdefgh");
        let c = Corpus::split("abc", 0.0).unwrap();
        assert_eq!(c.validation, "");
        assert!(Corpus::split("", 0.1).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_sized() {
        let cfg = SynthConfig {
            chars: 5000,
            seed: 7,
            ..SynthConfig::default()
        };
        let a = synthetic_corpus(&cfg);
        assert_eq!(a.chars().count(), 5000);
        assert_eq!(a, synthetic_corpus(&cfg));
        let b = synthetic_corpus(&SynthConfig { seed: 8, ..cfg });
        assert_ne!(a, b);
    }
}
