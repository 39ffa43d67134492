//! Token table with merge-dependency structure and curriculum iteration tags.
//!
//! A [`Vocabulary`] always starts with the base characters of the corpus,
//! sorted by code point. Every later token is a merge of strictly earlier
//! tokens, so any prefix of the table is itself a valid vocabulary and
//! reduction is a prefix slice.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::merge::MergeCandidate;

pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Token {
    pub id: TokenId,
    /// Full character expansion.
    pub surface: String,
    /// Ids this token merges, in order. Empty for base characters.
    pub components: Vec<TokenId>,
    /// Curriculum stage that introduced the token.
    pub iteration: u32,
}

impl Token {
    pub fn is_base(&self) -> bool {
        self.components.is_empty()
    }

    pub fn char_len(&self) -> usize {
        self.surface.chars().count()
    }
}

/// SHA-256 of a vocabulary's canonical interchange serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VocabHash(pub [u8; 32]);

impl fmt::Display for VocabHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl FromStr for VocabHash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| Error::Numeric(format!("bad vocabulary hash `{s}`: {e}")))?;
        Ok(VocabHash(out))
    }
}

impl Serialize for VocabHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VocabHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered token table; position equals id.
///
/// Immutable once built. `add` and `reduce` return new values.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    base_size: usize,
    stage: u32,
    by_surface: HashMap<String, TokenId>,
    hash: VocabHash,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens && self.base_size == other.base_size && self.stage == other.stage
    }
}

impl Eq for Vocabulary {}

/// An invariant violation found by [`Vocabulary::from_tokens`], located by table index.
#[derive(Debug)]
struct Violation {
    index: usize,
    message: String,
}

fn violation(index: usize, message: impl Into<String>) -> Violation {
    Violation {
        index,
        message: message.into(),
    }
}

impl Vocabulary {
    /// One token per distinct character of `corpus`, sorted by code point.
    pub fn init_base(corpus: &str) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let alphabet: BTreeSet<char> = corpus.chars().collect();
        Self::from_alphabet(alphabet)
    }

    pub fn from_alphabet(alphabet: impl IntoIterator<Item = char>) -> Result<Self> {
        let alphabet: BTreeSet<char> = alphabet.into_iter().collect();
        if alphabet.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let tokens = alphabet
            .into_iter()
            .enumerate()
            .map(|(i, c)| Token {
                id: i as TokenId,
                surface: c.to_string(),
                components: Vec::new(),
                iteration: 0,
            })
            .collect();
        Self::from_tokens(tokens, 0)
    }

    /// Builds a vocabulary from a raw token table, checking every invariant.
    pub fn from_tokens(tokens: Vec<Token>, stage: u32) -> Result<Self> {
        Self::build(tokens, stage).map_err(|v| Error::InvalidVocabulary(format!("token {}: {}", v.index, v.message)))
    }

    fn build(tokens: Vec<Token>, stage: u32) -> std::result::Result<Self, Violation> {
        if tokens.is_empty() {
            return Err(violation(0, "vocabulary has no tokens"));
        }
        let base_size = tokens.iter().take_while(|t| t.is_base()).count();
        if base_size == 0 {
            return Err(violation(0, "vocabulary has no base characters"));
        }
        let mut by_surface = HashMap::with_capacity(tokens.len());
        let mut prev_iteration = 0;
        for (index, token) in tokens.iter().enumerate() {
            if token.id as usize != index {
                return Err(violation(index, format!("id {} does not match position", token.id)));
            }
            if token.iteration < prev_iteration {
                return Err(violation(index, "iteration tags decrease"));
            }
            prev_iteration = token.iteration;
            if index < base_size {
                if token.surface.chars().count() != 1 {
                    return Err(violation(index, "base token must be a single character"));
                }
                if token.iteration != 0 {
                    return Err(violation(index, "base token must have iteration 0"));
                }
                if index > 0 && tokens[index - 1].surface >= token.surface {
                    return Err(violation(index, "base tokens must be sorted by code point"));
                }
            } else {
                if token.is_base() {
                    return Err(violation(index, "base token after merged tokens"));
                }
                if token.components.len() < 2 {
                    return Err(violation(index, "merged token needs at least two components"));
                }
                let mut expansion = String::new();
                for &c in &token.components {
                    if c >= token.id {
                        return Err(violation(
                            index,
                            format!("component id {c} is not smaller than its own id"),
                        ));
                    }
                    expansion.push_str(&tokens[c as usize].surface);
                }
                if expansion != token.surface {
                    return Err(violation(
                        index,
                        format!("surface {:?} is not the concatenation of its components", token.surface),
                    ));
                }
            }
            if by_surface.insert(token.surface.clone(), token.id).is_some() {
                return Err(violation(index, format!("duplicate surface {:?}", token.surface)));
            }
        }
        if stage < prev_iteration {
            return Err(violation(
                tokens.len() - 1,
                format!("stage {stage} is below the largest iteration tag {prev_iteration}"),
            ));
        }
        let hash = VocabHash(Sha256::digest(serialize_tokens(&tokens)).into());
        Ok(Vocabulary {
            tokens,
            base_size,
            stage,
            by_surface,
            hash,
        })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn base_size(&self) -> usize {
        self.base_size
    }

    pub fn stage(&self) -> u32 {
        self.stage
    }

    pub fn hash(&self) -> VocabHash {
        self.hash
    }

    pub fn get(&self, id: TokenId) -> Option<&Token> {
        self.tokens.get(id as usize)
    }

    pub fn id_of(&self, surface: &str) -> Option<TokenId> {
        self.by_surface.get(surface).copied()
    }

    pub fn contains_surface(&self, surface: &str) -> bool {
        self.by_surface.contains_key(surface)
    }

    pub fn max_token_chars(&self) -> usize {
        self.tokens.iter().map(Token::char_len).max().unwrap_or(0)
    }

    /// Base characters, in id order.
    pub fn alphabet(&self) -> impl Iterator<Item = char> + '_ {
        self.tokens[..self.base_size]
            .iter()
            .filter_map(|t| t.surface.chars().next())
    }

    /// Appends up to `cap` candidates as new tokens tagged `stage + 1`.
    ///
    /// Candidates with the same surface collapse to the most frequent one.
    /// The survivors are ranked by frequency (descending), then surface
    /// length in characters, then surface, and the first `cap` are kept.
    pub fn add(&self, candidates: &[MergeCandidate], cap: usize) -> Result<Vocabulary> {
        if cap == 0 {
            return Err(Error::Config("growth cap must be positive".into()));
        }
        for cand in candidates {
            self.check_candidate(cand)?;
        }
        let mut ranked: Vec<&MergeCandidate> = candidates.iter().collect();
        ranked.sort_by(|a, b| selection_order(a, b).then_with(|| a.component_ids.cmp(&b.component_ids)));
        let mut seen = BTreeSet::new();
        ranked.retain(|c| seen.insert(c.surface.as_str()));

        let next_stage = self.stage + 1;
        let mut tokens = self.tokens.clone();
        for cand in ranked.into_iter().take(cap) {
            tokens.push(Token {
                id: tokens.len() as TokenId,
                surface: cand.surface.clone(),
                components: cand.component_ids.clone(),
                iteration: next_stage,
            });
        }
        Self::from_tokens(tokens, next_stage)
    }

    fn check_candidate(&self, cand: &MergeCandidate) -> Result<()> {
        let invalid = |reason: String| Error::InvalidCandidate {
            surface: cand.surface.clone(),
            reason,
        };
        if cand.component_ids.len() < 2 {
            return Err(invalid("fewer than two components".into()));
        }
        let mut expansion = String::new();
        for &id in &cand.component_ids {
            let token = self
                .get(id)
                .ok_or_else(|| invalid(format!("unknown component id {id}")))?;
            expansion.push_str(&token.surface);
        }
        if expansion != cand.surface {
            return Err(invalid("surface does not match components".into()));
        }
        if self.contains_surface(&cand.surface) {
            return Err(invalid("surface already in vocabulary".into()));
        }
        Ok(())
    }

    /// Keeps the prefix `tokens[0..n_target)`.
    pub fn reduce(&self, n_target: usize) -> Result<Vocabulary> {
        if n_target < self.base_size {
            return Err(Error::ReduceBelowBase {
                target: n_target,
                base: self.base_size,
            });
        }
        if n_target > self.len() {
            return Err(Error::ReduceAboveSize {
                target: n_target,
                size: self.len(),
            });
        }
        Self::from_tokens(self.tokens[..n_target].to_vec(), self.stage + 1)
    }

    /// Canonical JSON Lines serialization.
    pub fn to_jsonl(&self) -> String {
        serialize_tokens(&self.tokens)
    }

    /// Parses the JSON Lines interchange format. The stage is restored as the
    /// largest iteration tag.
    pub fn from_jsonl(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                return Err(parse_err(line_no, "blank line".into()));
            }
            let token: Token = serde_json::from_str(line).map_err(|e| parse_err(line_no, e.to_string()))?;
            if token.id as usize != i {
                return Err(parse_err(
                    line_no,
                    format!("id {} out of sequence (expected {i})", token.id),
                ));
            }
            tokens.push(token);
        }
        let stage = tokens.iter().map(|t| t.iteration).max().unwrap_or(0);
        Self::build(tokens, stage).map_err(|v| parse_err(v.index + 1, v.message))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, path)
    }
}

/// Frequency descending, then shorter surface, then lexicographic surface.
pub fn selection_order(a: &MergeCandidate, b: &MergeCandidate) -> std::cmp::Ordering {
    b.frequency
        .cmp(&a.frequency)
        .then_with(|| a.surface.chars().count().cmp(&b.surface.chars().count()))
        .then_with(|| a.surface.cmp(&b.surface))
}

fn serialize_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for t in tokens {
        out.push_str(&serde_json::to_string(t).expect("token serialization is infallible"));
        out.push('\n');
    }
    out
}
