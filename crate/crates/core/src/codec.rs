//! Greedy leftmost-longest encoding over a [`PrefixTrie`], with optional
//! chunked parallel encoding, and lossless decoding.
//!
//! Merges are unrestricted: a token surface may contain spaces and span
//! word boundaries.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stream::TokenStream;
use crate::trie::PrefixTrie;
use crate::vocab::{TokenId, VocabHash, Vocabulary};

/// What to do with characters that are not in the base alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownPolicy {
    #[default]
    Strict,
    /// Substitute this base character.
    Replace(char),
}

#[derive(Debug, Clone)]
pub struct Codec {
    trie: PrefixTrie,
    vocab_hash: VocabHash,
    policy: UnknownPolicy,
}

impl Codec {
    pub fn new(vocab: &Vocabulary) -> Self {
        Codec {
            trie: PrefixTrie::build(vocab),
            vocab_hash: vocab.hash(),
            policy: UnknownPolicy::Strict,
        }
    }

    pub fn with_policy(mut self, policy: UnknownPolicy) -> Result<Self> {
        if let UnknownPolicy::Replace(c) = policy {
            if !self.is_base_char(c) {
                return Err(Error::Config(format!(
                    "replacement character {c:?} is not in the base alphabet"
                )));
            }
        }
        self.policy = policy;
        Ok(self)
    }

    pub fn trie(&self) -> &PrefixTrie {
        &self.trie
    }

    pub fn vocab_hash(&self) -> VocabHash {
        self.vocab_hash
    }

    pub fn max_token_chars(&self) -> usize {
        self.trie.max_depth()
    }

    fn is_base_char(&self, c: char) -> bool {
        matches!(self.trie.longest_match(&[c]), Some((_, 1)))
    }

    /// Applies the unknown-character policy.
    fn prepare(&self, text: &str) -> Result<Vec<char>> {
        let mut chars: Vec<char> = text.chars().collect();
        for (position, c) in chars.iter_mut().enumerate() {
            if !self.is_base_char(*c) {
                match self.policy {
                    UnknownPolicy::Strict => {
                        return Err(Error::UnknownCharacter {
                            position,
                            character: *c,
                        })
                    }
                    UnknownPolicy::Replace(r) => *c = r,
                }
            }
        }
        Ok(chars)
    }

    /// Segments `chars` in isolation. Every character must be a base character.
    fn greedy(&self, chars: &[char]) -> Vec<(TokenId, usize)> {
        let max = self.trie.max_depth();
        let mut out = Vec::with_capacity(chars.len() / 2 + 1);
        let mut pos = 0;
        while pos < chars.len() {
            let window = &chars[pos..chars.len().min(pos + max)];
            let (id, len) = self
                .trie
                .longest_match(window)
                .expect("prepared text is covered by the base alphabet");
            out.push((id, len));
            pos += len;
        }
        out
    }

    pub fn encode(&self, text: &str) -> Result<TokenStream> {
        let chars = self.prepare(text)?;
        let mut stream = TokenStream::empty(self.vocab_hash);
        stream.text_len = chars.len();
        let mut pos = 0;
        for (id, len) in self.greedy(&chars) {
            stream.ids.push(id);
            stream.offsets.push(pos);
            pos += len;
        }
        Ok(stream)
    }

    /// Encodes fixed-size chunks in parallel, then repairs each chunk
    /// boundary so the result equals [`Codec::encode`] exactly.
    ///
    /// A chunk token starting at `p` is reused only when `p` is a boundary of
    /// the global segmentation and its match window `p..p + max_len` lies
    /// inside the chunk. Elsewhere the global greedy step is recomputed
    /// until the two segmentations share a boundary again. Usually that
    /// happens within `2 * (max_len - 1)` characters of the chunk edge, but
    /// greedy matching has no bounded resynchronisation distance, so the
    /// repair runs as far as needed.
    pub fn encode_batched(&self, text: &str, chunk_chars: usize) -> Result<TokenStream> {
        let max_len = self.trie.max_depth();
        if chunk_chars == 0 || chunk_chars < max_len {
            return Err(Error::ChunkTooSmall {
                chunk: chunk_chars,
                max_len,
            });
        }
        let chars = self.prepare(text)?;
        let n = chars.len();
        let chunks: Vec<Vec<(TokenId, usize)>> = chars.par_chunks(chunk_chars).map(|c| self.greedy(c)).collect();

        let mut stream = TokenStream::empty(self.vocab_hash);
        stream.text_len = n;
        stream.ids.reserve(chunks.iter().map(Vec::len).sum());
        stream.offsets.reserve(stream.ids.capacity());

        let mut pos = 0;
        for (k, chunk) in chunks.iter().enumerate() {
            let start = k * chunk_chars;
            let end = (start + chunk_chars).min(n);
            // chunk tokens starting before this saw their whole match window
            let trusted_until = if end == n { n } else { end + 1 - max_len };
            let mut p = start;
            let mut i = 0;
            while pos < end {
                while i < chunk.len() && p < pos {
                    p += chunk[i].1;
                    i += 1;
                }
                if i < chunk.len() && p == pos && p < trusted_until {
                    let (id, len) = chunk[i];
                    stream.ids.push(id);
                    stream.offsets.push(pos);
                    pos += len;
                    p += len;
                    i += 1;
                } else {
                    let window = &chars[pos..n.min(pos + max_len)];
                    let (id, len) = self
                        .trie
                        .longest_match(window)
                        .expect("prepared text is covered by the base alphabet");
                    stream.ids.push(id);
                    stream.offsets.push(pos);
                    pos += len;
                }
            }
        }
        Ok(stream)
    }
}

/// Concatenates token surfaces.
pub fn decode(stream: &TokenStream, vocab: &Vocabulary) -> Result<String> {
    decode_ids(&stream.ids, vocab)
}

pub fn decode_ids(ids: &[TokenId], vocab: &Vocabulary) -> Result<String> {
    let mut out = String::new();
    for &id in ids {
        let token = vocab.get(id).ok_or(Error::UnknownToken { id, size: vocab.len() })?;
        out.push_str(&token.surface);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge::MergeCandidate;

    fn grow(base: &str, merges: &[&[&str]]) -> Vocabulary {
        let mut v = Vocabulary::init_base(base).unwrap();
        for parts in merges {
            let ids: Vec<_> = parts.iter().map(|p| v.id_of(p).unwrap()).collect();
            let c = MergeCandidate {
                component_ids: ids,
                surface: parts.concat(),
                frequency: 1,
            };
            v = v.add(&[c], 1).unwrap();
        }
        v
    }

    /// Every segmentation of `text` into surfaces of `vocab`.
    fn all_segmentations(text: &[char], vocab: &Vocabulary) -> Vec<Vec<usize>> {
        if text.is_empty() {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for len in 1..=text.len() {
            let head: String = text[..len].iter().collect();
            if vocab.contains_surface(&head) {
                for mut rest in all_segmentations(&text[len..], vocab) {
                    rest.insert(0, len);
                    out.push(rest);
                }
            }
        }
        out
    }

    /// Greedy leftmost-longest is the segmentation whose length sequence is
    /// lexicographically largest.
    fn enumeration_oracle(text: &str, vocab: &Vocabulary) -> Vec<TokenId> {
        let chars: Vec<char> = text.chars().collect();
        let best = all_segmentations(&chars, vocab).into_iter().max().unwrap();
        let mut pos = 0;
        best.iter()
            .map(|&len| {
                let s: String = chars[pos..pos + len].iter().collect();
                pos += len;
                vocab.id_of(&s).unwrap()
            })
            .collect()
    }

    #[test]
    fn abc_with_ab() {
        let v = grow("abc", &[&["a", "b"]]);
        let s = Codec::new(&v).encode("abc").unwrap();
        let expected = enumeration_oracle("abc", &v);
        assert_eq!(s.ids, expected);
        assert_eq!(s.ids, [v.id_of("ab").unwrap(), v.id_of("c").unwrap()]);
        assert_eq!(s.offsets, [0, 2]);
    }

    #[test]
    fn abab_single_token() {
        let v = grow("ab", &[&["a", "b"], &["ab", "ab"]]);
        let s = Codec::new(&v).encode("abab").unwrap();
        assert_eq!(s.ids, enumeration_oracle("abab", &v));
        assert_eq!(s.ids, [v.id_of("abab").unwrap()]);
    }

    #[test]
    fn empty_text() {
        let v = grow("ab", &[]);
        let s = Codec::new(&v).encode("").unwrap();
        assert!(s.is_empty());
        assert_eq!(s.text_len, 0);
        assert_eq!(decode(&s, &v).unwrap(), "");
    }

    #[test]
    fn merges_cross_spaces() {
        let v = grow("a b", &[&["a", " "], &["a ", "b"]]);
        let s = Codec::new(&v).encode("a ba b").unwrap();
        assert_eq!(s.ids, [v.id_of("a b").unwrap(), v.id_of("a b").unwrap()]);
    }

    #[test]
    fn hello_world_round_trip() {
        let text = "Hello world";
        let v = grow(text, &[&["l", "l"], &["o", " "], &["o ", "w"]]);
        let codec = Codec::new(&v);
        assert_eq!(decode(&codec.encode(text).unwrap(), &v).unwrap(), text);
    }

    #[test]
    fn strict_policy_reports_position() {
        let v = grow("ab", &[]);
        let err = Codec::new(&v).encode("abzb").unwrap_err();
        assert!(matches!(
            err,
            Error::UnknownCharacter {
                position: 2,
                character: 'z'
            }
        ));
    }

    #[test]
    fn replace_policy() {
        let v = grow("ab", &[]);
        let codec = Codec::new(&v).with_policy(UnknownPolicy::Replace('a')).unwrap();
        let s = codec.encode("bzé").unwrap();
        assert_eq!(decode(&s, &v).unwrap(), "baa");
        assert!(Codec::new(&v).with_policy(UnknownPolicy::Replace('q')).is_err());
    }

    #[test]
    fn decode_out_of_range() {
        let v = grow("ab", &[]);
        assert!(matches!(
            decode_ids(&[0, 7], &v),
            Err(Error::UnknownToken { id: 7, .. })
        ));
    }

    #[test]
    fn batched_chunk_too_small() {
        let v = grow("ab", &[&["a", "b"], &["ab", "ab"]]);
        let err = Codec::new(&v).encode_batched("abab", 3).unwrap_err();
        assert_eq!(err.to_string(), "chunk smaller than longest token (3 < 4)");
    }

    #[test]
    fn batched_boundary_inside_token() {
        let v = grow("ab", &[&["a", "b"]]);
        let codec = Codec::new(&v);
        let text = "abababab";
        for chunk in 2..=9 {
            assert_eq!(codec.encode_batched(text, chunk).unwrap(), codec.encode(text).unwrap());
        }
    }

    #[test]
    fn batched_without_resync() {
        // "aa" greedy from odd and even starts never share a boundary
        let v = grow("ab", &[&["a", "a"]]);
        let codec = Codec::new(&v);
        let text = format!("b{}", "a".repeat(41));
        for chunk in 2..20 {
            assert_eq!(
                codec.encode_batched(&text, chunk).unwrap(),
                codec.encode(&text).unwrap()
            );
        }
    }
}
