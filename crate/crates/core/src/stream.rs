//! Encoded token streams and their interchange file.
//!
//! A stream file is one JSON header line followed by the payload:
//!
//! ```text
//! {"format":"dyntok-stream","vocab_hash":"…","text_length":N,"stream_length":n,"encoding":"binary"}
//! ```
//!
//! With `"encoding":"binary"` the payload is `n` records of a little-endian
//! `u32` token id and a little-endian `u64` character offset. With
//! `"encoding":"text"` it is `n` lines of `id offset`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{TokenId, VocabHash, Vocabulary};

pub const STREAM_FORMAT: &str = "dyntok-stream";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub ids: Vec<TokenId>,
    /// Character start of each token in the source text.
    pub offsets: Vec<usize>,
    /// Source length in characters.
    pub text_len: usize,
    pub vocab_hash: VocabHash,
}

impl TokenStream {
    pub fn empty(vocab_hash: VocabHash) -> Self {
        TokenStream {
            ids: Vec::new(),
            offsets: Vec::new(),
            text_len: 0,
            vocab_hash,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Character length of the token at position `t`.
    pub fn token_chars(&self, t: usize) -> usize {
        let end = self.offsets.get(t + 1).copied().unwrap_or(self.text_len);
        end - self.offsets[t]
    }

    /// Checks that the stream belongs to `vocab` and that offsets tile the text.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.vocab_hash != vocab.hash() {
            return Err(Error::HashMismatch {
                expected: vocab.hash().to_string(),
                found: self.vocab_hash.to_string(),
            });
        }
        if self.ids.len() != self.offsets.len() {
            return Err(Error::Misaligned(format!(
                "{} ids but {} offsets",
                self.ids.len(),
                self.offsets.len()
            )));
        }
        let mut pos = 0usize;
        for (t, (&id, &off)) in self.ids.iter().zip(&self.offsets).enumerate() {
            let token = vocab.get(id).ok_or(Error::UnknownToken { id, size: vocab.len() })?;
            if off != pos {
                return Err(Error::Misaligned(format!("position {t}: offset {off}, expected {pos}")));
            }
            pos += token.char_len();
        }
        if pos != self.text_len {
            return Err(Error::Misaligned(format!(
                "tokens cover {pos} characters, header says {}",
                self.text_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StreamEncoding {
    #[default]
    Binary,
    Text,
}

#[derive(Debug, Serialize, Deserialize)]
struct StreamHeader {
    format: String,
    vocab_hash: VocabHash,
    text_length: u64,
    stream_length: u64,
    encoding: StreamEncoding,
}

pub fn write_stream(stream: &TokenStream, path: impl AsRef<Path>, encoding: StreamEncoding) -> Result<()> {
    let path = path.as_ref();
    let header = StreamHeader {
        format: STREAM_FORMAT.into(),
        vocab_hash: stream.vocab_hash,
        text_length: stream.text_len as u64,
        stream_length: stream.len() as u64,
        encoding,
    };
    let mut buf = serde_json::to_vec(&header)?;
    buf.push(b'\n');
    match encoding {
        StreamEncoding::Binary => {
            buf.reserve(stream.len() * 12);
            for (&id, &off) in stream.ids.iter().zip(&stream.offsets) {
                buf.extend_from_slice(&id.to_le_bytes());
                buf.extend_from_slice(&(off as u64).to_le_bytes());
            }
        }
        StreamEncoding::Text => {
            for (&id, &off) in stream.ids.iter().zip(&stream.offsets) {
                writeln!(buf, "{id} {off}").expect("write to Vec");
            }
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<TokenStream> {
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
    let header: StreamHeader = serde_json::from_str(line.trim_end()).map_err(|e| parse_err(1, e.to_string()))?;
    if header.format != STREAM_FORMAT {
        return Err(parse_err(1, format!("unexpected format `{}`", header.format)));
    }
    let n = header.stream_length as usize;
    let mut ids = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    match header.encoding {
        StreamEncoding::Binary => {
            let mut payload = Vec::new();
            reader.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
            if payload.len() != n * 12 {
                return Err(Error::LengthMismatch {
                    expected: n * 12,
                    found: payload.len(),
                });
            }
            for rec in payload.chunks_exact(12) {
                ids.push(TokenId::from_le_bytes(rec[..4].try_into().unwrap()));
                offsets.push(u64::from_le_bytes(rec[4..].try_into().unwrap()) as usize);
            }
        }
        StreamEncoding::Text => {
            for (i, l) in reader.lines().enumerate() {
                let l = l.map_err(|e| Error::io(path, e))?;
                let line_no = i + 2;
                let mut parts = l.split_whitespace();
                let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(parse_err(line_no, "expected `id offset`".into()));
                };
                ids.push(a.parse().map_err(|e| parse_err(line_no, format!("{e}")))?);
                offsets.push(b.parse().map_err(|e| parse_err(line_no, format!("{e}")))?);
            }
            if ids.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: ids.len(),
                });
            }
        }
    }
    Ok(TokenStream {
        ids,
        offsets,
        text_len: header.text_length as usize,
        vocab_hash: header.vocab_hash,
    })
}
