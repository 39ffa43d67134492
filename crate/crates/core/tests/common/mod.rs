#![allow(dead_code)]

use std::collections::HashSet;

use dyntok::{Codec, MergeCandidate, TokenId, Vocabulary};
use rand::Rng;

pub const ASCII: &str = "abcdefgh ijklmnop.,\n";
pub const MIXED: &str = "abc déf ñ中文字 日本 🙂🚀 ☃ αβγ\n";

pub fn random_text<R: Rng>(rng: &mut R, alphabet: &str, len: usize) -> String {
    let chars: Vec<char> = alphabet.chars().collect();
    (0..len).map(|_| chars[rng.gen_range(0..chars.len())]).collect()
}

/// Text with repeated fragments so that random merges find reuse.
pub fn repetitive_text<R: Rng>(rng: &mut R, alphabet: &str, len: usize) -> String {
    let pieces: Vec<String> = (0..6)
        .map(|_| {
            let n = rng.gen_range(1..6);
            random_text(rng, alphabet, n)
        })
        .collect();
    let mut out = String::new();
    while out.chars().count() < len {
        if rng.gen_bool(0.2) {
            out.push_str(&random_text(rng, alphabet, 1));
        } else {
            out.push_str(&pieces[rng.gen_range(0..pieces.len())]);
        }
    }
    out.chars().take(len).collect()
}

/// Random merge candidates taken from windows of `text` encoded under `vocab`.
pub fn random_candidates<R: Rng>(rng: &mut R, vocab: &Vocabulary, text: &str, n: usize) -> Vec<MergeCandidate> {
    let stream = Codec::new(vocab).encode(text).unwrap();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    if stream.len() < 2 {
        return out;
    }
    for _ in 0..n {
        let len = rng.gen_range(2..=4.min(stream.len()));
        let start = rng.gen_range(0..=stream.len() - len);
        let ids: Vec<TokenId> = stream.ids[start..start + len].to_vec();
        let surface: String = ids.iter().map(|&i| vocab.get(i).unwrap().surface.as_str()).collect();
        if vocab.contains_surface(&surface) || !seen.insert(ids.clone()) {
            continue;
        }
        out.push(MergeCandidate {
            component_ids: ids,
            surface,
            frequency: rng.gen_range(1..20),
        });
    }
    out
}

/// A vocabulary over the characters of `text` grown by `steps` random expansions.
pub fn grown_vocab<R: Rng>(rng: &mut R, text: &str, steps: usize, max_size: usize) -> Vocabulary {
    let mut vocab = Vocabulary::init_base(text).unwrap();
    for _ in 0..steps {
        if vocab.len() >= max_size {
            break;
        }
        let cands = random_candidates(rng, &vocab, text, 12);
        let cap = rng.gen_range(1..=8).min(max_size - vocab.len());
        vocab = vocab.add(&cands, cap).unwrap();
    }
    vocab
}

/// Checks every structural vocabulary invariant independently of the library.
pub fn check_invariants(v: &Vocabulary) -> Result<(), String> {
    let tokens = v.tokens();
    let base = v.base_size();
    if base == 0 || base > tokens.len() {
        return Err(format!("bad base size {base}"));
    }
    let mut surfaces = HashSet::new();
    let mut last_tag = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t.id as usize != i {
            return Err(format!("token {i} has id {}", t.id));
        }
        if !surfaces.insert(t.surface.as_str()) {
            return Err(format!("duplicate surface {:?}", t.surface));
        }
        if t.iteration < last_tag {
            return Err(format!("tag decreases at {i}"));
        }
        last_tag = t.iteration;
        if i < base {
            let mut cs = t.surface.chars();
            let c = cs.next().ok_or("empty base surface")?;
            if cs.next().is_some() || !t.components.is_empty() || t.iteration != 0 {
                return Err(format!("bad base token {i}"));
            }
            if i > 0 && tokens[i - 1].surface.chars().next().unwrap() >= c {
                return Err(format!("base tokens unsorted at {i}"));
            }
        } else {
            if t.components.len() < 2 {
                return Err(format!("merged token {i} has {} components", t.components.len()));
            }
            let mut s = String::new();
            for &c in &t.components {
                if c >= t.id {
                    return Err(format!("token {i} depends on later id {c}"));
                }
                s.push_str(&tokens[c as usize].surface);
            }
            if s != t.surface {
                return Err(format!("token {i} surface mismatch"));
            }
        }
    }
    if v.stage() < last_tag {
        return Err("stage below largest tag".into());
    }
    Ok(())
}

/// Leftmost-longest segmentation by scanning every token at every position.
pub fn naive_encode(text: &str, vocab: &Vocabulary) -> Vec<TokenId> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let best = vocab
            .tokens()
            .iter()
            .filter(|t| rest.starts_with(t.surface.as_str()))
            .max_by_key(|t| t.surface.len())
            .expect("text covered by base alphabet");
        out.push(best.id);
        rest = &rest[best.surface.len()..];
    }
    out
}
