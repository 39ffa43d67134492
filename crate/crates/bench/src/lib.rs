//! Shared fixtures for the criterion benches.

use dyntok::{synthetic_corpus, Codec, Corpus, Curriculum, CurriculumConfig, SynthConfig, TokenStream, Vocabulary};

pub fn corpus(chars: usize) -> String {
    synthetic_corpus(&SynthConfig {
        chars,
        seed: 11,
        ..SynthConfig::default()
    })
}

/// A vocabulary after one expansion of the built-in curriculum on `text`.
pub fn grown_vocab(text: &str) -> Vocabulary {
    let cfg = CurriculumConfig {
        iterations: 1,
        ..CurriculumConfig::default()
    };
    Curriculum::new(cfg, Corpus::split(text, 0.05).unwrap())
        .unwrap()
        .run()
        .unwrap()
        .vocab
}

pub fn encoded(text: &str, vocab: &Vocabulary) -> TokenStream {
    Codec::new(vocab).encode(text).unwrap()
}
