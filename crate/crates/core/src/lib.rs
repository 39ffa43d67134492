//! Dynamic tokenization driven by model entropy.
//!
//! The engine grows a token vocabulary by merging spans a language model
//! already predicts well, re-encodes text under the grown vocabulary, and
//! measures bits per character along the way. A smoothed n-gram model is
//! built in so complete curriculum runs need no neural stack; external
//! models plug in through entropy dump files.

pub mod codec;
pub mod corpus;
pub mod curriculum;
pub mod entropy;
pub mod error;
pub mod merge;
pub mod metrics;
pub mod stream;
pub mod trie;
pub mod vocab;

pub use codec::{decode, Codec, UnknownPolicy};
pub use corpus::{synthetic_corpus, Corpus, SynthConfig};
pub use curriculum::{
    BaselineRecord, Curriculum, CurriculumConfig, CurriculumState, EntropySource, Phase, StageRecord,
};
pub use entropy::{EntropyTrace, NgramModel, TraceKind};
pub use error::{Error, Result};
pub use merge::{find_candidates, is_mergeable, MergeCandidate, MergeConfig};
pub use metrics::{bpc_report, fit_slope, improvement_table, BpcReport, SlopeFit};
pub use stream::TokenStream;
pub use trie::PrefixTrie;
pub use vocab::{Token, TokenId, VocabHash, Vocabulary};
