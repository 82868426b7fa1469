//! Constrained decoding engine and evaluation harness for generative
//! recommendation.
//!
//! Items are generated token by token inside a catalog trie. Besides the
//! usual beam search with length normalization, the decoder supports a
//! debiased mode that drops length normalization and fuses every step with
//! the log-ratio of a text-free assistant distribution over items.

pub mod assistant;
pub mod catalog;
pub mod decoder;
pub mod error;
pub mod harness;
pub mod jsonl;
pub mod metrics;
pub mod scorer;

pub use assistant::{
    apply_group_mask, step_logratio, AssistantDistribution, MarkovModel, PopularityModel,
    PrefixMasses, TextFreeModel,
};
pub use catalog::{Catalog, CollisionPolicy, GhostAnalysis, Item, LengthStats, RawItem, Symbol};
pub use decoder::{
    brute_force_rank, combined_score, decode, DecodeConfig, FusionMode, Hypothesis,
    RecommendationList, Strategy,
};
pub use error::{Error, Result};
pub use scorer::{
    next_token_logprobs, DecodingContext, Scorer, ScorerConfig, SyntheticCopyLm, TableScorer,
    TokenDistribution,
};
