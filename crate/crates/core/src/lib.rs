//! Entity disambiguation toolkit.
//!
//! Candidates are rendered as `"title: description"` strings using an
//! English description map built from a Wikidata dump, then ranked either by
//! constrained generation over a token trie ([`generative`]) or by span
//! extraction over the concatenated candidate list ([`extractive`]). Model
//! scores come from the [`scoring`] traits, implemented by the [`reference`]
//! scorers and by an external process through [`bridge`].

pub mod bridge;
pub mod cli;
pub mod datasets;
pub mod evaluation;
pub mod extractive;
pub mod generative;
pub mod reference;
pub mod representation;
pub mod scoring;
pub mod tokenizer;
pub mod trie;
pub mod types;
pub mod wikidata;

pub use representation::{make_representation, render_candidates, RepresentationMode};
pub use scoring::{SpanScorer, SpanScores, TokenScorer};
pub use tokenizer::{TokenCounter, TokenId, Tokenizer};
pub use types::{
    mark_mention, normalize_title, CandidateRepresentation, CoreError, EdInstance, EntityDescription,
    EntityTitle, MarkedContext, MentionSpan,
};
pub use wikidata::DescriptionMap;
