//! Scorer interfaces that decouple the decoders from any particular model.

use crate::tokenizer::TokenId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer returned no score for token {0}")]
    MissingToken(TokenId),
    #[error("scorer returned a non-finite score {score} for token {token}")]
    NonFinite { token: TokenId, score: f64 },
    #[error("malformed span scores: {0}")]
    MalformedSpans(String),
    #[error("scorer backend failed: {0}")]
    Backend(String),
}

/// Next-token log-probabilities for constrained generation.
///
/// `prefix` holds the tokens generated so far, not including the start
/// symbol. Implementations must return a finite log-probability for every id
/// in `allowed` and may return more; extra ids are ignored by the decoder.
pub trait TokenScorer {
    fn next_logprobs(
        &self,
        marked_context: &str,
        prefix: &[TokenId],
        allowed: &[TokenId],
    ) -> Result<Vec<(TokenId, f64)>, ScorerError>;
}

impl<S: TokenScorer + ?Sized> TokenScorer for &S {
    fn next_logprobs(
        &self,
        marked_context: &str,
        prefix: &[TokenId],
        allowed: &[TokenId],
    ) -> Result<Vec<(TokenId, f64)>, ScorerError> {
        (**self).next_logprobs(marked_context, prefix, allowed)
    }
}

/// Per-token start/end scores over an extractive context.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpanScores {
    /// Character spans `[start, end)` of the context tokens, ordered.
    pub spans: Vec<(usize, usize)>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl SpanScores {
    /// Checks lengths, ordering, disjointness and bounds against a context of
    /// `context_chars` characters.
    pub fn validate(&self, context_chars: usize) -> Result<(), ScorerError> {
        if self.spans.len() != self.start.len() || self.spans.len() != self.end.len() {
            return Err(ScorerError::MalformedSpans(format!(
                "{} spans, {} start scores, {} end scores",
                self.spans.len(),
                self.start.len(),
                self.end.len()
            )));
        }
        let mut prev_end = 0;
        for (i, &(s, e)) in self.spans.iter().enumerate() {
            if s >= e || e > context_chars || (i > 0 && s < prev_end) {
                return Err(ScorerError::MalformedSpans(format!(
                    "token {i} span [{s}, {e}) is empty, overlapping or out of bounds"
                )));
            }
            prev_end = e;
        }
        if let Some(x) = self.start.iter().chain(&self.end).find(|x| x.is_nan()) {
            return Err(ScorerError::MalformedSpans(format!("score {x}")));
        }
        Ok(())
    }
}

/// Scores every context token as a potential answer start and end.
pub trait SpanScorer {
    fn span_scores(&self, query: &str, context: &str) -> Result<SpanScores, ScorerError>;
}

impl<S: SpanScorer + ?Sized> SpanScorer for &S {
    fn span_scores(&self, query: &str, context: &str) -> Result<SpanScores, ScorerError> {
        (**self).span_scores(query, context)
    }
}
