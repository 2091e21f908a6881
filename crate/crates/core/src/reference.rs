//! Deterministic scorers that drive both decoders without a trained model.

use std::collections::{HashMap, HashSet};

use crate::extractive::SEPARATOR;
use crate::scoring::{ScorerError, SpanScorer, SpanScores, TokenScorer};
use crate::tokenizer::{TokenId, Tokenizer, TokenizerError};
use crate::types::{CandidateRepresentation, CLOSE_MARKER, OPEN_MARKER};

/// Log-probability the oracle assigns off the gold path.
pub const ORACLE_PENALTY: f64 = -1000.0;

/// Add-one smoothed token n-gram model over the candidate surfaces.
///
/// Each surface contributes the sequence `bos^(n-1) tokens eos`. The
/// vocabulary is every surface token plus eos, so with `V` types and history
/// `h`, `P(t | h) = (c(h t) + 1) / (c(h) + V)`. The marked context is ignored.
#[derive(Debug, Clone)]
pub struct NgramScorer {
    order: usize,
    bos: TokenId,
    vocab: Vec<TokenId>,
    counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>>,
}

impl NgramScorer {
    /// # Panics
    /// If `order` is zero.
    pub fn new<T: Tokenizer + ?Sized>(
        reps: &[CandidateRepresentation],
        tokenizer: &T,
        order: usize,
    ) -> Result<Self, TokenizerError> {
        assert!(order >= 1, "n-gram order must be at least 1");
        let (bos, eos) = (tokenizer.bos_id(), tokenizer.eos_id());
        let mut vocab = HashSet::from([eos]);
        let mut counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
        for r in reps {
            let mut seq = vec![bos; order - 1];
            seq.extend(tokenizer.encode(r.surface())?);
            seq.push(eos);
            vocab.extend(&seq[order - 1..]);
            for w in seq.windows(order) {
                let (h, t) = w.split_at(order - 1);
                *counts.entry(h.to_vec()).or_default().entry(t[0]).or_default() += 1;
            }
        }
        let mut vocab: Vec<TokenId> = vocab.into_iter().collect();
        vocab.sort_unstable();
        Ok(Self {
            order,
            bos,
            vocab,
            counts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Sorted vocabulary, eos included.
    pub fn vocab(&self) -> &[TokenId] {
        &self.vocab
    }

    /// `log P(token | prefix)`, with `prefix` excluding the start symbol.
    pub fn logprob(&self, prefix: &[TokenId], token: TokenId) -> f64 {
        let k = self.order - 1;
        let mut history = vec![self.bos; k.saturating_sub(prefix.len())];
        history.extend(&prefix[prefix.len().saturating_sub(k)..]);
        let v = self.vocab.len() as f64;
        match self.counts.get(&history) {
            Some(next) => {
                let total: u64 = next.values().sum();
                let c = next.get(&token).copied().unwrap_or(0);
                ((c + 1) as f64 / (total as f64 + v)).ln()
            }
            None => (1.0 / v).ln(),
        }
    }
}

impl TokenScorer for NgramScorer {
    fn next_logprobs(
        &self,
        _marked_context: &str,
        prefix: &[TokenId],
        allowed: &[TokenId],
    ) -> Result<Vec<(TokenId, f64)>, ScorerError> {
        Ok(allowed.iter().map(|&t| (t, self.logprob(prefix, t))).collect())
    }
}

/// Gives every allowed token the same score, so rankings fall back to
/// tie-breaking.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformScorer;

impl TokenScorer for UniformScorer {
    fn next_logprobs(&self, _: &str, _: &[TokenId], allowed: &[TokenId]) -> Result<Vec<(TokenId, f64)>, ScorerError> {
        Ok(allowed.iter().map(|&t| (t, 0.0)).collect())
    }
}

/// Whitespace tokens of `text` as `(char_start, char_end, word)`.
pub(crate) fn whitespace_tokens(text: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let mut chars = 0;
    for (ci, (bi, c)) in text.char_indices().enumerate() {
        match (c.is_whitespace(), start) {
            (true, Some((cs, bs))) => {
                out.push((cs, ci, &text[bs..bi]));
                start = None;
            }
            (false, None) => start = Some((ci, bi)),
            _ => {}
        }
        chars = ci + 1;
    }
    if let Some((cs, bs)) = start {
        out.push((cs, chars, &text[bs..]));
    }
    out
}

/// Strips leading and trailing punctuation, so `"Ronaldo:"` matches `"Ronaldo"`.
fn word_key(w: &str) -> &str {
    w.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Scores each context token by how many distinct query words its candidate
/// surface shares, compared exactly after trimming punctuation.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapSpanScorer;

impl SpanScorer for OverlapSpanScorer {
    fn span_scores(&self, query: &str, context: &str) -> Result<SpanScores, ScorerError> {
        let query_words: HashSet<&str> = query
            .split_whitespace()
            .filter(|w| *w != OPEN_MARKER && *w != CLOSE_MARKER)
            .map(word_key)
            .filter(|w| !w.is_empty())
            .collect();
        let sep = SEPARATOR.trim();
        let tokens = whitespace_tokens(context);
        let mut scores = vec![0.0; tokens.len()];
        // score each run of tokens between separators as one candidate
        let mut i = 0;
        while i < tokens.len() {
            if tokens[i].2 == sep {
                i += 1;
                continue;
            }
            let j = (i..tokens.len()).find(|&k| tokens[k].2 == sep).unwrap_or(tokens.len());
            let words: HashSet<&str> = tokens[i..j].iter().map(|t| word_key(t.2)).collect();
            let overlap = words.iter().filter(|w| query_words.contains(*w)).count() as f64;
            scores[i..j].iter_mut().for_each(|s| *s = overlap);
            i = j;
        }
        Ok(SpanScores {
            spans: tokens.iter().map(|t| (t.0, t.1)).collect(),
            start: scores.clone(),
            end: scores,
        })
    }
}

/// Knows the gold surface and scores accordingly: log-probability 0 along the
/// gold token path and [`ORACLE_PENALTY`] elsewhere; start/end scores of 0 at
/// the first/last token of the gold span and the penalty elsewhere.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    surface: String,
    path: Vec<TokenId>,
}

impl OracleScorer {
    pub fn new<T: Tokenizer + ?Sized>(gold_surface: &str, tokenizer: &T) -> Result<Self, TokenizerError> {
        let mut path = tokenizer.encode(gold_surface)?;
        path.push(tokenizer.eos_id());
        Ok(Self {
            surface: gold_surface.to_string(),
            path,
        })
    }

    /// An oracle for extraction only; its token path is empty.
    pub fn extractive(gold_surface: &str) -> Self {
        Self {
            surface: gold_surface.to_string(),
            path: Vec::new(),
        }
    }

    pub fn gold_surface(&self) -> &str {
        &self.surface
    }
}

impl TokenScorer for OracleScorer {
    fn next_logprobs(
        &self,
        _marked_context: &str,
        prefix: &[TokenId],
        allowed: &[TokenId],
    ) -> Result<Vec<(TokenId, f64)>, ScorerError> {
        let next = self.path.starts_with(prefix).then(|| self.path.get(prefix.len())).flatten();
        Ok(allowed
            .iter()
            .map(|&t| (t, if Some(&t) == next { 0.0 } else { ORACLE_PENALTY }))
            .collect())
    }
}

impl SpanScorer for OracleScorer {
    fn span_scores(&self, _query: &str, context: &str) -> Result<SpanScores, ScorerError> {
        let tokens = whitespace_tokens(context);
        let mut start = vec![ORACLE_PENALTY; tokens.len()];
        let mut end = start.clone();
        // find the candidate whose text is exactly the gold surface
        let mut pos = 0;
        for (k, part) in context.split(SEPARATOR).enumerate() {
            if k > 0 {
                pos += SEPARATOR.chars().count();
            }
            let len = part.chars().count();
            if part == self.surface {
                let (s, e) = (pos, pos + len);
                if let Some(i) = tokens.iter().position(|t| t.1 > s) {
                    start[i] = 0.0;
                }
                if let Some(j) = tokens.iter().rposition(|t| t.0 < e) {
                    end[j] = 0.0;
                }
                break;
            }
            pos += len;
        }
        Ok(SpanScores {
            spans: tokens.iter().map(|t| (t.0, t.1)).collect(),
            start,
            end,
        })
    }
}
