//! Extractive disambiguation: the marked context is the query, the candidate
//! surfaces joined by a separator are the passage, and the prediction is the
//! candidate whose span the scorer likes best.

use rayon::prelude::*;

use crate::generative::compare_scored;
use crate::scoring::{ScorerError, SpanScorer};
use crate::tokenizer::{TokenCounter, TokenizerError};
use crate::types::{mark_span, CandidateRepresentation, CoreError, EdInstance, EntityTitle, MentionSpan};

/// Literal placed between consecutive candidate surfaces.
pub const SEPARATOR: &str = " <sep> ";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("{reps} representations for {candidates} candidates")]
    Misaligned { reps: usize, candidates: usize },
    #[error("budget of {budget} tokens cannot hold the input (needs at least {needed})")]
    BudgetTooSmall { budget: usize, needed: usize },
    #[error("a token budget needs a tokenizer to count with")]
    MissingTokenizer,
    #[error("span scorer failed: {0}")]
    ScorerFailure(#[from] ScorerError),
    #[error("span scorer returned no tokens")]
    NoTokens,
    #[error("span [{0}, {1}) overlaps no candidate")]
    NoOverlap(usize, usize),
    #[error("span [{start}, {end}) is outside a context of {len} characters")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error(transparent)]
    Input(#[from] CoreError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

/// Query/passage pair with the character span of every candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledInput {
    pub query: String,
    pub context: String,
    /// `spans[i]` is the `[start, end)` character range of candidate `i`.
    pub spans: Vec<(usize, usize)>,
    pub truncated_query: bool,
}

impl AssembledInput {
    /// Context text under candidate `i`'s span.
    pub fn candidate_text(&self, i: usize) -> &str {
        let (s, e) = self.spans[i];
        let from = crate::types::char_to_byte(&self.context, s);
        let to = crate::types::char_to_byte(&self.context, e);
        &self.context[from..to]
    }
}

/// Builds the extractive input for one instance.
///
/// With a budget, the query is cut word by word, alternately from the far
/// left and the far right of the text, until query and passage fit together.
/// Candidate surfaces are never cut.
pub fn assemble(
    instance: &EdInstance,
    reps: &[CandidateRepresentation],
    budget: Option<usize>,
    counter: Option<&dyn TokenCounter>,
) -> Result<AssembledInput, ExtractError> {
    check_alignment(instance, reps)?;

    let mut context = String::new();
    let mut spans = Vec::with_capacity(reps.len());
    let mut pos = 0;
    for (i, r) in reps.iter().enumerate() {
        if i > 0 {
            context.push_str(SEPARATOR);
            pos += SEPARATOR.chars().count();
        }
        let n = r.surface().chars().count();
        context.push_str(r.surface());
        spans.push((pos, pos + n));
        pos += n;
    }

    let full_query = mark_span(instance.text(), instance.mention())?;
    let Some(budget) = budget else {
        return Ok(AssembledInput {
            query: full_query.into_string(),
            context,
            spans,
            truncated_query: false,
        });
    };
    let counter = counter.ok_or(ExtractError::MissingTokenizer)?;
    let passage = counter.count_tokens(&context)?;
    let fits = |q: &str| -> Result<bool, TokenizerError> { Ok(counter.count_tokens(q)? + passage <= budget) };

    if fits(full_query.as_str())? {
        return Ok(AssembledInput {
            query: full_query.into_string(),
            context,
            spans,
            truncated_query: false,
        });
    }
    let window = QueryWindow::new(instance.text(), instance.mention());
    let max_drop = window.droppable();
    let query_at = |k: usize| -> Result<String, ExtractError> {
        let (text, span) = window.keep(k);
        Ok(mark_span(&text, span)?.into_string())
    };
    let shortest = query_at(max_drop)?;
    if !fits(&shortest)? {
        return Err(ExtractError::BudgetTooSmall {
            budget,
            needed: passage + counter.count_tokens(&shortest)?,
        });
    }
    // smallest number of dropped words that fits
    let (mut lo, mut hi) = (1, max_drop);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if fits(&query_at(mid)?)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(AssembledInput {
        query: query_at(lo)?,
        context,
        spans,
        truncated_query: true,
    })
}

fn check_alignment(instance: &EdInstance, reps: &[CandidateRepresentation]) -> Result<(), ExtractError> {
    if reps.len() != instance.candidates().len() {
        return Err(ExtractError::Misaligned {
            reps: reps.len(),
            candidates: instance.candidates().len(),
        });
    }
    if reps.is_empty() {
        return Err(ExtractError::EmptyCandidateSet);
    }
    Ok(())
}

/// Whitespace words around a mention, for symmetric truncation.
struct QueryWindow<'a> {
    text: &'a str,
    mention: MentionSpan,
    /// Char ranges of words entirely before the mention, left to right.
    left: Vec<(usize, usize)>,
    /// Char ranges of words entirely after the mention, left to right.
    right: Vec<(usize, usize)>,
}

impl<'a> QueryWindow<'a> {
    fn new(text: &'a str, mention: MentionSpan) -> Self {
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut start: Option<usize> = None;
        let mut n = 0;
        let mut push = |s: usize, e: usize| {
            if e <= mention.start {
                left.push((s, e));
            } else if s >= mention.end {
                right.push((s, e));
            }
        };
        for (i, c) in text.chars().enumerate() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    push(s, i);
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
            n = i + 1;
        }
        if let Some(s) = start {
            push(s, n);
        }
        Self {
            text,
            mention,
            left,
            right,
        }
    }

    fn droppable(&self) -> usize {
        self.left.len() + self.right.len()
    }

    /// Words dropped from (left, right) after `k` alternating steps.
    fn split(&self, k: usize) -> (usize, usize) {
        let (l, r) = (self.left.len(), self.right.len());
        let even = k.min(2 * l.min(r));
        let (mut dl, mut dr) = (even.div_ceil(2), even / 2);
        let rest = k - even;
        if dl < l {
            dl += rest;
        } else {
            dr += rest;
        }
        (dl.min(l), dr.min(r))
    }

    /// Text kept after dropping `k` words, and the mention span inside it.
    fn keep(&self, k: usize) -> (String, MentionSpan) {
        let (dl, dr) = self.split(k);
        let start = self.left.get(dl).map_or(self.mention.start, |w| w.0);
        let end = if dr < self.right.len() {
            self.right[self.right.len() - 1 - dr].1
        } else {
            self.mention.end
        };
        let from = crate::types::char_to_byte(self.text, start);
        let to = crate::types::char_to_byte(self.text, end);
        let span = MentionSpan {
            start: self.mention.start - start,
            end: self.mention.end - start,
        };
        (self.text[from..to].to_string(), span)
    }
}

/// Result of extractive disambiguation.
#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub winner: EntityTitle,
    pub winner_index: usize,
    /// One score per candidate, in candidate order. Candidates no scorer
    /// token overlaps get negative infinity.
    pub scores: Vec<(EntityTitle, f64)>,
}

impl Extracted {
    /// Scores sorted best first, ties by surface.
    pub fn ranked(&self, reps: &[CandidateRepresentation]) -> Vec<(EntityTitle, f64)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            compare_scored((self.scores[a].1, reps[a].surface()), (self.scores[b].1, reps[b].surface()))
        });
        order.into_iter().map(|i| self.scores[i].clone()).collect()
    }
}

/// Scores each candidate span as `start[first token] + end[last token]`, the
/// first and last scorer tokens overlapping it, and returns the best.
pub fn extract<S: SpanScorer + ?Sized>(
    instance: &EdInstance,
    reps: &[CandidateRepresentation],
    scorer: &S,
    budget: Option<usize>,
    counter: Option<&dyn TokenCounter>,
) -> Result<Extracted, ExtractError> {
    let input = assemble(instance, reps, budget, counter)?;
    extract_assembled(&input, reps, scorer)
}

pub fn extract_assembled<S: SpanScorer + ?Sized>(
    input: &AssembledInput,
    reps: &[CandidateRepresentation],
    scorer: &S,
) -> Result<Extracted, ExtractError> {
    let scores = scorer.span_scores(&input.query, &input.context)?;
    if scores.spans.is_empty() {
        return Err(ExtractError::NoTokens);
    }
    scores.validate(input.context.chars().count())?;

    let per_candidate: Vec<f64> = input
        .spans
        .iter()
        .map(|&(s, e)| {
            let first = scores.spans.partition_point(|&(_, te)| te <= s);
            let past = scores.spans.partition_point(|&(ts, _)| ts < e);
            if first < past {
                scores.start[first] + scores.end[past - 1]
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();

    let winner_index = (0..reps.len())
        .min_by(|&a, &b| compare_scored((per_candidate[a], reps[a].surface()), (per_candidate[b], reps[b].surface())))
        .expect("non-empty candidate set");
    Ok(Extracted {
        winner: reps[winner_index].title().clone(),
        winner_index,
        scores: reps
            .iter()
            .zip(per_candidate)
            .map(|(r, s)| (r.title().clone(), s))
            .collect(),
    })
}

/// Extracts many instances in parallel, keeping input order.
pub fn extract_batch<S: SpanScorer + Sync + ?Sized>(
    instances: &[EdInstance],
    reps_per_instance: &[Vec<CandidateRepresentation>],
    scorer: &S,
    budget: Option<usize>,
    counter: Option<&(dyn TokenCounter + Sync)>,
) -> Vec<Result<Extracted, ExtractError>> {
    assert_eq!(instances.len(), reps_per_instance.len());
    instances
        .par_iter()
        .zip(reps_per_instance.par_iter())
        .map(|(i, r)| extract(i, r, scorer, budget, counter.map(|c| c as &dyn TokenCounter)))
        .collect()
}

/// Maps a free-form predicted span to the candidate it overlaps most.
pub fn resolve_span(assembled: &AssembledInput, predicted: (usize, usize)) -> Result<usize, ExtractError> {
    let (ps, pe) = predicted;
    let len = assembled.context.chars().count();
    if ps >= pe || pe > len {
        return Err(ExtractError::SpanOutOfBounds {
            start: ps,
            end: pe,
            len,
        });
    }
    let mut best: Option<(usize, usize)> = None;
    for (i, &(s, e)) in assembled.spans.iter().enumerate() {
        let overlap = pe.min(e).saturating_sub(ps.max(s));
        if overlap > 0 && best.is_none_or(|(_, b)| overlap > b) {
            best = Some((i, overlap));
        }
    }
    best.map(|(i, _)| i).ok_or(ExtractError::NoOverlap(ps, pe))
}
