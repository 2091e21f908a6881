//! Trie-constrained beam search.
//!
//! The probability of a candidate sequence factorizes over its tokens, so a
//! hypothesis score is the running sum of the scorer's log-probabilities,
//! with the end-of-sequence step included. Every step only considers the
//! tokens the candidate trie allows, which makes any finished hypothesis a
//! candidate by construction.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::scoring::{ScorerError, TokenScorer};
use crate::tokenizer::{TokenId, Tokenizer};
use crate::trie::{build_trie, CandidateTrie, NodeId, TrieError};
use crate::types::{mark_mention, CandidateRepresentation, CoreError, EdInstance, EntityTitle};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("beam width must be at least 1")]
    InvalidBeam,
    #[error("{reps} representations for {candidates} candidates")]
    Misaligned { reps: usize, candidates: usize },
    #[error("scorer failed at step {step}: {source}")]
    ScorerFailure {
        step: usize,
        #[source]
        source: ScorerError,
    },
    #[error(transparent)]
    Trie(TrieError),
    #[error(transparent)]
    Input(#[from] CoreError),
}

impl From<TrieError> for DecodeError {
    fn from(e: TrieError) -> Self {
        match e {
            TrieError::EmptyCandidateSet => DecodeError::EmptyCandidateSet,
            e => DecodeError::Trie(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam: usize,
    /// When set, hypotheses are ranked by `score / len^alpha` (len counts the
    /// eos token). Reported scores stay raw sums.
    pub length_penalty: Option<f64>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam: 5,
            length_penalty: None,
        }
    }
}

impl BeamConfig {
    pub fn with_beam(beam: usize) -> Self {
        Self {
            beam,
            ..Self::default()
        }
    }

    fn rank_key(&self, score: f64, len: usize) -> f64 {
        match self.length_penalty {
            Some(alpha) => score / (len.max(1) as f64).powf(alpha),
            None => score,
        }
    }
}

/// A finished hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub index: usize,
    pub title: EntityTitle,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub winner: EntityTitle,
    pub winner_index: usize,
    /// Every finished hypothesis, best first.
    pub ranked: Vec<RankedCandidate>,
}

struct Hypothesis {
    node: NodeId,
    tokens: Vec<TokenId>,
    score: f64,
}

struct Expansion {
    parent: usize,
    token: TokenId,
    node: NodeId,
    score: f64,
    key: f64,
    rank: u32,
}

/// Disambiguates one instance by constrained beam search.
pub fn decode<S, T>(
    instance: &EdInstance,
    reps: &[CandidateRepresentation],
    scorer: &S,
    tokenizer: &T,
    config: &BeamConfig,
) -> Result<Decoded, DecodeError>
where
    S: TokenScorer + ?Sized,
    T: Tokenizer + ?Sized,
{
    if reps.len() != instance.candidates().len() {
        return Err(DecodeError::Misaligned {
            reps: reps.len(),
            candidates: instance.candidates().len(),
        });
    }
    if reps.is_empty() {
        return Err(DecodeError::EmptyCandidateSet);
    }
    let marked = mark_mention(instance)?;
    let trie = build_trie(reps, tokenizer)?;
    beam_search(marked.as_str(), &trie, reps, scorer, config)
}

/// Beam search over an already built trie.
pub fn beam_search<S: TokenScorer + ?Sized>(
    marked_context: &str,
    trie: &CandidateTrie,
    reps: &[CandidateRepresentation],
    scorer: &S,
    config: &BeamConfig,
) -> Result<Decoded, DecodeError> {
    if config.beam == 0 {
        return Err(DecodeError::InvalidBeam);
    }
    if trie.is_empty() {
        return Err(DecodeError::EmptyCandidateSet);
    }
    let mut live = vec![Hypothesis {
        node: NodeId::ROOT,
        tokens: Vec::new(),
        score: 0.0,
    }];
    let mut finished: Vec<(usize, f64, f64)> = Vec::new();
    let mut step = 0;

    while !live.is_empty() {
        let mut expansions = Vec::new();
        for (parent, hyp) in live.iter().enumerate() {
            let children = trie.children(hyp.node);
            let allowed: Vec<TokenId> = children.iter().map(|&(t, _)| t).collect();
            let fail = |source| DecodeError::ScorerFailure { step, source };
            let mut scores = scorer
                .next_logprobs(marked_context, &hyp.tokens, &allowed)
                .map_err(fail)?;
            scores.sort_unstable_by_key(|&(t, _)| t);
            for (token, node) in children {
                let lp = scores
                    .binary_search_by_key(&token, |&(t, _)| t)
                    .map(|i| scores[i].1)
                    .map_err(|_| fail(ScorerError::MissingToken(token)))?;
                if !lp.is_finite() {
                    return Err(fail(ScorerError::NonFinite { token, score: lp }));
                }
                let score = hyp.score + lp;
                expansions.push(Expansion {
                    parent,
                    token,
                    node,
                    score,
                    key: config.rank_key(score, hyp.tokens.len() + 1),
                    rank: trie.best_rank(node),
                });
            }
        }
        expansions.sort_by(|a, b| b.key.total_cmp(&a.key).then(a.rank.cmp(&b.rank)));
        expansions.truncate(config.beam);

        let mut next = Vec::with_capacity(expansions.len());
        for e in expansions {
            match trie.terminal(e.node) {
                Some(cand) => finished.push((cand, e.score, e.key)),
                None => {
                    let mut tokens = live[e.parent].tokens.clone();
                    tokens.push(e.token);
                    next.push(Hypothesis {
                        node: e.node,
                        tokens,
                        score: e.score,
                    });
                }
            }
        }
        live = next;
        step += 1;
    }

    finished.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then_with(|| trie.surface_rank(a.0).cmp(&trie.surface_rank(b.0)))
    });
    let ranked: Vec<RankedCandidate> = finished
        .into_iter()
        .map(|(index, score, _)| RankedCandidate {
            index,
            title: reps[index].title().clone(),
            score,
        })
        .collect();
    // the beam never empties before something finishes: every live node has
    // a terminal below it
    let best = &ranked[0];
    Ok(Decoded {
        winner: best.title.clone(),
        winner_index: best.index,
        ranked,
    })
}

/// Decodes many instances, in parallel, keeping input order. Failures stay
/// in their slot.
pub fn decode_batch<S, T>(
    instances: &[EdInstance],
    reps_per_instance: &[Vec<CandidateRepresentation>],
    scorer: &S,
    tokenizer: &T,
    config: &BeamConfig,
) -> Vec<Result<Decoded, DecodeError>>
where
    S: TokenScorer + Sync + ?Sized,
    T: Tokenizer + Sync + ?Sized,
{
    assert_eq!(
        instances.len(),
        reps_per_instance.len(),
        "one representation list per instance"
    );
    instances
        .par_iter()
        .zip(reps_per_instance.par_iter())
        .map(|(inst, reps)| decode(inst, reps, scorer, tokenizer, config))
        .collect()
}

/// Total order used for final rankings: score descending, then surface.
pub fn compare_scored(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::WordTokenizer;
    use crate::types::{normalize_title, MentionSpan};

    struct Uniform;
    impl TokenScorer for Uniform {
        fn next_logprobs(&self, _: &str, _: &[TokenId], allowed: &[TokenId]) -> Result<Vec<(TokenId, f64)>, ScorerError> {
            Ok(allowed.iter().map(|&t| (t, -1.0)).collect())
        }
    }

    /// Prefers one fixed token everywhere.
    struct Favour(TokenId);
    impl TokenScorer for Favour {
        fn next_logprobs(&self, _: &str, _: &[TokenId], allowed: &[TokenId]) -> Result<Vec<(TokenId, f64)>, ScorerError> {
            Ok(allowed.iter().map(|&t| (t, if t == self.0 { -0.1 } else { -3.0 })).collect())
        }
    }

    fn setup(surfaces: &[&str]) -> (EdInstance, Vec<CandidateRepresentation>, WordTokenizer) {
        let titles: Vec<EntityTitle> = surfaces.iter().map(|s| normalize_title(s).unwrap()).collect();
        let inst = EdInstance::new("i", "m here", MentionSpan { start: 0, end: 1 }, titles.clone(), None).unwrap();
        let reps = titles.into_iter().map(CandidateRepresentation::title_only).collect();
        (inst, reps, WordTokenizer::from_texts(surfaces))
    }

    #[test]
    fn uniform_ties_go_to_smallest_surface() {
        let (inst, reps, tok) = setup(&["B", "A"]);
        for beam in 1..=3 {
            let d = decode(&inst, &reps, &Uniform, &tok, &BeamConfig::with_beam(beam)).unwrap();
            assert_eq!(d.winner.as_str(), "A", "beam {beam}");
        }
    }

    #[test]
    fn single_candidate_is_forced() {
        let (inst, reps, tok) = setup(&["Only One"]);
        let d = decode(&inst, &reps, &Favour(99), &tok, &BeamConfig::with_beam(1)).unwrap();
        assert_eq!(d.winner.as_str(), "Only One");
        assert_eq!(d.ranked.len(), 1);
        // three steps at -3.0: "Only", "One", eos
        assert_eq!(d.ranked[0].score, -9.0);
    }

    #[test]
    fn scores_sum_along_path_and_ranking_is_complete() {
        let (inst, reps, tok) = setup(&["a b", "a c", "d"]);
        let c = tok.encode("c").unwrap()[0];
        let d = decode(&inst, &reps, &Favour(c), &tok, &BeamConfig::with_beam(5)).unwrap();
        let got: Vec<(&str, f64)> = d.ranked.iter().map(|r| (r.title.as_str(), r.score)).collect();
        // d = -3 - 3; a c = -3 - 0.1 - 3; a b = -3 - 3 - 3
        assert_eq!(got, vec![("d", -6.0), ("a c", -3.0 - 0.1 - 3.0), ("a b", -9.0)]);
        assert_eq!(d.winner.as_str(), "d");
        assert_eq!(d.winner_index, 2);
    }

    #[test]
    fn errors() {
        let (inst, _, tok) = setup(&["A"]);
        assert_eq!(
            decode(&inst, &[], &Uniform, &tok, &BeamConfig::default()),
            Err(DecodeError::Misaligned { reps: 0, candidates: 1 })
        );
        let (inst, reps, tok) = setup(&[]);
        assert_eq!(
            decode(&inst, &reps, &Uniform, &tok, &BeamConfig::default()),
            Err(DecodeError::EmptyCandidateSet)
        );
        let (inst, reps, tok) = setup(&["A"]);
        assert_eq!(
            decode(&inst, &reps, &Uniform, &tok, &BeamConfig::with_beam(0)),
            Err(DecodeError::InvalidBeam)
        );
    }

    struct Broken;
    impl TokenScorer for Broken {
        fn next_logprobs(&self, _: &str, prefix: &[TokenId], allowed: &[TokenId]) -> Result<Vec<(TokenId, f64)>, ScorerError> {
            if prefix.is_empty() {
                Ok(allowed.iter().map(|&t| (t, 0.0)).collect())
            } else {
                Ok(vec![(allowed[0], f64::NAN)])
            }
        }
    }

    #[test]
    fn scorer_failures_carry_the_step() {
        let (inst, reps, tok) = setup(&["a b"]);
        let err = decode(&inst, &reps, &Broken, &tok, &BeamConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            DecodeError::ScorerFailure { step: 1, source: ScorerError::NonFinite { .. } }
        ));
    }

    /// Every step costs 1.0 except after a "y", where steps cost 0.6.
    struct CheapAfterY(TokenId);
    impl TokenScorer for CheapAfterY {
        fn next_logprobs(&self, _: &str, prefix: &[TokenId], allowed: &[TokenId]) -> Result<Vec<(TokenId, f64)>, ScorerError> {
            let cost = if prefix.last() == Some(&self.0) { -0.6 } else { -1.0 };
            Ok(allowed.iter().map(|&t| (t, if t == self.0 { -0.6 } else { cost })).collect())
        }
    }

    #[test]
    fn length_penalty_changes_ranking_not_scores() {
        let (inst, reps, tok) = setup(&["x", "y y y y"]);
        let y = tok.encode("y").unwrap()[0];
        // x: -1 - 1 = -2 (mean -1); y y y y: 5 steps of -0.6 = -3 (mean -0.6)
        let raw = decode(&inst, &reps, &CheapAfterY(y), &tok, &BeamConfig::with_beam(2)).unwrap();
        assert_eq!(raw.winner.as_str(), "x");
        let cfg = BeamConfig { beam: 2, length_penalty: Some(1.0) };
        let norm = decode(&inst, &reps, &CheapAfterY(y), &tok, &cfg).unwrap();
        assert_eq!(norm.winner.as_str(), "y y y y");
        assert!((norm.ranked[0].score + 3.0).abs() < 1e-12);
        assert!((norm.ranked[1].score + 2.0).abs() < 1e-12);
    }

    #[test]
    fn batch_isolates_errors() {
        let (a, ra, tok) = setup(&["A", "B"]);
        let (b, rb, _) = setup(&[]);
        let out = decode_batch(&[a.clone(), b, a], &[ra.clone(), rb, ra], &Uniform, &tok, &BeamConfig::default());
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].as_ref().unwrap().winner.as_str(), "A");
        assert_eq!(out[1], Err(DecodeError::EmptyCandidateSet));
        assert_eq!(out[0], out[2]);
    }
}
