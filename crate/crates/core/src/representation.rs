//! Candidate representations: `"title: description"`, or the bare title when
//! no description could be mapped.

use std::collections::HashSet;
use std::str::FromStr;

use serde::Serialize;

use crate::tokenizer::{Tokenizer, TokenizerError};
use crate::types::{CandidateRepresentation, EdInstance, EntityTitle};
use crate::wikidata::DescriptionMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RepresentationError {
    #[error("candidates of instance {instance:?} render to the same surface {surface:?}")]
    DuplicateSurface { instance: String, surface: String },
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

/// Which representation to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RepresentationMode {
    TitleOnly,
    #[default]
    WithDescription,
}

impl FromStr for RepresentationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "title-only" => Ok(Self::TitleOnly),
            "with-description" => Ok(Self::WithDescription),
            other => Err(format!("unknown representation mode {other:?}")),
        }
    }
}

/// Renders one title, falling back to the title when the map has no entry.
pub fn make_representation(title: &EntityTitle, map: &DescriptionMap) -> CandidateRepresentation {
    CandidateRepresentation::new(title.clone(), map.lookup(title))
}

/// Renders every candidate of `instance` in candidate order.
///
/// Fails if two candidates end up with the same surface, which can happen
/// when one title is literally another title plus `": description"`.
pub fn render_candidates(
    instance: &EdInstance,
    map: &DescriptionMap,
    mode: RepresentationMode,
) -> Result<Vec<CandidateRepresentation>, RepresentationError> {
    let reps: Vec<CandidateRepresentation> = instance
        .candidates()
        .iter()
        .map(|t| match mode {
            RepresentationMode::TitleOnly => CandidateRepresentation::title_only(t.clone()),
            RepresentationMode::WithDescription => make_representation(t, map),
        })
        .collect();
    let mut seen = HashSet::with_capacity(reps.len());
    for r in &reps {
        if !seen.insert(r.surface()) {
            return Err(RepresentationError::DuplicateSurface {
                instance: instance.id().to_string(),
                surface: r.surface().to_string(),
            });
        }
    }
    Ok(reps)
}

/// Token-length statistics over candidate occurrences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthStats {
    pub occurrences: u64,
    pub mean: f64,
    /// Nearest-rank 99th percentile.
    pub p99: u64,
}

/// Mean and nearest-rank p99 of `encode(surface)` lengths over every
/// candidate occurrence (repeats included).
pub fn representation_length_stats<'a, I, T>(
    instances: I,
    map: &DescriptionMap,
    tokenizer: &T,
    mode: RepresentationMode,
) -> Result<LengthStats, RepresentationError>
where
    I: IntoIterator<Item = &'a EdInstance>,
    T: Tokenizer + ?Sized,
{
    let mut lengths: Vec<u64> = Vec::new();
    for inst in instances {
        for r in render_candidates(inst, map, mode)? {
            lengths.push(tokenizer.encode(r.surface())?.len() as u64);
        }
    }
    Ok(length_stats(lengths))
}

pub(crate) fn length_stats(mut lengths: Vec<u64>) -> LengthStats {
    if lengths.is_empty() {
        return LengthStats {
            occurrences: 0,
            mean: 0.0,
            p99: 0,
        };
    }
    let n = lengths.len();
    let mean = lengths.iter().sum::<u64>() as f64 / n as f64;
    lengths.sort_unstable();
    LengthStats {
        occurrences: n as u64,
        mean,
        p99: lengths[nearest_rank(n, 99)],
    }
}

/// Zero-based index of the nearest-rank `pct` percentile in a sorted list.
fn nearest_rank(n: usize, pct: usize) -> usize {
    // rank = ceil(pct/100 * n), 1-based
    let rank = (pct * n).div_ceil(100).max(1);
    rank - 1
}
