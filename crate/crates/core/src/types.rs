//! Shared vocabulary: titles, descriptions, mention spans, instances and
//! marked contexts.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_normalization::UnicodeNormalization;

/// Opening mention marker.
pub const OPEN_MARKER: &str = "<s>";
/// Closing mention marker.
pub const CLOSE_MARKER: &str = "</s>";

/// Errors raised while constructing domain values.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoreError {
    #[error("title is empty after normalization")]
    EmptyTitle,
    #[error("title {0:?} contains a tab or line break")]
    InvalidTitle(String),
    #[error("description is empty")]
    EmptyDescription,
    #[error("description {0:?} contains a line break")]
    MultilineDescription(String),
    #[error("mention span [{start}, {end}) is invalid for a text of {len} characters")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("duplicate candidate title {0:?}")]
    DuplicateCandidate(String),
    #[error("text already contains a mention marker")]
    MarkerInText,
}

/// A normalized Wikipedia page title.
///
/// Underscores are replaced by spaces, the string is NFC-normalized and
/// trimmed. Comparison is case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityTitle(String);

impl EntityTitle {
    /// Normalizes `raw` into a title. Same as [`normalize_title`].
    pub fn new(raw: &str) -> Result<Self, CoreError> {
        normalize_title(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for EntityTitle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for EntityTitle {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Serialize for EntityTitle {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for EntityTitle {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        normalize_title(&raw).map_err(serde::de::Error::custom)
    }
}

/// Normalizes a raw dataset or sitelink title.
pub fn normalize_title(raw: &str) -> Result<EntityTitle, CoreError> {
    let replaced: String = raw.replace('_', " ").nfc().collect();
    let trimmed = replaced.trim();
    if trimmed.is_empty() {
        return Err(CoreError::EmptyTitle);
    }
    if trimmed.contains(['\t', '\n', '\r']) {
        return Err(CoreError::InvalidTitle(trimmed.to_string()));
    }
    Ok(EntityTitle(trimmed.to_string()))
}

/// A short single-line description of an entity in some language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDescription {
    value: String,
    language: String,
}

impl EntityDescription {
    pub fn new(value: impl Into<String>, language: impl Into<String>) -> Result<Self, CoreError> {
        let value = value.into();
        if value.is_empty() {
            return Err(CoreError::EmptyDescription);
        }
        if value.contains(['\n', '\r']) {
            return Err(CoreError::MultilineDescription(value));
        }
        Ok(Self {
            value,
            language: language.into(),
        })
    }

    /// English description.
    pub fn en(value: impl Into<String>) -> Result<Self, CoreError> {
        Self::new(value, "en")
    }

    pub fn as_str(&self) -> &str {
        &self.value
    }

    pub fn language(&self) -> &str {
        &self.language
    }
}

/// Textual representation of a candidate entity.
///
/// The surface is `"title: description"` when a description is known and the
/// bare title otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateRepresentation {
    title: EntityTitle,
    description: Option<EntityDescription>,
    surface: String,
}

impl CandidateRepresentation {
    pub fn new(title: EntityTitle, description: Option<EntityDescription>) -> Self {
        let surface = match &description {
            Some(d) => format!("{}: {}", title.as_str(), d.as_str()),
            None => title.as_str().to_string(),
        };
        Self {
            title,
            description,
            surface,
        }
    }

    /// Title-only representation.
    pub fn title_only(title: EntityTitle) -> Self {
        Self::new(title, None)
    }

    pub fn title(&self) -> &EntityTitle {
        &self.title
    }

    pub fn description(&self) -> Option<&EntityDescription> {
        self.description.as_ref()
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }
}

/// Half-open character range `[start, end)` of a mention inside its text.
///
/// Offsets count Unicode scalar values, not bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MentionSpan {
    pub start: usize,
    pub end: usize,
}

impl MentionSpan {
    /// Checks the span against `text`.
    pub fn new(start: usize, end: usize, text: &str) -> Result<Self, CoreError> {
        let span = Self { start, end };
        span.validate(text)?;
        Ok(span)
    }

    pub fn validate(&self, text: &str) -> Result<(), CoreError> {
        let len = text.chars().count();
        if self.start < self.end && self.end <= len {
            Ok(())
        } else {
            Err(CoreError::InvalidSpan {
                start: self.start,
                end: self.end,
                len,
            })
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    /// Byte range of the span inside `text`. The span must be valid.
    pub fn byte_range(&self, text: &str) -> std::ops::Range<usize> {
        char_to_byte(text, self.start)..char_to_byte(text, self.end)
    }
}

/// Byte offset of the `chars`-th character of `text` (or `text.len()`).
pub fn char_to_byte(text: &str, chars: usize) -> usize {
    text.char_indices()
        .nth(chars)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

/// One mention in context together with its candidate entities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdInstance {
    id: String,
    text: String,
    mention: MentionSpan,
    candidates: Vec<EntityTitle>,
    gold: Option<EntityTitle>,
}

impl EdInstance {
    /// Builds an instance, rejecting invalid spans and repeated candidates.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        mention: MentionSpan,
        candidates: Vec<EntityTitle>,
        gold: Option<EntityTitle>,
    ) -> Result<Self, CoreError> {
        let text = text.into();
        mention.validate(&text)?;
        let mut seen = HashSet::with_capacity(candidates.len());
        for c in &candidates {
            if !seen.insert(c) {
                return Err(CoreError::DuplicateCandidate(c.as_str().to_string()));
            }
        }
        Ok(Self {
            id: id.into(),
            text,
            mention,
            candidates,
            gold,
        })
    }

    /// Like [`EdInstance::new`] but drops repeated candidates, keeping the
    /// first occurrence. Returns the number of dropped titles.
    pub fn new_dedup(
        id: impl Into<String>,
        text: impl Into<String>,
        mention: MentionSpan,
        candidates: Vec<EntityTitle>,
        gold: Option<EntityTitle>,
    ) -> Result<(Self, usize), CoreError> {
        let before = candidates.len();
        let mut seen = HashSet::with_capacity(before);
        let candidates: Vec<EntityTitle> = candidates
            .into_iter()
            .filter(|c| seen.insert(c.clone()))
            .collect();
        let dropped = before - candidates.len();
        Ok((Self::new(id, text, mention, candidates, gold)?, dropped))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn mention(&self) -> MentionSpan {
        self.mention
    }

    pub fn candidates(&self) -> &[EntityTitle] {
        &self.candidates
    }

    pub fn gold(&self) -> Option<&EntityTitle> {
        self.gold.as_ref()
    }

    /// Mention text as it appears in the document.
    pub fn mention_text(&self) -> &str {
        &self.text[self.mention.byte_range(&self.text)]
    }

    /// Mention text with internal whitespace runs collapsed to one space.
    pub fn mention_surface(&self) -> String {
        self.mention_text()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// True when a gold entity is given and it is one of the candidates.
    pub fn gold_in_candidates(&self) -> bool {
        self.gold
            .as_ref()
            .is_some_and(|g| self.candidates.contains(g))
    }

    /// Replaces the candidate list, deduplicating as in [`EdInstance::new_dedup`].
    pub fn with_candidates(mut self, candidates: Vec<EntityTitle>) -> (Self, usize) {
        let before = candidates.len();
        let mut seen = HashSet::with_capacity(before);
        self.candidates = candidates
            .into_iter()
            .filter(|c| seen.insert(c.clone()))
            .collect();
        let dropped = before - self.candidates.len();
        (self, dropped)
    }
}

/// Context with the mention wrapped as `<s> mention </s>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedContext {
    value: String,
    // byte offset of OPEN_MARKER and of CLOSE_MARKER inside `value`
    open_at: usize,
    close_at: usize,
}

impl MarkedContext {
    pub fn as_str(&self) -> &str {
        &self.value
    }

    pub fn into_string(self) -> String {
        self.value
    }

    /// Removes both markers and their padding spaces.
    pub fn unmark(&self) -> String {
        let v = &self.value;
        let open_end = self.open_at + OPEN_MARKER.len() + 1;
        let close_start = self.close_at - 1;
        let mut out = String::with_capacity(v.len());
        out.push_str(&v[..self.open_at]);
        out.push_str(&v[open_end..close_start]);
        out.push_str(&v[self.close_at + CLOSE_MARKER.len()..]);
        out
    }

    /// The mention text between the markers.
    pub fn mention(&self) -> &str {
        &self.value[self.open_at + OPEN_MARKER.len() + 1..self.close_at - 1]
    }
}

impl fmt::Display for MarkedContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

/// Wraps the instance mention between `<s> ` and ` </s>`.
pub fn mark_mention(instance: &EdInstance) -> Result<MarkedContext, CoreError> {
    mark_span(instance.text(), instance.mention())
}

pub(crate) fn mark_span(text: &str, span: MentionSpan) -> Result<MarkedContext, CoreError> {
    span.validate(text)?;
    if text.contains(OPEN_MARKER) || text.contains(CLOSE_MARKER) {
        return Err(CoreError::MarkerInText);
    }
    let range = span.byte_range(text);
    let mut value = String::with_capacity(text.len() + OPEN_MARKER.len() + CLOSE_MARKER.len() + 2);
    value.push_str(&text[..range.start]);
    let open_at = value.len();
    value.push_str(OPEN_MARKER);
    value.push(' ');
    value.push_str(&text[range.clone()]);
    value.push(' ');
    let close_at = value.len();
    value.push_str(CLOSE_MARKER);
    value.push_str(&text[range.end..]);
    Ok(MarkedContext {
        value,
        open_at,
        close_at,
    })
}
