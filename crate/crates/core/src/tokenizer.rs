//! Tokenizer contract and two self-contained implementations.
//!
//! Trained subword tokenizers live behind the model bridge; the tokenizers
//! here drive the reference scorers and the tests.

use std::collections::HashMap;

/// Token identifier.
pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizerError {
    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),
    #[error("token id {0} is not in the vocabulary")]
    UnknownId(TokenId),
    #[error("decoded bytes are not valid UTF-8")]
    InvalidUtf8,
    #[error("tokenizer backend failed: {0}")]
    Backend(String),
}

/// Maps strings to token ids and back.
pub trait Tokenizer {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, TokenizerError>;
    fn decode(&self, tokens: &[TokenId]) -> Result<String, TokenizerError>;
    /// Start symbol preceding every generated sequence.
    fn bos_id(&self) -> TokenId;
    /// End symbol closing every generated sequence.
    fn eos_id(&self) -> TokenId;
}

impl<T: Tokenizer + ?Sized> Tokenizer for &T {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, TokenizerError> {
        (**self).encode(text)
    }
    fn decode(&self, tokens: &[TokenId]) -> Result<String, TokenizerError> {
        (**self).decode(tokens)
    }
    fn bos_id(&self) -> TokenId {
        (**self).bos_id()
    }
    fn eos_id(&self) -> TokenId {
        (**self).eos_id()
    }
}

/// Anything that can measure a string in tokens. Used for input budgets.
pub trait TokenCounter {
    fn count_tokens(&self, text: &str) -> Result<usize, TokenizerError>;
}

impl<T: Tokenizer + ?Sized> TokenCounter for T {
    fn count_tokens(&self, text: &str) -> Result<usize, TokenizerError> {
        Ok(self.encode(text)?.len())
    }
}

/// Counts whitespace-separated words. Needs no vocabulary.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count_tokens(&self, text: &str) -> Result<usize, TokenizerError> {
        Ok(text.split_whitespace().count())
    }
}

/// Closed-vocabulary tokenizer splitting on single ASCII spaces.
///
/// Splitting on `' '` (rather than on whitespace runs) keeps every string
/// whose pieces are in the vocabulary exactly recoverable, including repeated
/// spaces, which show up as empty pieces. Ids 0 and 1 are reserved for the
/// start and end symbols.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    words: Vec<String>,
    ids: HashMap<String, TokenId>,
}

const WORD_BOS: TokenId = 0;
const WORD_EOS: TokenId = 1;
const WORD_FIRST: TokenId = 2;

impl WordTokenizer {
    /// Builds a vocabulary from the pieces of `texts`, in first-seen order.
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tok = Self {
            words: Vec::new(),
            ids: HashMap::new(),
        };
        for t in texts {
            for piece in t.as_ref().split(' ') {
                tok.add(piece);
            }
        }
        tok
    }

    fn add(&mut self, piece: &str) {
        if !self.ids.contains_key(piece) {
            let id = WORD_FIRST + self.words.len() as TokenId;
            self.words.push(piece.to_string());
            self.ids.insert(piece.to_string(), id);
        }
    }

    /// Vocabulary size, including the two reserved symbols.
    pub fn vocab_size(&self) -> usize {
        self.words.len() + WORD_FIRST as usize
    }
}

impl Tokenizer for WordTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, TokenizerError> {
        text.split(' ')
            .map(|p| {
                self.ids
                    .get(p)
                    .copied()
                    .ok_or_else(|| TokenizerError::UnknownWord(p.to_string()))
            })
            .collect()
    }

    fn decode(&self, tokens: &[TokenId]) -> Result<String, TokenizerError> {
        let mut pieces = Vec::with_capacity(tokens.len());
        for &t in tokens {
            let w = t
                .checked_sub(WORD_FIRST)
                .and_then(|i| self.words.get(i as usize))
                .ok_or(TokenizerError::UnknownId(t))?;
            pieces.push(w.as_str());
        }
        Ok(pieces.join(" "))
    }

    fn bos_id(&self) -> TokenId {
        WORD_BOS
    }

    fn eos_id(&self) -> TokenId {
        WORD_EOS
    }
}

/// UTF-8 byte tokenizer: token = byte value + 2, with 0/1 as start/end.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteTokenizer;

impl Tokenizer for ByteTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, TokenizerError> {
        Ok(text.bytes().map(|b| b as TokenId + 2).collect())
    }

    fn decode(&self, tokens: &[TokenId]) -> Result<String, TokenizerError> {
        let bytes = tokens
            .iter()
            .map(|&t| match t {
                2..=257 => Ok((t - 2) as u8),
                _ => Err(TokenizerError::UnknownId(t)),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        String::from_utf8(bytes).map_err(|_| TokenizerError::InvalidUtf8)
    }

    fn bos_id(&self) -> TokenId {
        0
    }

    fn eos_id(&self) -> TokenId {
        1
    }
}
