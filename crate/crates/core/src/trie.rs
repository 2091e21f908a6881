//! Token-level prefix tree over tokenized candidate surfaces.
//!
//! Each candidate is inserted as `encode(surface) ++ [eos]`; the node reached
//! through the end-of-sequence edge is a terminal carrying the candidate
//! index. Walking the trie from the root therefore enumerates exactly the
//! candidate sequences, which is what constrains generative decoding.

use std::collections::HashMap;

use smallvec::SmallVec;

use crate::tokenizer::{TokenId, Tokenizer, TokenizerError};
use crate::types::CandidateRepresentation;

/// Fan-out above which a node switches from a sorted vector to a hash map.
const SMALL_FANOUT: usize = 16;

/// Index of a node inside a [`CandidateTrie`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrieError {
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("tokenizer does not round-trip surface {surface:?} (decoded {decoded:?})")]
    TokenizerNotRoundTrip { surface: String, decoded: String },
    #[error("surface {0:?} encodes to the end-of-sequence token")]
    EosInSurface(String),
    #[error("surfaces {0:?} and {1:?} share a token sequence")]
    DuplicateSequence(String, String),
    #[error("prefix leaves the trie at position {0}")]
    InvalidPrefix(usize),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

#[derive(Debug, Clone)]
enum Children {
    Small(SmallVec<[(TokenId, NodeId); 4]>),
    Large(HashMap<TokenId, NodeId>),
}

impl Children {
    fn get(&self, tok: TokenId) -> Option<NodeId> {
        match self {
            Children::Small(v) => v
                .binary_search_by_key(&tok, |&(t, _)| t)
                .ok()
                .map(|i| v[i].1),
            Children::Large(m) => m.get(&tok).copied(),
        }
    }

    fn insert(&mut self, tok: TokenId, node: NodeId) {
        match self {
            Children::Small(v) => {
                let at = v.binary_search_by_key(&tok, |&(t, _)| t).unwrap_err();
                v.insert(at, (tok, node));
                if v.len() > SMALL_FANOUT {
                    *self = Children::Large(v.iter().copied().collect());
                }
            }
            Children::Large(m) => {
                m.insert(tok, node);
            }
        }
    }

    /// Children in ascending token order.
    fn sorted(&self) -> Vec<(TokenId, NodeId)> {
        match self {
            Children::Small(v) => v.to_vec(),
            Children::Large(m) => {
                let mut v: Vec<_> = m.iter().map(|(&t, &n)| (t, n)).collect();
                v.sort_unstable_by_key(|&(t, _)| t);
                v
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    children: Children,
    /// Candidate index, set on nodes reached through an eos edge.
    terminal: Option<u32>,
    /// Smallest surface rank among candidates below this node.
    best_rank: u32,
}

/// Prefix tree over the token sequences of a candidate set.
#[derive(Debug, Clone)]
pub struct CandidateTrie {
    nodes: Vec<Node>,
    eos: TokenId,
    /// Position of each candidate in lexicographic surface order.
    ranks: Vec<u32>,
    sequences: Vec<Vec<TokenId>>,
}

impl CandidateTrie {
    pub fn eos_id(&self) -> TokenId {
        self.eos
    }

    /// Number of inserted candidates.
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Token sequence of candidate `i`, without the trailing eos.
    pub fn sequence(&self, i: usize) -> &[TokenId] {
        &self.sequences[i]
    }

    /// Rank of candidate `i` when surfaces are sorted ascending.
    pub fn surface_rank(&self, i: usize) -> u32 {
        self.ranks[i]
    }

    pub fn child(&self, node: NodeId, tok: TokenId) -> Option<NodeId> {
        self.nodes[node.0 as usize].children.get(tok)
    }

    /// Outgoing edges of `node` in ascending token order.
    pub fn children(&self, node: NodeId) -> Vec<(TokenId, NodeId)> {
        self.nodes[node.0 as usize].children.sorted()
    }

    /// Candidate index if `node` is a terminal.
    pub fn terminal(&self, node: NodeId) -> Option<usize> {
        self.nodes[node.0 as usize].terminal.map(|i| i as usize)
    }

    /// Smallest surface rank reachable from `node`.
    pub fn best_rank(&self, node: NodeId) -> u32 {
        self.nodes[node.0 as usize].best_rank
    }

    /// Follows `prefix` from the root.
    pub fn walk(&self, prefix: &[TokenId]) -> Result<NodeId, TrieError> {
        let mut node = NodeId::ROOT;
        for (i, &t) in prefix.iter().enumerate() {
            node = self.child(node, t).ok_or(TrieError::InvalidPrefix(i))?;
        }
        Ok(node)
    }

    /// Tokens that may follow `prefix`, ascending. Contains the eos id exactly
    /// when `prefix` spells out a whole candidate.
    pub fn allowed_next(&self, prefix: &[TokenId]) -> Result<Vec<TokenId>, TrieError> {
        let node = self.walk(prefix)?;
        Ok(self.children(node).into_iter().map(|(t, _)| t).collect())
    }

    fn new_node(&mut self) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            children: Children::Small(SmallVec::new()),
            terminal: None,
            best_rank: u32::MAX,
        });
        id
    }

    fn insert(&mut self, seq: &[TokenId], index: u32, rank: u32) -> Result<(), u32> {
        let mut node = NodeId::ROOT;
        self.nodes[0].best_rank = self.nodes[0].best_rank.min(rank);
        let eos = self.eos;
        for &t in seq.iter().chain(std::iter::once(&eos)) {
            node = match self.nodes[node.0 as usize].children.get(t) {
                Some(n) => n,
                None => {
                    let n = self.new_node();
                    self.nodes[node.0 as usize].children.insert(t, n);
                    n
                }
            };
            let slot = &mut self.nodes[node.0 as usize];
            slot.best_rank = slot.best_rank.min(rank);
        }
        let slot = &mut self.nodes[node.0 as usize];
        match slot.terminal {
            Some(prev) => Err(prev),
            None => {
                slot.terminal = Some(index);
                Ok(())
            }
        }
    }
}

/// Builds the trie, checking that the tokenizer round-trips every surface.
pub fn build_trie<T: Tokenizer + ?Sized>(
    reps: &[CandidateRepresentation],
    tokenizer: &T,
) -> Result<CandidateTrie, TrieError> {
    if reps.is_empty() {
        return Err(TrieError::EmptyCandidateSet);
    }
    let eos = tokenizer.eos_id();
    let mut order: Vec<usize> = (0..reps.len()).collect();
    order.sort_by(|&a, &b| reps[a].surface().cmp(reps[b].surface()));
    let mut ranks = vec![0u32; reps.len()];
    for (rank, &i) in order.iter().enumerate() {
        ranks[i] = rank as u32;
    }

    let mut trie = CandidateTrie {
        nodes: Vec::new(),
        eos,
        ranks,
        sequences: Vec::with_capacity(reps.len()),
    };
    trie.new_node();
    for (i, r) in reps.iter().enumerate() {
        let surface = r.surface();
        let seq = tokenizer.encode(surface)?;
        let decoded = tokenizer.decode(&seq)?;
        if decoded != surface {
            return Err(TrieError::TokenizerNotRoundTrip {
                surface: surface.to_string(),
                decoded,
            });
        }
        if seq.contains(&eos) {
            return Err(TrieError::EosInSurface(surface.to_string()));
        }
        if let Err(prev) = trie.insert(&seq, i as u32, trie.ranks[i]) {
            return Err(TrieError::DuplicateSequence(
                reps[prev as usize].surface().to_string(),
                surface.to_string(),
            ));
        }
        trie.sequences.push(seq);
    }
    debug_assert_eq!(
        trie.nodes.iter().filter(|n| n.terminal.is_some()).count(),
        reps.len()
    );
    Ok(trie)
}
