//! Generators and brute-force oracles shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashSet};
use std::hash::{Hash, Hasher};

use edkit::scoring::{ScorerError, TokenScorer};
use edkit::tokenizer::{TokenId, Tokenizer, WordTokenizer};
use edkit::types::{normalize_title, CandidateRepresentation, EdInstance, EntityDescription, MentionSpan};
use rand::seq::SliceRandom;
use rand::Rng;

pub const WORDS: &[&str] = &[
    "a", "b", "c", "ab", "ba", "abc", "x", "yy", "Zed", "São", "Paulo", "FC", "river", "1998",
];

fn phrase<R: Rng>(rng: &mut R, max_words: usize) -> String {
    let n = rng.gen_range(1..=max_words);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// `n` candidates with distinct titles and distinct surfaces, roughly half of
/// them with a description.
pub fn random_reps<R: Rng>(rng: &mut R, n: usize) -> Vec<CandidateRepresentation> {
    let mut titles = HashSet::new();
    let mut surfaces = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let title = normalize_title(&phrase(rng, 3)).unwrap();
        if titles.contains(&title) {
            continue;
        }
        let desc = rng
            .gen_bool(0.5)
            .then(|| EntityDescription::en(phrase(rng, 4)).unwrap());
        let rep = CandidateRepresentation::new(title.clone(), desc);
        if surfaces.insert(rep.surface().to_string()) {
            titles.insert(title);
            out.push(rep);
        }
    }
    out
}

/// Tokenizer covering every piece of every surface.
pub fn tokenizer_for(reps: &[CandidateRepresentation]) -> WordTokenizer {
    WordTokenizer::from_texts(reps.iter().map(|r| r.surface()))
}

/// An instance whose candidates are the titles of `reps`, with a random gold
/// among them and a random surrounding text.
pub fn instance_for<R: Rng>(rng: &mut R, id: usize, reps: &[CandidateRepresentation]) -> EdInstance {
    let left = if rng.gen_bool(0.5) { phrase(rng, 5) + " " } else { String::new() };
    let mention = phrase(rng, 2);
    let right = if rng.gen_bool(0.5) { " ".to_string() + &phrase(rng, 5) } else { String::new() };
    let start = left.chars().count();
    let end = start + mention.chars().count();
    let gold = reps.choose(rng).map(|r| r.title().clone());
    EdInstance::new(
        format!("inst{id}"),
        format!("{left}{mention}{right}"),
        MentionSpan { start, end },
        reps.iter().map(|r| r.title().clone()).collect(),
        gold,
    )
    .unwrap()
}

/// Summed log-probability of one full sequence (eos included) under `scorer`,
/// asking at each step for every token that continues some sequence in `all`.
pub fn sequence_score<S: TokenScorer + ?Sized>(
    scorer: &S,
    context: &str,
    all: &[Vec<TokenId>],
    seq: &[TokenId],
) -> f64 {
    let mut total = 0.0;
    for i in 0..seq.len() {
        let allowed = brute_allowed(all, &seq[..i]);
        let lp = scorer.next_logprobs(context, &seq[..i], &allowed).unwrap();
        total += lp.iter().find(|(t, _)| *t == seq[i]).unwrap().1;
    }
    total
}

/// Scores every candidate completely and returns the best index: highest
/// score, then smallest surface.
pub fn exhaustive_argmax<S, T>(
    reps: &[CandidateRepresentation],
    tok: &T,
    scorer: &S,
    context: &str,
) -> (usize, f64)
where
    S: TokenScorer + ?Sized,
    T: Tokenizer + ?Sized,
{
    let seqs: Vec<Vec<TokenId>> = reps
        .iter()
        .map(|r| {
            let mut seq = tok.encode(r.surface()).unwrap();
            seq.push(tok.eos_id());
            seq
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in reps.iter().enumerate() {
        let s = sequence_score(scorer, context, &seqs, &seqs[i]);
        let better = match best {
            None => true,
            Some((j, b)) => s > b || (s == b && r.surface() < reps[j].surface()),
        };
        if better {
            best = Some((i, s));
        }
    }
    best.unwrap()
}

/// Every token that extends `prefix` along some sequence.
pub fn brute_allowed(seqs: &[Vec<TokenId>], prefix: &[TokenId]) -> Vec<TokenId> {
    let set: BTreeSet<TokenId> = seqs
        .iter()
        .filter(|s| s.len() > prefix.len() && s.starts_with(prefix))
        .map(|s| s[prefix.len()])
        .collect();
    set.into_iter().collect()
}

/// Every prefix (empty and complete ones included) of every sequence.
pub fn all_prefixes(seqs: &[Vec<TokenId>]) -> BTreeSet<Vec<TokenId>> {
    let mut out = BTreeSet::new();
    for s in seqs {
        for k in 0..=s.len() {
            out.insert(s[..k].to_vec());
        }
    }
    out
}

/// Deterministic pseudo-random log-probabilities in [-spread, 0), keyed on
/// (seed, context, prefix, token).
pub struct NoisyScorer {
    pub seed: u64,
    pub spread: f64,
}

impl TokenScorer for NoisyScorer {
    fn next_logprobs(
        &self,
        context: &str,
        prefix: &[TokenId],
        allowed: &[TokenId],
    ) -> Result<Vec<(TokenId, f64)>, ScorerError> {
        Ok(allowed
            .iter()
            .map(|&t| {
                let mut h = DefaultHasher::new();
                (self.seed, context, prefix, t).hash(&mut h);
                let u = (h.finish() >> 11) as f64 / (1u64 << 53) as f64;
                (t, -self.spread * u - 1e-3)
            })
            .collect())
    }
}

/// One line of a minimal synthetic Wikidata dump. Every tenth entity (i % 10
/// == 7) has no English sitelink, another tenth (i % 10 == 8) no description,
/// and every 1000th entity (i % 1000 == 996) reuses its predecessor's title.
pub fn synthetic_entity(i: u64) -> String {
    let title_of = |k: u64| format!("E{:08x}", (k as u32).wrapping_mul(2_654_435_761));
    let title = if i % 1000 == 996 { title_of(i - 1) } else { title_of(i) };
    let sitelinks = if i % 10 == 7 {
        r#""sitelinks":{"frwiki":{"site":"frwiki","title":"x","badges":[]}}"#.to_string()
    } else {
        format!(r#""sitelinks":{{"enwiki":{{"site":"enwiki","title":"{title}","badges":[]}}}}"#)
    };
    let descriptions = if i % 10 == 8 {
        r#""descriptions":{}"#.to_string()
    } else {
        format!(r#""descriptions":{{"en":{{"language":"en","value":"item {i}"}}}}"#)
    };
    format!(r#"{{"type":"item","id":"Q{i}",{descriptions},{sitelinks}}}"#)
}

/// Writes a dump of `n` synthetic entities in the array-per-line layout.
pub fn write_synthetic_dump<W: std::io::Write>(mut w: W, n: u64) -> std::io::Result<()> {
    w.write_all(b"[\n")?;
    for i in 0..n {
        w.write_all(synthetic_entity(i).as_bytes())?;
        w.write_all(if i + 1 < n { b",\n" } else { b"\n" })?;
    }
    w.write_all(b"]\n")?;
    w.flush()
}

/// Entities the synthetic dump should yield, by direct counting.
pub fn synthetic_expectations(n: u64) -> (u64, u64, u64) {
    let sitelinked = (0..n).filter(|i| i % 10 != 7).count() as u64;
    let described = (0..n).filter(|i| i % 10 != 7 && i % 10 != 8).count() as u64;
    // repeats and their predecessors (i % 10 == 5) are both emitted
    let collisions = (0..n).filter(|&i| i % 1000 == 996).count() as u64;
    (sitelinked, described, collisions)
}

fn gold_instance(id: &str, mention: &str, gold: &str) -> EdInstance {
    let gold = normalize_title(gold).unwrap();
    EdInstance::new(
        id,
        format!("{mention} was mentioned"),
        MentionSpan {
            start: 0,
            end: mention.chars().count(),
        },
        vec![gold.clone()],
        Some(gold),
    )
    .unwrap()
}

/// Seven training mentions and ten test mentions whose frequency classes are
/// written out by hand (default policy) next to each test instance.
///
/// Training counts: Paris {Paris: 2, Paris Hilton: 1}; Jordan {Jordan: 1,
/// Michael Jordan: 1} (tie, so "Jordan" is most frequent); Hilton {Hilton
/// Hotels: 1}; MJ {Michael Jordan: 1}.
pub fn frequency_fixture() -> (Vec<EdInstance>, Vec<(EdInstance, &'static [&'static str])>) {
    let train = vec![
        gold_instance("tr1", "Paris", "Paris"),
        gold_instance("tr2", "Paris", "Paris"),
        gold_instance("tr3", "Paris", "Paris Hilton"),
        gold_instance("tr4", "Jordan", "Michael Jordan"),
        gold_instance("tr5", "Jordan", "Jordan"),
        gold_instance("tr6", "Hilton", "Hilton Hotels"),
        gold_instance("tr7", "MJ", "Michael Jordan"),
    ];
    let test: Vec<(EdInstance, &'static [&'static str])> = vec![
        (gold_instance("t1", "Paris", "Paris"), &["MFC"]),
        (gold_instance("t2", "Paris", "Paris Hilton"), &["LFC"]),
        (gold_instance("t3", "Jordan", "Jordan"), &["MFC"]),
        (gold_instance("t4", "Jordan", "Michael Jordan"), &["LFC"]),
        (gold_instance("t5", "Hilton", "Paris Hilton"), &["UEM"]),
        (gold_instance("t6", "Paris", "Paris, Texas"), &["UE", "UEM"]),
        (gold_instance("t7", "Lutetia", "Paris"), &["UEM", "UM"]),
        (gold_instance("t8", "Lutetia", "Lutetia (Roman city)"), &["UE", "UEM", "UM"]),
        (gold_instance("t9", "MJ", "Michael Jordan"), &["MFC"]),
        (gold_instance("t10", "Jordan", "Hilton Hotels"), &["UEM"]),
    ];
    (train, test)
}
