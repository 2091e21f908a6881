//! Benchmark readers and corpus statistics.
//!
//! Two input formats are understood: the canonical JSONL interchange format
//! (one instance per line, character-offset spans) and the AIDA-CoNLL
//! token-per-line format. Candidate sets may be supplied separately as a
//! JSONL sidecar keyed by mention id.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::{normalize_title, CoreError, EdInstance, EntityTitle, MentionSpan};
use crate::wikidata::DescriptionMap;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid span at line {line}: {source}")]
    InvalidSpan {
        line: usize,
        #[source]
        source: CoreError,
    },
    #[error("training instance {0:?} has no gold entity")]
    MissingGold(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    CanonicalJsonl,
    AidaConll,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "canonical-jsonl" | "jsonl" => Ok(Self::CanonicalJsonl),
            "aida-conll" | "aida" => Ok(Self::AidaConll),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

/// Counters reported by a reader once iteration is over.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReadCounters {
    pub instances: u64,
    /// Candidate titles dropped because they repeated within one instance.
    pub duplicate_candidates: u64,
    pub gold_not_in_candidates: u64,
    /// AIDA mentions without a knowledge-base entity (`--NME--`).
    pub nme_skipped: u64,
    /// Instances for which the sidecar had no candidate list.
    pub missing_candidates: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalLine {
    id: String,
    text: String,
    mention: MentionSpan,
    candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SidecarLine {
    mention_id: String,
    candidates: Vec<String>,
}

/// Candidate lists keyed by mention id.
#[derive(Debug, Clone, Default)]
pub struct CandidateSidecar {
    sets: HashMap<String, Vec<EntityTitle>>,
}

impl CandidateSidecar {
    pub fn read<R: BufRead>(r: R) -> Result<Self, DatasetError> {
        let mut sets = HashMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |reason: String| DatasetError::Parse {
                line: i + 1,
                reason,
            };
            let rec: SidecarLine = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
            let titles = rec
                .candidates
                .iter()
                .map(|c| normalize_title(c).map_err(|e| parse(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            sets.insert(rec.mention_id, titles);
        }
        Ok(Self { sets })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn get(&self, mention_id: &str) -> Option<&[EntityTitle]> {
        self.sets.get(mention_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Options for [`read_dataset`].
#[derive(Debug, Clone, Default)]
pub struct ReadOptions {
    /// Replaces each instance's candidates with the sidecar's list.
    pub sidecar: Option<CandidateSidecar>,
    /// AIDA only: keep documents of one split.
    pub aida_split: Option<AidaSplit>,
}

/// Standard AIDA-CoNLL splits, identified by the document header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AidaSplit {
    Train,
    TestA,
    TestB,
}

impl AidaSplit {
    fn of_document(doc_id: &str) -> Self {
        if doc_id.contains("testa") {
            Self::TestA
        } else if doc_id.contains("testb") {
            Self::TestB
        } else {
            Self::Train
        }
    }
}

impl FromStr for AidaSplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "testa" | "validation" | "dev" => Ok(Self::TestA),
            "testb" | "test" => Ok(Self::TestB),
            other => Err(format!("unknown AIDA split {other:?}")),
        }
    }
}

/// Streaming dataset reader. Yields instances in file order.
pub struct DatasetReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    format: DatasetFormat,
    opts: ReadOptions,
    counters: ReadCounters,
    pending: std::collections::VecDeque<EdInstance>,
    // AIDA: header of the document following the one being buffered
    next_doc: Option<String>,
    done: bool,
}

/// Opens a dataset file.
pub fn read_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
    opts: ReadOptions,
) -> Result<DatasetReader<BufReader<File>>, DatasetError> {
    Ok(DatasetReader::new(
        BufReader::new(File::open(path)?),
        format,
        opts,
    ))
}

impl<R: BufRead> DatasetReader<R> {
    pub fn new(reader: R, format: DatasetFormat, opts: ReadOptions) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            format,
            opts,
            counters: ReadCounters::default(),
            pending: Default::default(),
            next_doc: None,
            done: false,
        }
    }

    pub fn counters(&self) -> &ReadCounters {
        &self.counters
    }

    /// Reads everything, returning the instances and the final counters.
    pub fn collect_all(mut self) -> Result<(Vec<EdInstance>, ReadCounters), DatasetError> {
        let mut out = Vec::new();
        for inst in self.by_ref() {
            out.push(inst?);
        }
        Ok((out, self.counters))
    }

    fn finish_instance(&mut self, inst: EdInstance, dropped: usize) -> EdInstance {
        let (inst, dropped) = match &self.opts.sidecar {
            Some(sc) => match sc.get(inst.id()) {
                Some(c) => {
                    let c = c.to_vec();
                    inst.with_candidates(c)
                }
                None => {
                    self.counters.missing_candidates += 1;
                    inst.with_candidates(Vec::new())
                }
            },
            None => (inst, dropped),
        };
        self.counters.duplicate_candidates += dropped as u64;
        self.counters.instances += 1;
        if inst.gold().is_some() && !inst.gold_in_candidates() {
            self.counters.gold_not_in_candidates += 1;
        }
        inst
    }

    fn next_canonical(&mut self) -> Option<Result<EdInstance, DatasetError>> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_canonical(&line));
        }
    }

    fn parse_canonical(&mut self, line: &str) -> Result<EdInstance, DatasetError> {
        let line_no = self.line_no;
        let parse = |reason: String| DatasetError::Parse {
            line: line_no,
            reason,
        };
        let rec: CanonicalLine = serde_json::from_str(line).map_err(|e| parse(e.to_string()))?;
        let candidates = rec
            .candidates
            .iter()
            .map(|c| normalize_title(c).map_err(|e| parse(format!("candidate: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let gold = rec
            .gold
            .as_deref()
            .map(|g| normalize_title(g).map_err(|e| parse(format!("gold: {e}"))))
            .transpose()?;
        let (inst, dropped) =
            EdInstance::new_dedup(rec.id, rec.text, rec.mention, candidates, gold).map_err(
                |e| match e {
                    e @ CoreError::InvalidSpan { .. } => DatasetError::InvalidSpan {
                        line: line_no,
                        source: e,
                    },
                    e => parse(e.to_string()),
                },
            )?;
        Ok(self.finish_instance(inst, dropped))
    }

    fn next_aida(&mut self) -> Option<Result<EdInstance, DatasetError>> {
        loop {
            if let Some(i) = self.pending.pop_front() {
                return Some(Ok(i));
            }
            if self.done {
                return None;
            }
            if let Err(e) = self.read_aida_document() {
                self.done = true;
                return Some(Err(e));
            }
        }
    }

    /// Buffers the instances of the next document into `pending`.
    fn read_aida_document(&mut self) -> Result<(), DatasetError> {
        let mut doc_id = self.next_doc.take();
        let mut tokens: Vec<String> = Vec::new();
        // (first token, token count, raw entity column, starting line)
        let mut mentions: Vec<(usize, usize, String, usize)> = Vec::new();
        loop {
            let line = match self.lines.next() {
                Some(l) => l?,
                None => {
                    self.done = true;
                    break;
                }
            };
            self.line_no += 1;
            if let Some(rest) = line.strip_prefix("-DOCSTART-") {
                let id = rest.trim().trim_start_matches('(').trim_end_matches(')').to_string();
                if doc_id.is_none() && tokens.is_empty() {
                    doc_id = Some(id);
                    continue;
                }
                self.next_doc = Some(id);
                break;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let tok_index = tokens.len();
            tokens.push(cols[0].to_string());
            match cols.get(1).copied() {
                None | Some("") | Some("O") => {}
                Some("B") => {
                    let entity = cols.get(3).copied().unwrap_or("--NME--");
                    mentions.push((tok_index, 1, entity.to_string(), self.line_no));
                }
                Some("I") => match mentions.last_mut() {
                    Some(m) if m.0 + m.1 == tok_index => m.1 += 1,
                    _ => {
                        return Err(DatasetError::Parse {
                            line: self.line_no,
                            reason: "inside-mention tag without a preceding begin tag".into(),
                        })
                    }
                },
                Some(other) => {
                    return Err(DatasetError::Parse {
                        line: self.line_no,
                        reason: format!("unknown mention tag {other:?}"),
                    })
                }
            }
        }
        let doc_id = doc_id.unwrap_or_else(|| "document".into());
        if let Some(split) = self.opts.aida_split {
            if AidaSplit::of_document(&doc_id) != split {
                return Ok(());
            }
        }

        // character offset of each token in the space-joined document text
        let mut starts = Vec::with_capacity(tokens.len());
        let mut pos = 0;
        for t in &tokens {
            starts.push(pos);
            pos += t.chars().count() + 1;
        }
        let text = tokens.join(" ");

        for (k, (first, count, entity, line)) in mentions.into_iter().enumerate() {
            if entity == "--NME--" {
                self.counters.nme_skipped += 1;
                continue;
            }
            let last = first + count - 1;
            let span = MentionSpan {
                start: starts[first],
                end: starts[last] + tokens[last].chars().count(),
            };
            let gold = normalize_title(&unescape_yago(&entity)).map_err(|e| DatasetError::Parse {
                line,
                reason: format!("entity: {e}"),
            })?;
            let inst = EdInstance::new(format!("{doc_id}#{k}"), text.clone(), span, Vec::new(), Some(gold))
                .map_err(|source| DatasetError::InvalidSpan { line, source })?;
            let inst = self.finish_instance(inst, 0);
            self.pending.push_back(inst);
        }
        Ok(())
    }
}

/// Decodes the `\uXXXX` escapes YAGO uses in entity names.
fn unescape_yago(s: &str) -> String {
    if !s.contains("\\u") {
        return s.to_string();
    }
    let mut units: Vec<u16> = Vec::new();
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    let flush = |units: &mut Vec<u16>, out: &mut String| {
        out.extend(char::decode_utf16(units.drain(..)).map(|c| c.unwrap_or('\u{fffd}')));
    };
    while let Some(i) = rest.find("\\u") {
        let hex = rest.get(i + 2..i + 6);
        match hex.and_then(|h| u16::from_str_radix(h, 16).ok()) {
            Some(u) => {
                if i > 0 {
                    flush(&mut units, &mut out);
                    out.push_str(&rest[..i]);
                }
                units.push(u);
                rest = &rest[i + 6..];
            }
            None => {
                flush(&mut units, &mut out);
                out.push_str(&rest[..i + 2]);
                rest = &rest[i + 2..];
            }
        }
    }
    flush(&mut units, &mut out);
    out.push_str(rest);
    out
}

impl<R: BufRead> Iterator for DatasetReader<R> {
    type Item = Result<EdInstance, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.format {
            DatasetFormat::CanonicalJsonl => self.next_canonical(),
            DatasetFormat::AidaConll => self.next_aida(),
        }
    }
}

/// Writes instances in the canonical JSONL format.
pub fn write_canonical<'a, W, I>(mut w: W, instances: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a EdInstance>,
{
    for inst in instances {
        let rec = CanonicalLine {
            id: inst.id().to_string(),
            text: inst.text().to_string(),
            mention: inst.mention(),
            candidates: inst.candidates().iter().map(|c| c.as_str().to_string()).collect(),
            gold: inst.gold().map(|g| g.as_str().to_string()),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Corpus counts with total and unique candidate/failure numbers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub instances: u64,
    pub candidates_total: u64,
    pub candidates_unique: u64,
    /// Candidate occurrences with no description.
    pub failures_total: u64,
    pub failures_unique: u64,
}

/// Counts instances, candidates and description-mapping failures in one pass.
pub fn compute_stats<I>(instances: I, map: &DescriptionMap) -> DatasetStats
where
    I: IntoIterator<Item = EdInstance>,
{
    let mut stats = DatasetStats::default();
    let mut seen: HashSet<EntityTitle> = HashSet::new();
    let mut failed: HashSet<EntityTitle> = HashSet::new();
    for inst in instances {
        stats.instances += 1;
        for c in inst.candidates() {
            stats.candidates_total += 1;
            let miss = map.get(c.as_str()).is_none();
            if miss {
                stats.failures_total += 1;
            }
            if !seen.contains(c) {
                seen.insert(c.clone());
                if miss {
                    failed.insert(c.clone());
                }
            }
        }
    }
    stats.candidates_unique = seen.len() as u64;
    stats.failures_unique = failed.len() as u64;
    stats
}

/// Mention → gold entity frequencies from a training split.
#[derive(Debug, Clone, Default)]
pub struct TrainIndex {
    by_mention: HashMap<String, BTreeMap<EntityTitle, u64>>,
    entities: HashSet<EntityTitle>,
}

impl TrainIndex {
    pub fn mention_seen(&self, mention: &str) -> bool {
        self.by_mention.contains_key(mention)
    }

    pub fn entity_seen(&self, entity: &EntityTitle) -> bool {
        self.entities.contains(entity)
    }

    pub fn pair_count(&self, mention: &str, entity: &EntityTitle) -> u64 {
        self.by_mention
            .get(mention)
            .and_then(|m| m.get(entity))
            .copied()
            .unwrap_or(0)
    }

    /// Most frequent gold entity for a mention; ties go to the
    /// lexicographically smallest title.
    pub fn most_frequent(&self, mention: &str) -> Option<&EntityTitle> {
        let counts = self.by_mention.get(mention)?;
        // BTreeMap iterates titles in ascending order, so keeping the first
        // maximum implements the tie-break
        let mut best: Option<(&EntityTitle, u64)> = None;
        for (t, &n) in counts {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((t, n));
            }
        }
        best.map(|(t, _)| t)
    }

    pub fn mentions(&self) -> usize {
        self.by_mention.len()
    }

    pub fn entities(&self) -> usize {
        self.entities.len()
    }
}

pub fn build_train_index<I>(train: I) -> Result<TrainIndex, DatasetError>
where
    I: IntoIterator<Item = EdInstance>,
{
    let mut index = TrainIndex::default();
    for inst in train {
        let gold = inst
            .gold()
            .ok_or_else(|| DatasetError::MissingGold(inst.id().to_string()))?
            .clone();
        *index
            .by_mention
            .entry(inst.mention_surface())
            .or_default()
            .entry(gold.clone())
            .or_insert(0) += 1;
        index.entities.insert(gold);
    }
    Ok(index)
}
