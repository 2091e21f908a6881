//! Streaming ingestion of Wikidata entity dumps into a title → description
//! map, and the sorted TSV form that map is persisted in.
//!
//! The dump is a JSON array with one entity per line. Only two paths are read
//! from each entity: `sitelinks.enwiki.title` and
//! `descriptions.<lang>.value`; everything else is skipped without being
//! materialized.

use std::borrow::Cow;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::de::{self, DeserializeSeed, Deserializer, IgnoredAny, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};

use crate::types::{normalize_title, EntityDescription, EntityTitle};

const HEADER_TAG: &str = "#edkit-descriptions";
const BATCH_LINES: usize = 1 << 15;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("corrupt or unreadable dump stream: {0}")]
    CorruptStream(#[source] io::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid description map at line {line}: {reason}")]
    InvalidMap { line: usize, reason: String },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// Metadata stored in the TSV header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapMeta {
    pub dump_date: String,
    pub language: String,
}

impl Default for MapMeta {
    fn default() -> Self {
        Self {
            dump_date: "unknown".into(),
            language: "en".into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct MapEntry {
    start: u64,
    title_len: u32,
    desc_len: u32,
}

/// Immutable map from normalized Wikipedia title to description.
///
/// Keys and values live in one string arena; entries are sorted by title
/// bytes so lookups are binary searches and serialization is ordered.
#[derive(Clone)]
pub struct DescriptionMap {
    arena: String,
    entries: Vec<MapEntry>,
    meta: MapMeta,
}

impl fmt::Debug for DescriptionMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DescriptionMap")
            .field("entries", &self.entries.len())
            .field("meta", &self.meta)
            .finish()
    }
}

impl Default for DescriptionMap {
    fn default() -> Self {
        Self::empty(MapMeta::default())
    }
}

impl DescriptionMap {
    pub fn empty(meta: MapMeta) -> Self {
        Self {
            arena: String::new(),
            entries: Vec::new(),
            meta,
        }
    }

    /// Builds a map from pairs; on repeated titles the first pair wins.
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (EntityTitle, EntityDescription)>,
    {
        let mut b = MapBuilder::default();
        for (t, d) in pairs {
            b.push(t.as_str(), d.as_str());
        }
        b.finish(MapMeta::default()).0
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn meta(&self) -> &MapMeta {
        &self.meta
    }

    fn title_at(&self, e: &MapEntry) -> &str {
        let s = e.start as usize;
        &self.arena[s..s + e.title_len as usize]
    }

    fn desc_at(&self, e: &MapEntry) -> &str {
        let s = e.start as usize + e.title_len as usize;
        &self.arena[s..s + e.desc_len as usize]
    }

    /// Raw description text for a title.
    pub fn get(&self, title: &str) -> Option<&str> {
        self.entries
            .binary_search_by(|e| self.title_at(e).as_bytes().cmp(title.as_bytes()))
            .ok()
            .map(|i| self.desc_at(&self.entries[i]))
    }

    /// Description for `title`, or `None` when the mapping failed.
    pub fn lookup(&self, title: &EntityTitle) -> Option<EntityDescription> {
        self.get(title.as_str())
            .and_then(|d| EntityDescription::new(d, self.meta.language.clone()).ok())
    }

    /// Entries in title byte order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.entries
            .iter()
            .map(move |e| (self.title_at(e), self.desc_at(e)))
    }

    /// Writes the sorted TSV form with its one-line header.
    pub fn write_tsv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut w = BufWriter::with_capacity(1 << 20, w);
        writeln!(
            w,
            "{HEADER_TAG}\tlanguage={}\tdump={}\tentries={}",
            self.meta.language,
            self.meta.dump_date,
            self.entries.len()
        )?;
        for (t, d) in self.iter() {
            w.write_all(t.as_bytes())?;
            w.write_all(b"\t")?;
            w.write_all(d.as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        self.write_tsv(File::create(path)?)
    }

    /// Reads the TSV form. Titles are re-normalized; a header is optional.
    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self, IngestError> {
        let mut meta = MapMeta::default();
        let mut declared: Option<usize> = None;
        let mut b = MapBuilder::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if i == 0 && line.starts_with('#') {
                for field in line.split('\t').skip(1) {
                    match field.split_once('=') {
                        Some(("language", v)) => meta.language = v.to_string(),
                        Some(("dump", v)) => meta.dump_date = v.to_string(),
                        Some(("entries", v)) => {
                            declared = Some(v.parse().map_err(|_| IngestError::InvalidMap {
                                line: lineno,
                                reason: format!("bad entry count {v:?}"),
                            })?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (t, d) = line.split_once('\t').ok_or_else(|| IngestError::InvalidMap {
                line: lineno,
                reason: "missing tab separator".into(),
            })?;
            let title = normalize_title(t).map_err(|e| IngestError::InvalidMap {
                line: lineno,
                reason: e.to_string(),
            })?;
            if d.is_empty() {
                return Err(IngestError::InvalidMap {
                    line: lineno,
                    reason: "empty description".into(),
                });
            }
            b.push(title.as_str(), d);
        }
        let (map, _) = b.finish(meta);
        if let Some(n) = declared {
            if n != map.len() {
                return Err(IngestError::InvalidMap {
                    line: 1,
                    reason: format!("header declares {n} entries, found {}", map.len()),
                });
            }
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        Self::read_tsv(BufReader::new(File::open(path)?))
    }
}

/// Accumulates entries in arrival order; `finish` sorts and drops repeats.
#[derive(Default)]
struct MapBuilder {
    arena: String,
    entries: Vec<MapEntry>,
}

impl MapBuilder {
    fn push(&mut self, title: &str, desc: &str) {
        let start = self.arena.len() as u64;
        self.arena.push_str(title);
        self.arena.push_str(desc);
        self.entries.push(MapEntry {
            start,
            title_len: title.len() as u32,
            desc_len: desc.len() as u32,
        });
    }

    /// Returns the map and the number of dropped repeated titles.
    fn finish(self, meta: MapMeta) -> (DescriptionMap, u64) {
        let MapBuilder { arena, mut entries } = self;
        let key = |e: &MapEntry| {
            let s = e.start as usize;
            &arena.as_bytes()[s..s + e.title_len as usize]
        };
        // arena offsets grow in arrival order, so `start` breaks ties by first occurrence
        entries.par_sort_unstable_by(|a, b| key(a).cmp(key(b)).then(a.start.cmp(&b.start)));
        let before = entries.len();
        entries.dedup_by(|later, earlier| key(later) == key(earlier));
        let collisions = (before - entries.len()) as u64;
        (
            DescriptionMap {
                arena,
                entries,
                meta,
            },
            collisions,
        )
    }
}

/// Counters collected while scanning a dump.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub entities_scanned: u64,
    pub with_enwiki_sitelink: u64,
    /// Entities with both an enwiki sitelink and a description.
    pub with_description: u64,
    pub emitted: u64,
    pub malformed_lines: u64,
    /// Sitelink titles that failed normalization.
    pub invalid_titles: u64,
    /// Entities dropped because an earlier entity had the same title.
    pub collisions: u64,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub language: String,
    /// Worker threads used for parsing; 1 parses on the calling thread.
    pub jobs: usize,
    pub dump_date: Option<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            language: "en".into(),
            jobs: 1,
            dump_date: None,
        }
    }
}

/// Reads a dump (gzip, bzip2 or plain JSON, detected from its first bytes).
pub fn ingest_dump<R: Read>(
    reader: R,
    opts: &IngestOptions,
) -> Result<(DescriptionMap, IngestStats), IngestError> {
    let mut raw = BufReader::with_capacity(1 << 16, reader);
    let head = raw.fill_buf().map_err(IngestError::CorruptStream)?.to_vec();
    let decoded: Box<dyn Read> = if head.starts_with(&[0x1f, 0x8b]) {
        Box::new(flate2::bufread::MultiGzDecoder::new(raw))
    } else if head.starts_with(b"BZh") {
        Box::new(bzip2::bufread::MultiBzDecoder::new(raw))
    } else {
        Box::new(raw)
    };
    let lines = BufReader::with_capacity(1 << 20, decoded);

    if opts.jobs <= 1 {
        scan(lines, opts, |batch| batch.iter().map(|l| parse_line(l, &opts.language)).collect())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| IngestError::Pool(e.to_string()))?;
        scan(lines, opts, |batch| {
            pool.install(|| {
                batch
                    .par_iter()
                    .map(|l| parse_line(l, &opts.language))
                    .collect()
            })
        })
    }
}

/// Opens `path` and ingests it. The dump date defaults to the first run of
/// eight digits in the file name (e.g. `wikidata-20220613-all.json.gz`).
pub fn ingest_path(
    path: impl AsRef<Path>,
    opts: &IngestOptions,
) -> Result<(DescriptionMap, IngestStats), IngestError> {
    let path = path.as_ref();
    let mut opts = opts.clone();
    if opts.dump_date.is_none() {
        opts.dump_date = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(date_in_name);
    }
    ingest_dump(File::open(path)?, &opts)
}

fn date_in_name(name: &str) -> Option<String> {
    let b = name.as_bytes();
    (0..b.len().saturating_sub(7)).find_map(|i| {
        let run = &b[i..i + 8];
        let bounded = (i == 0 || !b[i - 1].is_ascii_digit())
            && b.get(i + 8).is_none_or(|c| !c.is_ascii_digit());
        (bounded && run.iter().all(u8::is_ascii_digit)).then(|| name[i..i + 8].to_string())
    })
}

fn scan<R, F>(
    mut lines: R,
    opts: &IngestOptions,
    parse_batch: F,
) -> Result<(DescriptionMap, IngestStats), IngestError>
where
    R: BufRead,
    F: Fn(&[Vec<u8>]) -> Vec<LineOutcome>,
{
    let mut stats = IngestStats::default();
    let mut builder = MapBuilder::default();
    let mut batch: Vec<Vec<u8>> = Vec::with_capacity(BATCH_LINES);
    let mut spare: Vec<Vec<u8>> = Vec::new();
    loop {
        let mut eof = false;
        while batch.len() < BATCH_LINES {
            let mut buf = spare.pop().unwrap_or_default();
            buf.clear();
            let n = lines
                .read_until(b'\n', &mut buf)
                .map_err(IngestError::CorruptStream)?;
            if n == 0 {
                eof = true;
                break;
            }
            batch.push(buf);
        }
        for outcome in parse_batch(&batch) {
            stats.record(&outcome);
            if let LineOutcome::Entry { title, description } = outcome {
                builder.push(title.as_str(), &description);
            }
        }
        spare.append(&mut batch);
        if eof {
            break;
        }
    }
    let meta = MapMeta {
        dump_date: opts.dump_date.clone().unwrap_or_else(|| "unknown".into()),
        language: opts.language.clone(),
    };
    let (map, collisions) = builder.finish(meta);
    stats.collisions = collisions;
    stats.emitted -= collisions;
    Ok((map, stats))
}

#[derive(Debug)]
enum LineOutcome {
    Structural,
    Malformed,
    NoSitelink,
    NoDescription,
    InvalidTitle,
    Entry {
        title: EntityTitle,
        description: String,
    },
}

impl IngestStats {
    fn record(&mut self, o: &LineOutcome) {
        match o {
            LineOutcome::Structural => return,
            LineOutcome::Malformed => {
                self.malformed_lines += 1;
                return;
            }
            _ => {}
        }
        self.entities_scanned += 1;
        if matches!(o, LineOutcome::NoSitelink) {
            return;
        }
        self.with_enwiki_sitelink += 1;
        if matches!(o, LineOutcome::NoDescription) {
            return;
        }
        self.with_description += 1;
        match o {
            LineOutcome::InvalidTitle => self.invalid_titles += 1,
            LineOutcome::Entry { .. } => self.emitted += 1,
            _ => unreachable!(),
        }
    }
}

fn parse_line(raw: &[u8], lang: &str) -> LineOutcome {
    let line = raw.trim_ascii();
    let line = line.strip_suffix(b",").unwrap_or(line).trim_ascii_end();
    if line.is_empty() || line == b"[" || line == b"]" {
        return LineOutcome::Structural;
    }
    let mut de = serde_json::Deserializer::from_slice(line);
    let entity = match (EntitySeed { lang }).deserialize(&mut de).and_then(|e| {
        de.end()?;
        Ok(e)
    }) {
        Ok(e) => e,
        Err(_) => return LineOutcome::Malformed,
    };
    let Some(title) = entity.enwiki_title else {
        return LineOutcome::NoSitelink;
    };
    let description = match entity.description {
        Some(d) if !d.is_empty() => d,
        _ => return LineOutcome::NoDescription,
    };
    let Ok(title) = normalize_title(&title) else {
        return LineOutcome::InvalidTitle;
    };
    let description = if description.contains(['\t', '\n', '\r']) {
        description.replace(['\t', '\n', '\r'], " ")
    } else {
        description
    };
    LineOutcome::Entry { title, description }
}

#[derive(Debug, Default)]
struct ParsedEntity {
    enwiki_title: Option<String>,
    description: Option<String>,
}

#[derive(Deserialize)]
struct Sitelink<'a> {
    #[serde(borrow)]
    title: Cow<'a, str>,
}

#[derive(Deserialize)]
struct Term<'a> {
    #[serde(borrow)]
    value: Cow<'a, str>,
}

struct EntitySeed<'l> {
    lang: &'l str,
}

impl<'de> DeserializeSeed<'de> for EntitySeed<'_> {
    type Value = ParsedEntity;

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<ParsedEntity, D::Error> {
        d.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for EntitySeed<'_> {
    type Value = ParsedEntity;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a Wikidata entity object")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<ParsedEntity, A::Error> {
        let mut out = ParsedEntity::default();
        while let Some(key) = map.next_key::<Cow<'de, str>>()? {
            match key.as_ref() {
                "sitelinks" => {
                    let link: Option<Sitelink> = map.next_value_seed(PickKey::new("enwiki"))?;
                    out.enwiki_title = link.map(|l| l.title.into_owned());
                }
                "descriptions" => {
                    let term: Option<Term> = map.next_value_seed(PickKey::new(self.lang))?;
                    out.description = term.map(|t| t.value.into_owned());
                }
                _ => {
                    map.next_value::<IgnoredAny>()?;
                }
            }
        }
        Ok(out)
    }
}

/// Deserializes one value out of a JSON object, skipping the others. Empty
/// objects are sometimes serialized as `[]`, which yields `None`.
struct PickKey<'k, T> {
    key: &'k str,
    _marker: std::marker::PhantomData<T>,
}

impl<'k, T> PickKey<'k, T> {
    fn new(key: &'k str) -> Self {
        Self {
            key,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<'de, T: Deserialize<'de>> DeserializeSeed<'de> for PickKey<'_, T> {
    type Value = Option<T>;

    fn deserialize<D: Deserializer<'de>>(self, d: D) -> Result<Option<T>, D::Error> {
        d.deserialize_any(self)
    }
}

impl<'de, T: Deserialize<'de>> Visitor<'de> for PickKey<'_, T> {
    type Value = Option<T>;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "an object possibly containing {:?}", self.key)
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Option<T>, A::Error> {
        let mut found = None;
        while let Some(key) = map.next_key::<Cow<'de, str>>()? {
            if found.is_none() && key == self.key {
                found = Some(map.next_value::<T>()?);
            } else {
                map.next_value::<IgnoredAny>()?;
            }
        }
        Ok(found)
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Option<T>, A::Error> {
        if seq.next_element::<IgnoredAny>()?.is_some() {
            return Err(de::Error::invalid_type(de::Unexpected::Seq, &self));
        }
        Ok(None)
    }

    fn visit_unit<E: de::Error>(self) -> Result<Option<T>, E> {
        Ok(None)
    }
}
