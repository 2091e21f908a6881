//! The `edkit` command line.
//!
//! Exit codes: 0 on success, 1 when arguments or referenced files are
//! invalid (checked before any work starts), 2 when the work itself fails.
//! Machine-readable results go to standard output as JSON.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::bridge::BridgeClient;
use crate::datasets::{
    build_train_index, compute_stats, read_dataset, AidaSplit, CandidateSidecar, DatasetFormat, ReadCounters,
    ReadOptions,
};
use crate::evaluation::{
    frequency_class_report, load_predictions, mcnemar, micro_f1, records_against_gold, records_from_lines,
    DatasetReport, EvaluationReport, LfcPolicy, McNemarMethod, PredictionLine,
};
use crate::extractive::{assemble, extract_assembled};
use crate::generative::{decode, BeamConfig};
use crate::reference::{NgramScorer, OracleScorer, OverlapSpanScorer};
use crate::representation::{render_candidates, representation_length_stats, RepresentationMode};
use crate::scoring::{SpanScorer, TokenScorer};
use crate::tokenizer::{ByteTokenizer, TokenCounter, WhitespaceCounter, WordTokenizer};
use crate::types::{CandidateRepresentation, EdInstance};
use crate::wikidata::{ingest_path, DescriptionMap, IngestOptions};

#[derive(Parser, Debug)]
#[command(name = "edkit", version, about = "Entity disambiguation with descriptive candidate representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a title -> description map from a Wikidata JSON dump.
    IngestWikidata {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long, default_value = "en")]
        lang: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Dump date for the map header; defaults to a date in the file name.
        #[arg(long)]
        dump_date: Option<String>,
    },
    /// Instance, candidate and mapping-failure counts.
    Stats {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        descriptions: PathBuf,
    },
    /// Disambiguate a dataset and write predictions as JSON lines.
    Decode {
        #[arg(long, value_enum)]
        mode: Mode,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        descriptions: PathBuf,
        #[arg(long, value_enum)]
        scorer: ScorerKind,
        /// Command line starting the model bridge process.
        #[arg(long)]
        bridge_cmd: Option<String>,
        #[arg(long, default_value_t = 5)]
        beam: usize,
        /// Divide hypothesis scores by length^alpha when ranking.
        #[arg(long)]
        length_penalty: Option<f64>,
        /// Token budget for query plus candidates (extractive only).
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, default_value_t = 2)]
        ngram_order: usize,
        #[arg(long, value_enum, default_value_t = RepArg::WithDescription)]
        representation: RepArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Micro F1 per dataset, averages and optional frequency classes.
    Evaluate {
        /// Predictions file; repeat together with --gold for several datasets.
        #[arg(long, required = true)]
        predictions: Vec<PathBuf>,
        #[arg(long, required = true)]
        gold: Vec<PathBuf>,
        #[arg(long, default_value = "canonical-jsonl")]
        format: DatasetFormat,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        train_format: Option<DatasetFormat>,
        /// Comma-separated dataset names (gold file stems) that are out of domain.
        #[arg(long, value_delimiter = ',')]
        ood: Vec<String>,
        #[arg(long, value_enum, default_value_t = LfcArg::WithMention)]
        lfc: LfcArg,
        /// Print a plain-text table instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// McNemar's test between two prediction files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value = "chi2-cc")]
        method: McNemarMethod,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
    /// Token length statistics of candidate representations.
    RepStats {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        descriptions: PathBuf,
        #[arg(long, value_enum)]
        mode: RepArg,
        /// Tokenizer source.
        #[arg(long, value_enum, default_value_t = TokenizerKind::Word)]
        scorer: TokenizerKind,
        #[arg(long)]
        bridge_cmd: Option<String>,
    },
}

#[derive(clap::Args, Debug)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "canonical-jsonl")]
    format: DatasetFormat,
    /// JSON lines of {"mention_id", "candidates"} replacing each instance's candidates.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// AIDA split to keep (train, testa, testb).
    #[arg(long)]
    split: Option<AidaSplit>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Generative,
    Extractive,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ScorerKind {
    Ngram,
    Overlap,
    Oracle,
    Bridge,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TokenizerKind {
    /// Closed vocabulary of space-separated words from the rendered candidates.
    Word,
    Byte,
    Bridge,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum RepArg {
    TitleOnly,
    WithDescription,
}

impl From<RepArg> for RepresentationMode {
    fn from(r: RepArg) -> Self {
        match r {
            RepArg::TitleOnly => RepresentationMode::TitleOnly,
            RepArg::WithDescription => RepresentationMode::WithDescription,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum LfcArg {
    WithMention,
    Anywhere,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

fn runtime<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{context}: {e}"))
}

fn usage(flag: &str, reason: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{reason} ({flag})"))
}

fn require_file(flag: &str, path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(flag, format!("no such file: {}", path.display())))
    }
}

/// Runs the binary: parses `std::env::args` and returns the exit code.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    run(std::env::args_os(), &mut stdout.lock())
}

/// Runs one invocation, writing results to `out` and diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{line}");
            return 1;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(value).expect("report serializes");
    writeln!(out, "{s}").map_err(runtime("writing output"))
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::IngestWikidata {
            dump,
            lang,
            out: tsv,
            jobs,
            dump_date,
        } => {
            require_file("--dump", &dump)?;
            if jobs == 0 {
                return Err(usage("--jobs", "must be at least 1"));
            }
            if lang.is_empty() {
                return Err(usage("--lang", "must not be empty"));
            }
            let opts = IngestOptions {
                language: lang,
                jobs,
                dump_date,
            };
            let (map, stats) = ingest_path(&dump, &opts).map_err(runtime("ingesting dump"))?;
            map.save(&tsv).map_err(runtime("writing map"))?;
            emit(out, &stats)
        }
        Command::Stats { data, descriptions } => {
            data.validate()?;
            require_file("--descriptions", &descriptions)?;
            let map = DescriptionMap::load(&descriptions).map_err(runtime("loading descriptions"))?;
            let (instances, counters) = data.load()?;
            let stats = compute_stats(instances, &map);
            emit(out, &json!({ "stats": stats, "reader": counters }))
        }
        Command::Decode {
            mode,
            data,
            descriptions,
            scorer,
            bridge_cmd,
            beam,
            length_penalty,
            budget,
            ngram_order,
            representation,
            out: predictions,
            jobs,
        } => {
            data.validate()?;
            require_file("--descriptions", &descriptions)?;
            if beam == 0 {
                return Err(usage("--beam", "must be at least 1"));
            }
            if jobs == 0 {
                return Err(usage("--jobs", "must be at least 1"));
            }
            if ngram_order == 0 {
                return Err(usage("--ngram-order", "must be at least 1"));
            }
            if budget == Some(0) {
                return Err(usage("--budget", "must be at least 1"));
            }
            if budget.is_some() && mode == Mode::Generative {
                return Err(usage("--budget", "only applies to --mode extractive"));
            }
            match (mode, scorer) {
                (Mode::Generative, ScorerKind::Overlap) => {
                    return Err(usage("--scorer", "overlap scores spans; use it with --mode extractive"))
                }
                (Mode::Extractive, ScorerKind::Ngram) => {
                    return Err(usage("--scorer", "ngram scores tokens; use it with --mode generative"))
                }
                _ => {}
            }
            check_bridge_flag(scorer == ScorerKind::Bridge, &bridge_cmd)?;
            let job = DecodeJob {
                mode,
                scorer,
                beam: BeamConfig { beam, length_penalty },
                budget,
                ngram_order,
                representation: representation.into(),
            };
            let bridges = match &bridge_cmd {
                Some(cmd) if scorer == ScorerKind::Bridge => spawn_bridges(cmd, jobs, mode)?,
                _ => Vec::new(),
            };
            let map = DescriptionMap::load(&descriptions).map_err(runtime("loading descriptions"))?;
            let (instances, _) = data.load()?;
            let lines = job.run(&instances, &map, &bridges, jobs)?;
            let file = File::create(&predictions).map_err(runtime("creating predictions file"))?;
            let mut w = BufWriter::new(file);
            for l in &lines {
                serde_json::to_writer(&mut w, l).map_err(runtime("writing predictions"))?;
                w.write_all(b"\n").map_err(runtime("writing predictions"))?;
            }
            w.flush().map_err(runtime("writing predictions"))?;
            let abstained = lines.iter().filter(|l| l.predicted.is_none()).count();
            emit(
                out,
                &json!({
                    "instances": lines.len(),
                    "predicted": lines.len() - abstained,
                    "abstained": abstained,
                    "out": predictions,
                }),
            )
        }
        Command::Evaluate {
            predictions,
            gold,
            format,
            train,
            train_format,
            ood,
            lfc,
            table,
        } => {
            if predictions.len() != gold.len() {
                return Err(usage("--gold", "give one --gold dataset per --predictions file"));
            }
            for p in &predictions {
                require_file("--predictions", p)?;
            }
            for g in &gold {
                require_file("--gold", g)?;
            }
            if let Some(t) = &train {
                require_file("--train", t)?;
            }
            let names: Vec<String> = gold
                .iter()
                .map(|g| g.file_stem().unwrap_or_default().to_string_lossy().into_owned())
                .collect();
            for (i, n) in names.iter().enumerate() {
                if names[..i].contains(n) {
                    return Err(usage("--gold", format!("two gold files are named {n:?}")));
                }
            }
            if let Some(bad) = ood.iter().find(|o| !names.contains(o)) {
                return Err(usage("--ood", format!("unknown dataset name {bad:?}")));
            }
            let policy = match lfc {
                LfcArg::WithMention => LfcPolicy::SeenWithMention,
                LfcArg::Anywhere => LfcPolicy::SeenAnywhere,
            };
            let index = match &train {
                Some(t) => {
                    let (train, _) = load_dataset(t, train_format.unwrap_or(format), ReadOptions::default())?;
                    Some(build_train_index(train).map_err(runtime("indexing training data"))?)
                }
                None => None,
            };
            let mut reports = Vec::with_capacity(gold.len());
            for ((p, g), name) in predictions.iter().zip(&gold).zip(names) {
                let lines = load_predictions(p).map_err(runtime("reading predictions"))?;
                let (instances, _) = load_dataset(g, format, ReadOptions::default())?;
                let (records, missing) =
                    records_against_gold(&lines, &instances).map_err(runtime("matching predictions"))?;
                let metrics = micro_f1(&records).map_err(runtime(&name))?;
                let frequency_classes = match &index {
                    Some(ix) => Some(
                        frequency_class_report(&instances, &records, ix, policy).map_err(runtime(&name))?,
                    ),
                    None => None,
                };
                reports.push(DatasetReport {
                    name,
                    metrics,
                    missing_predictions: missing,
                    frequency_classes,
                });
            }
            let report = EvaluationReport::new(reports, ood).map_err(runtime("aggregating"))?;
            if table {
                write!(out, "{}", report.render_table()).map_err(runtime("writing output"))
            } else {
                emit(out, &report)
            }
        }
        Command::Compare { a, b, method, alpha } => {
            require_file("--a", &a)?;
            require_file("--b", &b)?;
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(usage("--alpha", "must lie in (0, 1)"));
            }
            let ra = records_from_lines(&load_predictions(&a).map_err(runtime("reading --a"))?)
                .map_err(runtime("reading --a"))?;
            let rb = records_from_lines(&load_predictions(&b).map_err(runtime("reading --b"))?)
                .map_err(runtime("reading --b"))?;
            let result = mcnemar(&ra, &rb, method, alpha).map_err(runtime("comparing"))?;
            emit(out, &result)
        }
        Command::RepStats {
            data,
            descriptions,
            mode,
            scorer,
            bridge_cmd,
        } => {
            data.validate()?;
            require_file("--descriptions", &descriptions)?;
            check_bridge_flag(scorer == TokenizerKind::Bridge, &bridge_cmd)?;
            let bridge = match &bridge_cmd {
                Some(cmd) if scorer == TokenizerKind::Bridge => {
                    Some(BridgeClient::from_command_line(cmd).map_err(runtime("starting bridge"))?)
                }
                _ => None,
            };
            let map = DescriptionMap::load(&descriptions).map_err(runtime("loading descriptions"))?;
            let (instances, _) = data.load()?;
            let mode: RepresentationMode = mode.into();
            let stats = match (scorer, &bridge) {
                (TokenizerKind::Bridge, Some(b)) => representation_length_stats(&instances, &map, b, mode),
                (TokenizerKind::Byte, _) => representation_length_stats(&instances, &map, &ByteTokenizer, mode),
                _ => {
                    let tok = word_tokenizer(&instances, &map, mode)?;
                    representation_length_stats(&instances, &map, &tok, mode)
                }
            }
            .map_err(runtime("measuring representations"))?;
            emit(out, &stats)
        }
    }
}

fn check_bridge_flag(selected: bool, cmd: &Option<String>) -> Result<(), Failure> {
    match (selected, cmd) {
        (true, None) => Err(usage("--bridge-cmd", "required with --scorer bridge")),
        (false, Some(_)) => Err(usage("--bridge-cmd", "only used with --scorer bridge")),
        (true, Some(c)) => match shell_words::split(c) {
            Ok(argv) if !argv.is_empty() => Ok(()),
            Ok(_) => Err(usage("--bridge-cmd", "empty command")),
            Err(e) => Err(usage("--bridge-cmd", e)),
        },
        (false, None) => Ok(()),
    }
}

fn spawn_bridges(cmd: &str, jobs: usize, mode: Mode) -> Result<Vec<BridgeClient>, Failure> {
    let wanted = match mode {
        Mode::Generative => "generative",
        Mode::Extractive => "extractive",
    };
    (0..jobs)
        .map(|_| {
            let b = BridgeClient::from_command_line(cmd).map_err(runtime("starting bridge"))?;
            b.require_mode(wanted).map_err(runtime("bridge handshake"))?;
            Ok(b)
        })
        .collect()
}

impl DataArgs {
    fn validate(&self) -> Result<(), Failure> {
        require_file("--dataset", &self.dataset)?;
        if let Some(c) = &self.candidates {
            require_file("--candidates", c)?;
        }
        if self.split.is_some() && self.format != DatasetFormat::AidaConll {
            return Err(usage("--split", "only applies to --format aida-conll"));
        }
        Ok(())
    }

    fn load(&self) -> Result<(Vec<EdInstance>, ReadCounters), Failure> {
        let sidecar = match &self.candidates {
            Some(p) => Some(CandidateSidecar::load(p).map_err(runtime("reading candidates"))?),
            None => None,
        };
        load_dataset(
            &self.dataset,
            self.format,
            ReadOptions {
                sidecar,
                aida_split: self.split,
            },
        )
    }
}

fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    opts: ReadOptions,
) -> Result<(Vec<EdInstance>, ReadCounters), Failure> {
    let what = format!("reading {}", path.display());
    read_dataset(path, format, opts)
        .and_then(|r| r.collect_all())
        .map_err(|e| Failure::Runtime(format!("{what}: {e}")))
}

/// Vocabulary over every rendered surface (and bare title) in the dataset.
fn word_tokenizer(
    instances: &[EdInstance],
    map: &DescriptionMap,
    mode: RepresentationMode,
) -> Result<WordTokenizer, Failure> {
    let mut texts: Vec<String> = Vec::new();
    for inst in instances {
        for r in render_candidates(inst, map, mode).map_err(runtime("rendering candidates"))? {
            texts.push(r.surface().to_string());
        }
    }
    Ok(WordTokenizer::from_texts(texts.iter().map(String::as_str)))
}

struct DecodeJob {
    mode: Mode,
    scorer: ScorerKind,
    beam: BeamConfig,
    budget: Option<usize>,
    ngram_order: usize,
    representation: RepresentationMode,
}

impl DecodeJob {
    fn run(
        &self,
        instances: &[EdInstance],
        map: &DescriptionMap,
        bridges: &[BridgeClient],
        jobs: usize,
    ) -> Result<Vec<PredictionLine>, Failure> {
        let reps: Vec<Vec<CandidateRepresentation>> = instances
            .iter()
            .map(|i| render_candidates(i, map, self.representation))
            .collect::<Result<_, _>>()
            .map_err(runtime("rendering candidates"))?;
        let words = match (self.mode, self.scorer) {
            (Mode::Generative, ScorerKind::Ngram | ScorerKind::Oracle) => {
                Some(word_tokenizer(instances, map, self.representation)?)
            }
            _ => None,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(runtime("starting workers"))?;
        pool.install(|| {
            instances
                .par_iter()
                .zip(reps.par_iter())
                .map(|(inst, reps)| {
                    let bridge = bridges.get(rayon::current_thread_index().unwrap_or(0) % bridges.len().max(1));
                    self.one(inst, reps, words.as_ref(), bridge)
                        .map_err(|e| Failure::Runtime(format!("instance {:?}: {e}", inst.id())))
                })
                .collect()
        })
    }

    fn one(
        &self,
        inst: &EdInstance,
        reps: &[CandidateRepresentation],
        words: Option<&WordTokenizer>,
        bridge: Option<&BridgeClient>,
    ) -> Result<PredictionLine, String> {
        let mut line = PredictionLine {
            id: inst.id().to_string(),
            predicted: None,
            scores: Vec::new(),
            gold: inst.gold().map(|g| g.as_str().to_string()),
        };
        if reps.is_empty() {
            return Ok(line);
        }
        let gold_surface = inst
            .gold()
            .and_then(|g| reps.iter().find(|r| r.title() == g))
            .map(|r| r.surface());
        let finite = |x: f64| x.is_finite().then_some(x);
        match self.mode {
            Mode::Generative => {
                let decoded = match (self.scorer, bridge) {
                    (ScorerKind::Bridge, Some(b)) => decode(inst, reps, b, b, &self.beam),
                    (ScorerKind::Ngram, _) => {
                        let tok = words.expect("word tokenizer");
                        let scorer = NgramScorer::new(reps, tok, self.ngram_order).map_err(|e| e.to_string())?;
                        decode(inst, reps, &scorer, tok, &self.beam)
                    }
                    _ => {
                        let tok = words.expect("word tokenizer");
                        let oracle = oracle_for(gold_surface, tok)?;
                        decode(inst, reps, &oracle, tok, &self.beam)
                    }
                }
                .map_err(|e| e.to_string())?;
                line.predicted = Some(decoded.winner.as_str().to_string());
                line.scores = decoded
                    .ranked
                    .iter()
                    .map(|r| (r.title.as_str().to_string(), finite(r.score)))
                    .collect();
            }
            Mode::Extractive => {
                let counter: &dyn TokenCounter = match bridge {
                    Some(b) => b,
                    None => &WhitespaceCounter,
                };
                let input = assemble(inst, reps, self.budget, Some(counter)).map_err(|e| e.to_string())?;
                let oracle;
                let scorer: &dyn SpanScorer = match (self.scorer, bridge) {
                    (ScorerKind::Bridge, Some(b)) => b,
                    (ScorerKind::Overlap, _) => &OverlapSpanScorer,
                    _ => {
                        oracle = OracleScorer::extractive(gold_surface.unwrap_or(""));
                        &oracle
                    }
                };
                let extracted = extract_assembled(&input, reps, scorer).map_err(|e| e.to_string())?;
                line.predicted = Some(extracted.winner.as_str().to_string());
                line.scores = extracted
                    .ranked(reps)
                    .into_iter()
                    .map(|(t, s)| (t.as_str().to_string(), finite(s)))
                    .collect();
            }
        }
        Ok(line)
    }
}

/// Oracle following the gold surface, or one that favours nothing when the
/// gold entity is not a candidate.
fn oracle_for(gold_surface: Option<&str>, tok: &WordTokenizer) -> Result<impl TokenScorer, String> {
    match gold_surface {
        Some(s) => OracleScorer::new(s, tok).map_err(|e| e.to_string()),
        None => Ok(OracleScorer::extractive("")),
    }
}
