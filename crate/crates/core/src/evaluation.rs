//! inKB micro F1, dataset averages, frequency-class breakdowns and McNemar's
//! test over paired predictions.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::io::{self, BufRead};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use crate::datasets::TrainIndex;
use crate::types::{EdInstance, EntityTitle};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no records to evaluate")]
    EmptyRecordSet,
    #[error("no datasets to aggregate")]
    NoDatasets,
    #[error("unknown dataset name {0:?}")]
    UnknownDatasetName(String),
    #[error("instance {0:?} has no gold entity")]
    MissingGold(String),
    #[error("records are not aligned: {0}")]
    MisalignedRecords(String),
    #[error("predictions line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One system decision against the gold entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub id: String,
    /// `None` when the system abstained (e.g. no candidates).
    pub predicted: Option<EntityTitle>,
    pub gold: EntityTitle,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, predicted: Option<EntityTitle>, gold: EntityTitle) -> Self {
        Self {
            id: id.into(),
            predicted,
            gold,
        }
    }

    pub fn correct(&self) -> bool {
        self.predicted.as_ref() == Some(&self.gold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: u64,
    pub predicted: u64,
    pub total: u64,
}

/// Precision over records with a prediction, recall over all records.
/// Precision is 0 when nothing was predicted.
pub fn micro_f1(records: &[PredictionRecord]) -> Result<Metrics, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecordSet);
    }
    let total = records.len() as u64;
    let predicted = records.iter().filter(|r| r.predicted.is_some()).count() as u64;
    let correct = records.iter().filter(|r| r.correct()).count() as u64;
    Ok(metrics_from_counts(correct, predicted, total))
}

fn metrics_from_counts(correct: u64, predicted: u64, total: u64) -> Metrics {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(correct, predicted);
    let recall = ratio(correct, total);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        precision,
        recall,
        f1,
        correct,
        predicted,
        total,
    }
}

/// Unweighted mean over all datasets, and over the named out-of-domain ones
/// (`None` when `ood` is empty).
pub fn aggregate<S: AsRef<str>>(scores: &[(S, f64)], ood: &[S]) -> Result<(f64, Option<f64>), EvalError> {
    if scores.is_empty() {
        return Err(EvalError::NoDatasets);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let all: Vec<f64> = scores.iter().map(|(_, f)| *f).collect();
    let mut picked = Vec::with_capacity(ood.len());
    let mut seen = HashSet::new();
    for name in ood {
        let name = name.as_ref();
        let f = scores
            .iter()
            .find(|(n, _)| n.as_ref() == name)
            .ok_or_else(|| EvalError::UnknownDatasetName(name.to_string()))?
            .1;
        if seen.insert(name) {
            picked.push(f);
        }
    }
    Ok((mean(&all), (!picked.is_empty()).then(|| mean(&picked))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FrequencyClass {
    /// Gold is the mention's most frequent training entity.
    #[serde(rename = "MFC")]
    Mfc,
    /// Gold was seen with the mention, but is not its most frequent entity.
    #[serde(rename = "LFC")]
    Lfc,
    /// Gold never appears as a training gold.
    #[serde(rename = "UE")]
    Ue,
    /// The (mention, gold) pair never appears in training.
    #[serde(rename = "UEM")]
    Uem,
    /// The mention surface never appears in training.
    #[serde(rename = "UM")]
    Um,
}

impl FrequencyClass {
    pub const ALL: [FrequencyClass; 5] = [Self::Mfc, Self::Lfc, Self::Ue, Self::Uem, Self::Um];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mfc => "MFC",
            Self::Lfc => "LFC",
            Self::Ue => "UE",
            Self::Uem => "UEM",
            Self::Um => "UM",
        }
    }
}

impl fmt::Display for FrequencyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What "seen" means for the less-frequent class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LfcPolicy {
    /// Gold was a training gold for this very mention.
    #[default]
    SeenWithMention,
    /// Gold was a training gold anywhere.
    SeenAnywhere,
}

/// Frequency classes of one instance. Classes are decided independently and
/// may overlap; an unseen entity is always an unseen pair too.
pub fn classify(
    instance: &EdInstance,
    index: &TrainIndex,
    policy: LfcPolicy,
) -> Result<BTreeSet<FrequencyClass>, EvalError> {
    let gold = instance
        .gold()
        .ok_or_else(|| EvalError::MissingGold(instance.id().to_string()))?;
    let mention = instance.mention_surface();
    let mention_seen = index.mention_seen(&mention);
    let pair_seen = index.pair_count(&mention, gold) > 0;
    let mfc = index.most_frequent(&mention);

    let mut out = BTreeSet::new();
    if mention_seen && mfc == Some(gold) {
        out.insert(FrequencyClass::Mfc);
    }
    let lfc_seen = match policy {
        LfcPolicy::SeenWithMention => pair_seen,
        LfcPolicy::SeenAnywhere => index.entity_seen(gold),
    };
    if mention_seen && lfc_seen && mfc != Some(gold) {
        out.insert(FrequencyClass::Lfc);
    }
    if !index.entity_seen(gold) {
        out.insert(FrequencyClass::Ue);
    }
    if !pair_seen {
        out.insert(FrequencyClass::Uem);
    }
    if !mention_seen {
        out.insert(FrequencyClass::Um);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScore {
    pub count: u64,
    pub correct: u64,
    pub accuracy: f64,
}

/// Instance count and accuracy for every frequency class.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrequencyClassReport {
    pub classes: BTreeMap<FrequencyClass, ClassScore>,
}

/// Breaks accuracy down by class. `records` are looked up by instance id;
/// instances without a record count as wrong.
pub fn frequency_class_report(
    instances: &[EdInstance],
    records: &[PredictionRecord],
    index: &TrainIndex,
    policy: LfcPolicy,
) -> Result<FrequencyClassReport, EvalError> {
    let by_id: HashMap<&str, &PredictionRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut classes: BTreeMap<FrequencyClass, ClassScore> =
        FrequencyClass::ALL.iter().map(|&c| (c, ClassScore::default())).collect();
    for inst in instances {
        let ok = by_id.get(inst.id()).is_some_and(|r| r.correct());
        for class in classify(inst, index, policy)? {
            let s = classes.get_mut(&class).expect("all classes present");
            s.count += 1;
            s.correct += ok as u64;
        }
    }
    for s in classes.values_mut() {
        s.accuracy = if s.count == 0 { 0.0 } else { s.correct as f64 / s.count as f64 };
    }
    Ok(FrequencyClassReport { classes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum McNemarMethod {
    /// Chi-square with continuity correction, one degree of freedom.
    #[default]
    #[serde(rename = "chi2-cc")]
    Chi2Cc,
    /// Two-sided exact binomial test on the discordant pairs.
    #[serde(rename = "exact")]
    ExactBinomial,
}

impl FromStr for McNemarMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "chi2-cc" => Ok(Self::Chi2Cc),
            "exact" | "exact-binomial" => Ok(Self::ExactBinomial),
            other => Err(format!("unknown McNemar method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub method: McNemarMethod,
    /// A correct, B wrong.
    pub b: u64,
    /// A wrong, B correct.
    pub c: u64,
    /// Chi-square value, or `min(b, c)` for the exact test.
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
}

/// McNemar's test from the discordant counts.
pub fn mcnemar_counts(b: u64, c: u64, method: McNemarMethod, alpha: f64) -> McNemarResult {
    let n = b + c;
    let (statistic, p_value) = match method {
        McNemarMethod::Chi2Cc => {
            if n == 0 {
                (0.0, 1.0)
            } else {
                let d = (b.abs_diff(c) as f64 - 1.0).powi(2);
                let stat = d / n as f64;
                let chi = ChiSquared::new(1.0).expect("one degree of freedom");
                (stat, chi.sf(stat).clamp(0.0, 1.0))
            }
        }
        McNemarMethod::ExactBinomial => {
            let k = b.min(c);
            if n == 0 {
                (0.0, 1.0)
            } else {
                let bin = Binomial::new(0.5, n).expect("valid binomial");
                (k as f64, (2.0 * bin.cdf(k)).min(1.0))
            }
        }
    };
    McNemarResult {
        method,
        b,
        c,
        statistic,
        p_value,
        alpha,
        significant: p_value < alpha,
    }
}

/// Pairs two systems' records by instance id and tests whether their error
/// rates differ. Both lists must cover the same ids exactly once.
pub fn mcnemar(
    a: &[PredictionRecord],
    b: &[PredictionRecord],
    method: McNemarMethod,
    alpha: f64,
) -> Result<McNemarResult, EvalError> {
    let index = |rs: &[PredictionRecord], which: &str| -> Result<HashMap<String, bool>, EvalError> {
        let mut m = HashMap::with_capacity(rs.len());
        for r in rs {
            if m.insert(r.id.clone(), r.correct()).is_some() {
                return Err(EvalError::MisalignedRecords(format!("id {:?} repeated in {which}", r.id)));
            }
        }
        Ok(m)
    };
    let ia = index(a, "A")?;
    let ib = index(b, "B")?;
    if ia.len() != ib.len() {
        return Err(EvalError::MisalignedRecords(format!(
            "{} records in A, {} in B",
            ia.len(),
            ib.len()
        )));
    }
    let (mut nb, mut nc) = (0, 0);
    for (id, &ok_a) in &ia {
        let ok_b = *ib
            .get(id)
            .ok_or_else(|| EvalError::MisalignedRecords(format!("id {id:?} missing from B")))?;
        match (ok_a, ok_b) {
            (true, false) => nb += 1,
            (false, true) => nc += 1,
            _ => {}
        }
    }
    Ok(mcnemar_counts(nb, nc, method, alpha))
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    pub predicted: Option<String>,
    /// `(title, score)` best first; `None` stands for negative infinity.
    #[serde(default)]
    pub scores: Vec<(String, Option<f64>)>,
    #[serde(default)]
    pub gold: Option<String>,
}

pub fn read_predictions<R: BufRead>(r: R) -> Result<Vec<PredictionLine>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionLine>, EvalError> {
    read_predictions(io::BufReader::new(std::fs::File::open(path)?))
}

fn parse_title(s: &str, line: usize) -> Result<EntityTitle, EvalError> {
    EntityTitle::new(s).map_err(|e| EvalError::Parse {
        line,
        reason: e.to_string(),
    })
}

/// Records from prediction lines carrying their own gold titles.
pub fn records_from_lines(lines: &[PredictionLine]) -> Result<Vec<PredictionRecord>, EvalError> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let gold = l.gold.as_deref().ok_or_else(|| EvalError::MissingGold(l.id.clone()))?;
            Ok(PredictionRecord::new(
                l.id.clone(),
                l.predicted.as_deref().map(|p| parse_title(p, i + 1)).transpose()?,
                parse_title(gold, i + 1)?,
            ))
        })
        .collect()
}

/// Records for every gold instance; instances without a prediction line
/// count as abstentions. Also returns how many were missing.
pub fn records_against_gold(
    lines: &[PredictionLine],
    gold: &[EdInstance],
) -> Result<(Vec<PredictionRecord>, u64), EvalError> {
    let mut by_id: HashMap<&str, (usize, &PredictionLine)> = HashMap::with_capacity(lines.len());
    for (i, l) in lines.iter().enumerate() {
        if by_id.insert(l.id.as_str(), (i, l)).is_some() {
            return Err(EvalError::MisalignedRecords(format!("prediction id {:?} repeated", l.id)));
        }
    }
    let gold_ids: HashSet<&str> = gold.iter().map(|g| g.id()).collect();
    if let Some(l) = lines.iter().find(|l| !gold_ids.contains(l.id.as_str())) {
        return Err(EvalError::MisalignedRecords(format!(
            "prediction id {:?} is not in the gold dataset",
            l.id
        )));
    }
    let mut missing = 0;
    let mut records = Vec::with_capacity(gold.len());
    for inst in gold {
        let g = inst.gold().ok_or_else(|| EvalError::MissingGold(inst.id().to_string()))?;
        let predicted = match by_id.get(inst.id()) {
            Some(&(i, l)) => l.predicted.as_deref().map(|p| parse_title(p, i + 1)).transpose()?,
            None => {
                missing += 1;
                None
            }
        };
        records.push(PredictionRecord::new(inst.id(), predicted, g.clone()));
    }
    Ok((records, missing))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub name: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub missing_predictions: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency_classes: Option<FrequencyClassReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub datasets: Vec<DatasetReport>,
    pub avg: f64,
    pub avg_ood: Option<f64>,
    pub ood: Vec<String>,
}

impl EvaluationReport {
    pub fn new(datasets: Vec<DatasetReport>, ood: Vec<String>) -> Result<Self, EvalError> {
        let f1s: Vec<(&str, f64)> = datasets.iter().map(|d| (d.name.as_str(), d.metrics.f1)).collect();
        let ood_refs: Vec<&str> = ood.iter().map(String::as_str).collect();
        let (avg, avg_ood) = aggregate(&f1s, &ood_refs)?;
        Ok(Self {
            datasets,
            avg,
            avg_ood,
            ood,
        })
    }

    /// Plain-text table, scores in percent.
    pub fn render_table(&self) -> String {
        let width = self.datasets.iter().map(|d| d.name.len()).max().unwrap_or(0).max(7);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}", "dataset", "P", "R", "F1", "n");
        for d in &self.datasets {
            let m = &d.metrics;
            let _ = writeln!(
                s,
                "{:<width$}  {:>7.2}  {:>7.2}  {:>7.2}  {:>7}",
                d.name,
                100.0 * m.precision,
                100.0 * m.recall,
                100.0 * m.f1,
                m.total
            );
        }
        let _ = writeln!(s, "{:<width$}  {:>7}  {:>7}  {:>7.2}", "Avg", "", "", 100.0 * self.avg);
        if let Some(o) = self.avg_ood {
            let _ = writeln!(s, "{:<width$}  {:>7}  {:>7}  {:>7.2}", "Avg_OOD", "", "", 100.0 * o);
        }
        for d in &self.datasets {
            if let Some(fc) = &d.frequency_classes {
                let _ = writeln!(s, "\n{}: frequency classes", d.name);
                for (c, v) in &fc.classes {
                    let _ = writeln!(s, "  {:<4} {:>7} {:>7.2}", c.name(), v.count, 100.0 * v.accuracy);
                }
            }
        }
        s
    }
}
