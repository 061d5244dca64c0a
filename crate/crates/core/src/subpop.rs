//! Subpopulation analyses over mixed-segment test sentences.
//!
//! Each eligible test sentence gets a continuous value (maximum train-set
//! cosine similarity for T4/T5, argumentative token ratio for T6) which is
//! correlated with prediction correctness per run.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabeledSentence};
use crate::error::{Error, Result};
use crate::label::BinaryLabel;
use crate::labelalg::{derive_binary_label, is_mixed_segment, PunctMode};
use crate::metrics::{aggregate_runs, Predictions, RunPredictions, ScoreDistribution};
use crate::table::Table;

/// Static token vectors, looked up by exact string.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Embedding("dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dimension,
            entries: HashMap::new(),
        })
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch(self.dimension, vector.len()));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Embedding(format!("non-finite value for {token:?}")));
        }
        if self.entries.insert(token.clone(), vector).is_some() {
            return Err(Error::Embedding(format!("token {token:?} listed twice")));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }
}

/// Reads the text format: a `<count> <dimension>` header, then `<token> <v1> ... <vd>` lines.
pub fn parse_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingTable> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(Error::Embedding("missing header".into())),
    };
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Embedding(format!("bad header {header:?}")))?;
    let [count, dimension] = nums[..] else {
        return Err(Error::Embedding(format!("bad header {header:?}")));
    };
    let mut table = EmbeddingTable::new(dimension)?;
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line");
        let vector = parts
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Embedding(format!("line {}: {e}", i + 1)))?;
        if vector.len() != dimension {
            return Err(Error::Embedding(format!(
                "line {}: {} values, header says {dimension}",
                i + 1,
                vector.len()
            )));
        }
        table.insert(token, vector)?;
    }
    if table.len() != count {
        return Err(Error::Embedding(format!(
            "header announces {count} entries, found {}",
            table.len()
        )));
    }
    Ok(table)
}

/// Writes the table in the text format, tokens sorted.
pub fn write_embeddings<W: Write>(table: &EmbeddingTable, mut w: W) -> Result<()> {
    writeln!(w, "{} {}", table.len(), table.dimension)?;
    let mut tokens: Vec<_> = table.entries.keys().collect();
    tokens.sort();
    for t in tokens {
        write!(w, "{t}")?;
        for v in &table.entries[t] {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// How out-of-vocabulary tokens enter the sentence average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovMode {
    /// Averaged over in-vocabulary tokens only.
    #[default]
    Skip,
    /// Counted as zero vectors.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVector {
    pub values: Vec<f64>,
    pub found: usize,
}

impl SentenceVector {
    /// No token of the sentence was in the table.
    pub fn is_flagged(&self) -> bool {
        self.found == 0
    }
}

pub fn sentence_vector<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable, oov: OovMode) -> SentenceVector {
    let mut sum = vec![0.0; table.dimension];
    let mut found = 0usize;
    for t in tokens {
        if let Some(v) = table.get(t.as_ref()) {
            found += 1;
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
    }
    let denom = match oov {
        OovMode::Skip => found,
        OovMode::Zero => tokens.len(),
    };
    if found > 0 {
        for s in &mut sum {
            *s /= denom as f64;
        }
    }
    SentenceVector { values: sum, found }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

fn cosine_with_norms(u: &[f64], nu: f64, v: &[f64], nv: f64) -> f64 {
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Cosine similarity clamped to [-1, 1]; `None` if either vector has zero norm.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<Option<f64>> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Ok(None);
    }
    Ok(Some(cosine_with_norms(u, nu, v, nv)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubpopTest {
    T4,
    T5,
    T6,
}

/// Label relation between a test sentence (gold ARG) and its nearest train neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Same,
    Opposite,
}

impl Relation {
    fn neighbor_label(self) -> BinaryLabel {
        match self {
            Relation::Same => BinaryLabel::Arg,
            Relation::Opposite => BinaryLabel::NonArg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubpopOptions {
    pub oov: OovMode,
    pub punct: PunctMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub sentence_id: String,
    pub neighbor_id: String,
    pub neighbor_label: BinaryLabel,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborScan {
    pub eligible: usize,
    pub neighbors: Vec<Neighbor>,
    /// Eligible test sentences without any in-vocabulary token.
    pub zero_vector: Vec<String>,
    /// Train sentences skipped as candidates for the same reason.
    pub train_zero_vector: usize,
}

pub fn eligible_sentences(test: &Corpus, punct: PunctMode) -> Vec<&LabeledSentence> {
    test.iter().filter(|s| is_mixed_segment(s, punct)).collect()
}

/// Nearest train sentence (maximum cosine) for every mixed-segment test sentence.
///
/// Ties go to the lexicographically smaller train id.
pub fn nearest_train_neighbors(
    test: &Corpus,
    train: &Corpus,
    table: &EmbeddingTable,
    options: SubpopOptions,
) -> Result<NeighborScan> {
    if train.is_empty() {
        return Err(Error::Empty("train corpus"));
    }
    let mut train_zero_vector = 0;
    let mut candidates = Vec::with_capacity(train.len());
    for s in train {
        let v = sentence_vector(&s.tokens, table, options.oov);
        let n = norm(&v.values);
        if n == 0.0 {
            train_zero_vector += 1;
            continue;
        }
        candidates.push((s.id.as_str(), derive_binary_label(&s.labels)?, v.values, n));
    }
    if candidates.is_empty() {
        return Err(Error::Empty("train corpus has no embeddable sentence"));
    }

    let eligible = eligible_sentences(test, options.punct);
    let results: Vec<std::result::Result<Neighbor, String>> = eligible
        .par_iter()
        .map(|s| {
            let v = sentence_vector(&s.tokens, table, options.oov);
            let nv = norm(&v.values);
            if nv == 0.0 {
                return Err(s.id.clone());
            }
            let mut best: Option<(f64, usize)> = None;
            for (i, (id, _, tv, tn)) in candidates.iter().enumerate() {
                let c = cosine_with_norms(&v.values, nv, tv, *tn);
                let better = match best {
                    None => true,
                    Some((bc, bi)) => c > bc || (c == bc && *id < candidates[bi].0),
                };
                if better {
                    best = Some((c, i));
                }
            }
            let (coefficient, i) = best.expect("candidates non-empty");
            Ok(Neighbor {
                sentence_id: s.id.clone(),
                neighbor_id: candidates[i].0.to_string(),
                neighbor_label: candidates[i].1,
                coefficient,
            })
        })
        .collect();

    let mut neighbors = Vec::new();
    let mut zero_vector = Vec::new();
    for r in results {
        match r {
            Ok(n) => neighbors.push(n),
            Err(id) => zero_vector.push(id),
        }
    }
    Ok(NeighborScan {
        eligible: eligible.len(),
        neighbors,
        zero_vector,
        train_zero_vector,
    })
}

/// Eligible test sentences with their continuous values, before joining predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpopSet {
    pub test_id: SubpopTest,
    pub eligible: usize,
    pub values: Vec<(String, f64)>,
    pub excluded_zero_vector: usize,
    /// Eligible sentences whose nearest neighbour has the other relation.
    pub excluded_relation: usize,
}

/// T4 (`Same`) or T5 (`Opposite`) membership from a neighbour scan.
pub fn similarity_set(scan: &NeighborScan, relation: Relation) -> SubpopSet {
    let wanted = relation.neighbor_label();
    let values: Vec<(String, f64)> = scan
        .neighbors
        .iter()
        .filter(|n| n.neighbor_label == wanted)
        .map(|n| (n.sentence_id.clone(), n.coefficient))
        .collect();
    SubpopSet {
        test_id: match relation {
            Relation::Same => SubpopTest::T4,
            Relation::Opposite => SubpopTest::T5,
        },
        eligible: scan.eligible,
        excluded_zero_vector: scan.zero_vector.len(),
        excluded_relation: scan.neighbors.len() - values.len(),
        values,
    }
}

pub fn build_similarity_set(
    test: &Corpus,
    train: &Corpus,
    relation: Relation,
    table: &EmbeddingTable,
    options: SubpopOptions,
) -> Result<SubpopSet> {
    let scan = nearest_train_neighbors(test, train, table, options)?;
    Ok(similarity_set(&scan, relation))
}

/// Share of `PRO`/`CON` tokens.
pub fn arg_token_ratio(sentence: &LabeledSentence) -> Result<f64> {
    if sentence.labels.is_empty() {
        return Err(Error::Empty("sentence without tokens"));
    }
    let arg = sentence.labels.iter().filter(|l| l.is_arg()).count();
    Ok(arg as f64 / sentence.labels.len() as f64)
}

pub fn token_ratio_set(test: &Corpus, punct: PunctMode) -> Result<SubpopSet> {
    let eligible = eligible_sentences(test, punct);
    let values = eligible
        .iter()
        .map(|s| Ok((s.id.clone(), arg_token_ratio(s)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SubpopSet {
        test_id: SubpopTest::T6,
        eligible: eligible.len(),
        values,
        excluded_zero_vector: 0,
        excluded_relation: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpopRecord {
    pub sentence_id: String,
    pub continuous_value: f64,
    pub correct: bool,
}

/// Joins one run's predictions: correct iff the binary sentence prediction equals the gold label.
pub fn records_for_run(
    set: &SubpopSet,
    test: &Corpus,
    preds: &RunPredictions,
    run: u32,
) -> Result<Vec<SubpopRecord>> {
    set.values
        .iter()
        .map(|(id, value)| {
            let gold = test.get(id).ok_or_else(|| Error::UnknownTopic(id.clone()))?;
            let payload = preds.get(id).ok_or_else(|| Error::MissingPrediction {
                sentence_id: id.clone(),
                run,
            })?;
            if let crate::metrics::Payload::Tokens(ls) = payload {
                if ls.len() != gold.len() {
                    return Err(Error::PredictionLength {
                        sentence_id: id.clone(),
                        expected: gold.len(),
                        got: ls.len(),
                    });
                }
            }
            Ok(SubpopRecord {
                sentence_id: id.clone(),
                continuous_value: *value,
                correct: payload.binary_label()? == derive_binary_label(&gold.labels)?,
            })
        })
        .collect()
}

/// Why a correlation could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Undefined {
    TooFewRecords,
    OneGroupEmpty,
    ZeroVariance,
}

/// Point-biserial correlation between correctness and the continuous value:
/// `(M1 - M0) / s_n * sqrt(p q)` with the population standard deviation `s_n`.
pub fn point_biserial(records: &[SubpopRecord]) -> std::result::Result<f64, Undefined> {
    if records.len() < 3 {
        return Err(Undefined::TooFewRecords);
    }
    let n = records.len() as f64;
    let (mut sum1, mut n1, mut sum0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for r in records {
        if r.correct {
            sum1 += r.continuous_value;
            n1 += 1;
        } else {
            sum0 += r.continuous_value;
            n0 += 1;
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(Undefined::OneGroupEmpty);
    }
    let first = records[0].continuous_value;
    if records.iter().all(|r| r.continuous_value == first) {
        return Err(Undefined::ZeroVariance);
    }
    let mean = (sum1 + sum0) / n;
    let var = records
        .iter()
        .map(|r| (r.continuous_value - mean).powi(2))
        .sum::<f64>()
        / n;
    let s_n = var.sqrt();
    if s_n == 0.0 {
        return Err(Undefined::ZeroVariance);
    }
    let (m1, m0) = (sum1 / n1 as f64, sum0 / n0 as f64);
    let (p, q) = (n1 as f64 / n, n0 as f64 / n);
    Ok(((m1 - m0) / s_n * (p * q).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCorrelation {
    pub run: u32,
    pub records: usize,
    pub correct: usize,
    pub r_pb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub undefined: Option<Undefined>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpopReport {
    pub test_id: SubpopTest,
    pub eligible: usize,
    pub set_size: usize,
    pub excluded_zero_vector: usize,
    pub excluded_relation: usize,
    pub runs: Vec<RunCorrelation>,
    /// Over runs with a defined coefficient; absent when none is defined.
    pub r_pb: Option<ScoreDistribution>,
}

impl SubpopReport {
    pub fn render(&self) -> String {
        let mut t = Table::new(["run", "n", "correct", "r_pb"]);
        for r in &self.runs {
            t.row([
                r.run.to_string(),
                r.records.to_string(),
                r.correct.to_string(),
                match (r.r_pb, r.undefined) {
                    (Some(v), _) => format!("{v:.3}"),
                    (None, Some(u)) => format!("undefined ({})", serde_json::to_value(u).unwrap().as_str().unwrap_or("")),
                    _ => "undefined".into(),
                },
            ]);
        }
        let summary = match &self.r_pb {
            Some(d) => format!("{:?} r_pb: {:.3} ({:.3})\n", self.test_id, d.mean, d.std),
            None => format!("{:?} r_pb: undefined\n", self.test_id),
        };
        t.render() + &summary
    }
}

/// Correlates a prepared set with every run of `preds`.
pub fn run_subpop(set: &SubpopSet, test: &Corpus, preds: &Predictions) -> Result<SubpopReport> {
    if preds.is_empty() {
        return Err(Error::Empty("no predictions"));
    }
    let mut runs = Vec::new();
    for (run, p) in preds.runs() {
        let records = records_for_run(set, test, p, run)?;
        let outcome = point_biserial(&records);
        runs.push(RunCorrelation {
            run,
            records: records.len(),
            correct: records.iter().filter(|r| r.correct).count(),
            r_pb: outcome.ok(),
            undefined: outcome.err(),
        });
    }
    let defined: Vec<f64> = runs.iter().filter_map(|r| r.r_pb).collect();
    let name = format!("{:?} r_pb", set.test_id);
    Ok(SubpopReport {
        test_id: set.test_id,
        eligible: set.eligible,
        set_size: set.values.len(),
        excluded_zero_vector: set.excluded_zero_vector,
        excluded_relation: set.excluded_relation,
        r_pb: if defined.is_empty() {
            None
        } else {
            Some(aggregate_runs(&name, &defined)?)
        },
        runs,
    })
}
