//! Token-, sentence- and segment-level scores, accuracy, perturbation deltas and
//! aggregation over repeated runs.

use std::collections::BTreeMap;
use std::io::BufRead;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{segmentize_labels, Corpus, LabeledSentence, Segment};
use crate::error::{Error, Result};
use crate::label::{BinaryLabel, Label};
use crate::labelalg::{broadcast_sentence_label, derive_binary_label, derive_sentence_label, Seed};
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Token,
    Sentence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Tokens(Vec<Label>),
    Sentence(Label),
}

impl Payload {
    pub fn granularity(&self) -> Granularity {
        match self {
            Payload::Tokens(_) => Granularity::Token,
            Payload::Sentence(_) => Granularity::Sentence,
        }
    }

    /// Token labels, broadcasting a sentence label over `n` tokens.
    pub fn token_labels(&self, sentence_id: &str, n: usize) -> Result<Vec<Label>> {
        match self {
            Payload::Tokens(labels) if labels.len() != n => Err(Error::PredictionLength {
                sentence_id: sentence_id.to_string(),
                expected: n,
                got: labels.len(),
            }),
            Payload::Tokens(labels) => Ok(labels.clone()),
            Payload::Sentence(label) => broadcast_sentence_label(*label, n),
        }
    }

    /// Sentence label, aggregating token labels with the seeded majority rule.
    pub fn sentence_label(&self, sentence_id: &str, seed: Seed) -> Result<Label> {
        match self {
            Payload::Tokens(labels) => derive_sentence_label(labels, seed, sentence_id),
            Payload::Sentence(label) => Ok(*label),
        }
    }

    pub fn binary_label(&self) -> Result<BinaryLabel> {
        match self {
            Payload::Tokens(labels) => derive_binary_label(labels),
            Payload::Sentence(label) => Ok(label.binarize()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub sentence_id: String,
    pub run: u32,
    pub payload: Payload,
}

/// Wire form of one predictions JSONL line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionLine {
    pub sentence_id: String,
    pub run: u32,
    pub granularity: Granularity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PredictionLine {
    fn into_record(self, line: usize) -> Result<PredictionRecord> {
        let payload = match (self.granularity, self.labels, self.label) {
            (Granularity::Token, Some(labels), None) => {
                if labels.is_empty() {
                    return Err(Error::Schema {
                        line,
                        message: "token prediction without labels".into(),
                    });
                }
                Payload::Tokens(
                    labels
                        .iter()
                        .map(|l| l.parse())
                        .collect::<Result<Vec<Label>>>()?,
                )
            }
            (Granularity::Sentence, None, Some(label)) => Payload::Sentence(label.parse()?),
            (g, ..) => {
                return Err(Error::Schema {
                    line,
                    message: format!(
                        "{g:?} prediction must carry exactly the {} field",
                        if g == Granularity::Token { "labels" } else { "label" }
                    ),
                })
            }
        };
        Ok(PredictionRecord {
            sentence_id: self.sentence_id,
            run: self.run,
            payload,
        })
    }
}

impl From<&PredictionRecord> for PredictionLine {
    fn from(r: &PredictionRecord) -> Self {
        let (labels, label) = match &r.payload {
            Payload::Tokens(ls) => (Some(ls.iter().map(|l| l.to_string()).collect()), None),
            Payload::Sentence(l) => (None, Some(l.to_string())),
        };
        PredictionLine {
            sentence_id: r.sentence_id.clone(),
            run: r.run,
            granularity: r.payload.granularity(),
            labels,
            label,
        }
    }
}

/// Predictions of one run, keyed by sentence id.
pub type RunPredictions = IndexMap<String, Payload>;

/// All runs of one model.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Predictions {
    runs: BTreeMap<u32, RunPredictions>,
}

impl Predictions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: PredictionRecord) -> Result<()> {
        let run = self.runs.entry(record.run).or_default();
        if run.contains_key(&record.sentence_id) {
            return Err(Error::DuplicateId(format!(
                "{} (run {})",
                record.sentence_id, record.run
            )));
        }
        run.insert(record.sentence_id, record.payload);
        Ok(())
    }

    pub fn run_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.runs.keys().copied()
    }

    pub fn run(&self, run: u32) -> Option<&RunPredictions> {
        self.runs.get(&run)
    }

    pub fn runs(&self) -> impl Iterator<Item = (u32, &RunPredictions)> {
        self.runs.iter().map(|(&k, v)| (k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = PredictionRecord> + '_ {
        self.runs.iter().flat_map(|(&run, preds)| {
            preds.iter().map(move |(id, p)| PredictionRecord {
                sentence_id: id.clone(),
                run,
                payload: p.clone(),
            })
        })
    }

    /// Checks every token-level payload against the gold token count of its sentence.
    pub fn check_lengths(&self, gold: &Corpus) -> Result<()> {
        for preds in self.runs.values() {
            for (id, payload) in preds {
                if let (Some(s), Payload::Tokens(ls)) = (gold.get(id), payload) {
                    if ls.len() != s.len() {
                        return Err(Error::PredictionLength {
                            sentence_id: id.clone(),
                            expected: s.len(),
                            got: ls.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Strict parse of predictions JSONL.
pub fn parse_predictions<R: BufRead>(reader: R) -> Result<Predictions> {
    let mut out = Predictions::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let wire: PredictionLine =
            serde_json::from_str(&text).map_err(|source| Error::MalformedJson {
                line: line_no,
                source,
            })?;
        out.insert(wire.into_record(line_no)?)?;
    }
    Ok(out)
}

pub fn write_predictions<W: std::io::Write>(preds: &Predictions, mut w: W) -> Result<()> {
    for r in preds.records() {
        serde_json::to_writer(&mut w, &PredictionLine::from(&r))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn lookup<'a>(preds: &'a RunPredictions, id: &str, run: u32) -> Result<&'a Payload> {
    preds.get(id).ok_or_else(|| Error::MissingPrediction {
        sentence_id: id.to_string(),
        run,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LabelSpace {
    #[default]
    #[serde(rename = "3class")]
    ThreeClass,
    #[serde(rename = "binary")]
    Binary,
}

impl LabelSpace {
    fn n_classes(self) -> usize {
        match self {
            LabelSpace::ThreeClass => 3,
            LabelSpace::Binary => 2,
        }
    }

    fn class_of(self, label: Label) -> usize {
        match self {
            LabelSpace::ThreeClass => label as usize,
            LabelSpace::Binary => label.binarize() as usize,
        }
    }
}

/// F1 of one class; `None` when the class occurs in neither sequence.
pub fn per_class_f1<T: PartialEq>(gold: &[T], pred: &[T], class: &T) -> Result<Option<f64>> {
    if gold.len() != pred.len() {
        return Err(Error::SizeMismatch(gold.len(), pred.len()));
    }
    let mut c = ClassCounts::default();
    for (g, p) in gold.iter().zip(pred) {
        c.add(g == class, p == class);
    }
    Ok(c.f1())
}

/// Unweighted mean of per-class F1 over the classes that occur in gold or prediction.
pub fn macro_f1<T: PartialEq>(gold: &[T], pred: &[T], classes: &[T]) -> Result<f64> {
    let mut scores = Vec::with_capacity(classes.len());
    for c in classes {
        if let Some(f) = per_class_f1(gold, pred, c)? {
            scores.push(f);
        }
    }
    if scores.is_empty() {
        return Err(Error::Empty("no class occurs in the evaluation set"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, Default)]
struct ClassCounts {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl ClassCounts {
    fn add(&mut self, is_gold: bool, is_pred: bool) {
        match (is_gold, is_pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    fn f1(&self) -> Option<f64> {
        if self.tp + self.fp + self.fn_ == 0 {
            return None;
        }
        // F1 = 2PR/(P+R) = 2tp / (2tp + fp + fn); 0 when tp == 0.
        Some(2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64)
    }
}

/// Pooled confusion counts for macro-F1 in a label space.
struct Confusion {
    space: LabelSpace,
    classes: Vec<ClassCounts>,
}

impl Confusion {
    fn new(space: LabelSpace) -> Self {
        Confusion {
            space,
            classes: vec![ClassCounts::default(); space.n_classes()],
        }
    }

    fn add(&mut self, gold: Label, pred: Label) {
        let g = self.space.class_of(gold);
        let p = self.space.class_of(pred);
        for (i, c) in self.classes.iter_mut().enumerate() {
            c.add(g == i, p == i);
        }
    }

    fn macro_f1(&self) -> Result<f64> {
        let scores: Vec<f64> = self.classes.iter().filter_map(ClassCounts::f1).collect();
        if scores.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

/// Macro-F1 over all tokens of the gold corpus; sentence predictions are broadcast.
pub fn token_f1(gold: &Corpus, preds: &RunPredictions, run: u32, space: LabelSpace) -> Result<f64> {
    let mut conf = Confusion::new(space);
    for s in gold {
        let pred = lookup(preds, &s.id, run)?.token_labels(&s.id, s.len())?;
        for (&g, &p) in s.labels.iter().zip(&pred) {
            conf.add(g, p);
        }
    }
    conf.macro_f1()
}

/// Macro-F1 over sentence labels; token predictions are aggregated first.
pub fn sentence_f1(
    gold: &Corpus,
    preds: &RunPredictions,
    run: u32,
    space: LabelSpace,
    seed: Seed,
) -> Result<f64> {
    let mut conf = Confusion::new(space);
    for s in gold {
        let payload = lookup(preds, &s.id, run)?;
        if let Payload::Tokens(ls) = payload {
            if ls.len() != s.len() {
                return Err(Error::PredictionLength {
                    sentence_id: s.id.clone(),
                    expected: s.len(),
                    got: ls.len(),
                });
            }
        }
        let g = derive_sentence_label(&s.labels, seed, &s.id)?;
        let p = payload.sentence_label(&s.id, seed)?;
        conf.add(g, p);
    }
    conf.macro_f1()
}

/// Fraction of the gold segment's positions whose predicted label equals the segment label.
pub fn segment_overlap_ratio(gold: &Segment, pred: &[Label]) -> f64 {
    let hits = pred[gold.range()]
        .iter()
        .filter(|&&l| l == gold.label)
        .count();
    hits as f64 / gold.len() as f64
}

/// Share of gold `PRO`/`CON` segments recovered with overlap ratio above one half.
///
/// Without argumentative gold segments the score is 1.0 if the prediction has no
/// argumentative token either, 0.0 otherwise.
pub fn sentence_segment_f1(gold_segments: &[Segment], pred: &[Label]) -> f64 {
    let mut total = 0usize;
    let mut hits = 0usize;
    for seg in gold_segments.iter().filter(|s| s.label.is_arg()) {
        total += 1;
        if segment_overlap_ratio(seg, pred) > 0.5 {
            hits += 1;
        }
    }
    if total == 0 {
        return if pred.iter().any(|l| l.is_arg()) { 0.0 } else { 1.0 };
    }
    hits as f64 / total as f64
}

fn sentence_segment_score(s: &LabeledSentence, payload: &Payload) -> Result<f64> {
    let pred = payload.token_labels(&s.id, s.len())?;
    let segs = segmentize_labels(&s.tokens, &s.labels);
    Ok(sentence_segment_f1(&segs, &pred))
}

/// Mean sentence-wise segment-F1 over the gold corpus.
pub fn segment_f1(gold: &Corpus, preds: &RunPredictions, run: u32) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut sum = 0.0;
    for s in gold {
        sum += sentence_segment_score(s, lookup(preds, &s.id, run)?)?;
    }
    Ok(sum / gold.len() as f64)
}

pub fn accuracy(gold: &[BinaryLabel], pred: &[BinaryLabel]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::SizeMismatch(gold.len(), pred.len()));
    }
    if gold.is_empty() {
        return Err(Error::Empty("accuracy over zero items"));
    }
    let hits = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Accuracy before and after a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub acc_before: f64,
    pub acc_after: f64,
    pub delta_abs: f64,
    /// Percent change relative to `acc_before`; `None` when `acc_before` is 0.
    pub delta_rel: Option<f64>,
}

pub fn delta_acc(before: f64, after: f64) -> PerturbationReport {
    let delta_abs = after - before;
    PerturbationReport {
        acc_before: before,
        acc_after: after,
        delta_abs,
        delta_rel: (before != 0.0).then(|| 100.0 * delta_abs / before),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub metric_name: String,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single value.
    pub std: f64,
}

pub fn aggregate_runs(metric_name: &str, values: &[f64]) -> Result<ScoreDistribution> {
    if values.is_empty() {
        return Err(Error::Empty("no run values to aggregate"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(ScoreDistribution {
        metric_name: metric_name.to_string(),
        values: values.to_vec(),
        mean,
        std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub run: u32,
    pub token_f1: f64,
    pub segment_f1: f64,
    pub sentence_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label_space: LabelSpace,
    pub sentences: usize,
    pub runs: Vec<RunScores>,
    pub token_f1: ScoreDistribution,
    pub segment_f1: ScoreDistribution,
    pub sentence_f1: ScoreDistribution,
}

impl EvalReport {
    pub fn render(&self) -> String {
        let mut t = Table::new(["run", "token-F1", "segment-F1", "sentence-F1"]);
        for r in &self.runs {
            t.row([
                r.run.to_string(),
                format!("{:.3}", r.token_f1),
                format!("{:.3}", r.segment_f1),
                format!("{:.3}", r.sentence_f1),
            ]);
        }
        let agg = |d: &ScoreDistribution| format!("{:.3} ({:.3})", d.mean, d.std);
        t.row([
            "mean (std)".to_string(),
            agg(&self.token_f1),
            agg(&self.segment_f1),
            agg(&self.sentence_f1),
        ]);
        t.render()
    }
}

/// Scores every run of `preds` against `gold`.
pub fn evaluate(gold: &Corpus, preds: &Predictions, space: LabelSpace, seed: Seed) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::Empty("no predictions"));
    }
    let mut runs = Vec::new();
    for (run, p) in preds.runs() {
        runs.push(RunScores {
            run,
            token_f1: token_f1(gold, p, run, space)?,
            segment_f1: segment_f1(gold, p, run)?,
            sentence_f1: sentence_f1(gold, p, run, space, seed)?,
        });
    }
    let collect = |f: fn(&RunScores) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    Ok(EvalReport {
        label_space: space,
        sentences: gold.len(),
        token_f1: aggregate_runs("token-F1", &collect(|r| r.token_f1))?,
        segment_f1: aggregate_runs("segment-F1", &collect(|r| r.segment_f1))?,
        sentence_f1: aggregate_runs("sentence-F1", &collect(|r| r.sentence_f1))?,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TopicRegistry;
    use proptest::prelude::*;
    use Label::*;

    fn seg(label: Label, start: usize, end: usize) -> Segment {
        Segment {
            label,
            start,
            end,
            is_punct_only: false,
        }
    }

    #[test]
    fn per_class_cases() {
        let g = [Pro, Pro, Non];
        assert_eq!(per_class_f1(&g, &g, &Pro).unwrap(), Some(1.0));
        // P = 1/1, R = 1/2 -> 2/3
        let f = per_class_f1(&g, &[Pro, Non, Non], &Pro).unwrap().unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(per_class_f1(&g, &g, &Con).unwrap(), None);
        assert!(matches!(per_class_f1(&g, &[Pro], &Pro), Err(Error::SizeMismatch(3, 1))));
        // present in gold only -> 0
        assert_eq!(per_class_f1(&[Con], &[Pro], &Con).unwrap(), Some(0.0));
    }

    #[test]
    fn overlap_ratio_cases() {
        let gold = seg(Pro, 1, 5);
        assert_eq!(segment_overlap_ratio(&gold, &[Non, Pro, Pro, Non, Pro, Non]), 0.75);
        assert_eq!(segment_overlap_ratio(&gold, &[Non, Pro, Pro, Pro, Pro, Non]), 1.0);
        assert_eq!(segment_overlap_ratio(&gold, &[Pro, Con, Non, Con, Non, Pro]), 0.0);
    }

    #[test]
    fn sentence_segment_cases() {
        let none = [seg(Non, 0, 3)];
        assert_eq!(sentence_segment_f1(&none, &[Non, Non, Non]), 1.0);
        assert_eq!(sentence_segment_f1(&none, &[Non, Con, Non]), 0.0);
        assert_eq!(sentence_segment_f1(&[seg(Con, 0, 2)], &[Con, Con]), 1.0);
        // PRO(4) NON(3) CON(2): PRO matched on 2/4 = 0.5 (not > 0.5), CON on 2/2
        let gold = [seg(Pro, 0, 4), seg(Non, 4, 7), seg(Con, 7, 9)];
        let pred = [Pro, Pro, Non, Non, Non, Non, Non, Con, Con];
        assert_eq!(sentence_segment_f1(&gold, &pred), 0.5);
    }

    #[test]
    fn accuracy_cases() {
        use BinaryLabel::*;
        assert_eq!(accuracy(&[Arg, NonArg], &[Arg, NonArg]).unwrap(), 1.0);
        assert_eq!(accuracy(&[Arg, NonArg], &[NonArg, Arg]).unwrap(), 0.0);
        let gold = vec![Arg; 25];
        let mut pred = vec![Arg; 19];
        pred.extend(vec![NonArg; 6]);
        assert_eq!(accuracy(&gold, &pred).unwrap(), 0.76);
        assert!(accuracy(&gold, &pred[..3]).is_err());
    }

    #[test]
    fn delta_cases() {
        let r = delta_acc(0.760, 0.683);
        assert!((r.delta_abs + 0.077).abs() < 1e-12);
        assert!((r.delta_rel.unwrap() + 10.1).abs() < 0.05);
        let r = delta_acc(0.760, 0.830);
        assert!((r.delta_abs - 0.070).abs() < 1e-12);
        assert!((r.delta_rel.unwrap() - 9.2).abs() < 0.05);
        let r = delta_acc(0.5, 0.5);
        assert_eq!((r.delta_abs, r.delta_rel), (0.0, Some(0.0)));
        assert_eq!(delta_acc(0.0, 0.3).delta_rel, None);
    }

    #[test]
    fn aggregate_cases() {
        let d = aggregate_runs("f1", &[0.5]).unwrap();
        assert_eq!((d.mean, d.std), (0.5, 0.0));
        let d = aggregate_runs("f1", &[0.1, 0.2, 0.3]).unwrap();
        assert!((d.mean - 0.2).abs() < 1e-15);
        assert!((d.std - 0.1).abs() < 1e-15);
        assert_eq!(aggregate_runs("f1", &[0.7; 5]).unwrap().std, 0.0);
        assert!(aggregate_runs("f1", &[]).is_err());
    }

    #[test]
    fn parses_both_granularities() {
        let src = r#"{"sentence_id":"a","run":0,"granularity":"token","labels":["PRO","NON"]}
{"sentence_id":"b","run":0,"granularity":"sentence","label":"CON"}
{"sentence_id":"a","run":1,"granularity":"sentence","label":"NON"}"#;
        let p = parse_predictions(src.as_bytes()).unwrap();
        assert_eq!(p.run_ids().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(p.run(0).unwrap()["b"], Payload::Sentence(Con));
        let mut out = Vec::new();
        write_predictions(&p, &mut out).unwrap();
        assert_eq!(parse_predictions(out.as_slice()).unwrap(), p);
    }

    #[test]
    fn rejects_bad_prediction_lines() {
        for bad in [
            r#"{"sentence_id":"a","run":0,"granularity":"token","label":"PRO"}"#,
            r#"{"sentence_id":"a","run":0,"granularity":"sentence","labels":["PRO"],"label":"PRO"}"#,
            r#"{"sentence_id":"a","run":0,"granularity":"sentence","label":"ARG"}"#,
            r#"{"sentence_id":"a","run":0,"granularity":"word","label":"PRO"}"#,
        ] {
            assert!(parse_predictions(bad.as_bytes()).is_err(), "{bad}");
        }
        let dup = "{\"sentence_id\":\"a\",\"run\":0,\"granularity\":\"sentence\",\"label\":\"PRO\"}\n\
                   {\"sentence_id\":\"a\",\"run\":0,\"granularity\":\"sentence\",\"label\":\"PRO\"}";
        assert!(matches!(parse_predictions(dup.as_bytes()), Err(Error::DuplicateId(_))));
    }

    fn toy_corpus() -> Corpus {
        let mut c = Corpus::new(TopicRegistry::aurc8());
        let t = |n: usize| (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>();
        c.push("s1", "gun control", t(5), vec![Non, Con, Con, Non, Non]).unwrap();
        c.push("s2", "gun control", t(4), vec![Pro, Pro, Pro, Non]).unwrap();
        c.push("s3", "school uniforms", t(3), vec![Non, Non, Non]).unwrap();
        c
    }

    fn perfect(c: &Corpus) -> RunPredictions {
        c.iter()
            .map(|s| (s.id.clone(), Payload::Tokens(s.labels.clone())))
            .collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let c = toy_corpus();
        let p = perfect(&c);
        for space in [LabelSpace::ThreeClass, LabelSpace::Binary] {
            assert_eq!(token_f1(&c, &p, 0, space).unwrap(), 1.0);
            assert_eq!(sentence_f1(&c, &p, 0, space, Seed(1)).unwrap(), 1.0);
        }
        assert_eq!(segment_f1(&c, &p, 0).unwrap(), 1.0);
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let c = toy_corpus();
        let mut p = perfect(&c);
        p.shift_remove("s2");
        assert!(matches!(
            token_f1(&c, &p, 3, LabelSpace::ThreeClass),
            Err(Error::MissingPrediction { run: 3, .. })
        ));
    }

    #[test]
    fn deranged_sentence_labels_score_zero() {
        let c = toy_corpus();
        // gold sentence labels: CON, PRO, NON; derangement PRO->CON->NON->PRO
        let shift = |l: Label| match l {
            Pro => Con,
            Con => Non,
            Non => Pro,
        };
        let p: RunPredictions = c
            .iter()
            .map(|s| {
                let g = derive_sentence_label(&s.labels, Seed(0), &s.id).unwrap();
                (s.id.clone(), Payload::Sentence(shift(g)))
            })
            .collect();
        assert_eq!(sentence_f1(&c, &p, 0, LabelSpace::ThreeClass, Seed(0)).unwrap(), 0.0);
    }

    /// Independent confusion-matrix oracle: builds the full k x k matrix and
    /// reads per-class precision/recall from rows and columns.
    fn oracle_macro_f1(gold: &[usize], pred: &[usize], k: usize) -> f64 {
        let mut m = vec![vec![0f64; k]; k];
        for (&g, &p) in gold.iter().zip(pred) {
            m[g][p] += 1.0;
        }
        let mut f1s = Vec::new();
        for (c, counts) in m.iter().enumerate() {
            let row: f64 = counts.iter().sum();
            let col: f64 = (0..k).map(|r| m[r][c]).sum();
            if row == 0.0 && col == 0.0 {
                continue;
            }
            let p = if col > 0.0 { m[c][c] / col } else { 0.0 };
            let r = if row > 0.0 { m[c][c] / row } else { 0.0 };
            f1s.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        }
        f1s.iter().sum::<f64>() / f1s.len() as f64
    }

    #[test]
    fn toy_fixture_matches_oracle() {
        let c = toy_corpus();
        let p: RunPredictions = [
            ("s1", Payload::Tokens(vec![Non, Con, Pro, Pro, Non])),
            ("s2", Payload::Sentence(Pro)),
            ("s3", Payload::Tokens(vec![Non, Con, Non])),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let idx = |l: Label| match l {
            Pro => 0,
            Con => 1,
            Non => 2,
        };
        let gold_tokens: Vec<usize> = c.iter().flat_map(|s| s.labels.iter().map(|&l| idx(l))).collect();
        let pred_tokens: Vec<usize> = [Non, Con, Pro, Pro, Non, Pro, Pro, Pro, Pro, Non, Con, Non]
            .iter()
            .map(|&l| idx(l))
            .collect();
        let expected = oracle_macro_f1(&gold_tokens, &pred_tokens, 3);
        let got = token_f1(&c, &p, 0, LabelSpace::ThreeClass).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");

        // sentence level: gold CON, PRO, NON; predicted s1 has PRO 2 > CON 1 -> PRO,
        // s2 PRO, s3 CON
        let expected = oracle_macro_f1(&[1, 0, 2], &[0, 0, 1], 3);
        let got = sentence_f1(&c, &p, 0, LabelSpace::ThreeClass, Seed(0)).unwrap();
        assert!((got - expected).abs() < 1e-12);

        // binary tokens
        let bin = |v: &[usize]| v.iter().map(|&x| usize::from(x == 2)).collect::<Vec<_>>();
        let expected = oracle_macro_f1(&bin(&gold_tokens), &bin(&pred_tokens), 2);
        let got = token_f1(&c, &p, 0, LabelSpace::Binary).unwrap();
        assert!((got - expected).abs() < 1e-12);

        // segment level: s1 CON[1,3) r = 1/2 -> 0; s2 PRO[0,3) r = 1 -> 1;
        // s3 has no gold ARG but CON predicted -> 0
        let got = segment_f1(&c, &p, 0).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn broadcast_equivalence() {
        let c = toy_corpus();
        let sent: RunPredictions = [("s1", Con), ("s2", Non), ("s3", Pro)]
            .into_iter()
            .map(|(k, l)| (k.to_string(), Payload::Sentence(l)))
            .collect();
        let expanded: RunPredictions = sent
            .iter()
            .map(|(k, p)| {
                let n = c.get(k).unwrap().len();
                (k.clone(), Payload::Tokens(p.token_labels(k, n).unwrap()))
            })
            .collect();
        for space in [LabelSpace::ThreeClass, LabelSpace::Binary] {
            assert_eq!(
                token_f1(&c, &sent, 0, space).unwrap(),
                token_f1(&c, &expanded, 0, space).unwrap()
            );
        }
    }

    fn label_strategy() -> impl Strategy<Value = Label> {
        prop_oneof![Just(Pro), Just(Con), Just(Non)]
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_order_invariant(
            rows in prop::collection::vec(
                (1usize..10).prop_flat_map(|n| (
                    prop::collection::vec(label_strategy(), n),
                    prop::collection::vec(label_strategy(), n),
                )),
                1..20,
            )
        ) {
            let build = |order: &mut dyn Iterator<Item = usize>| {
                let mut c = Corpus::new(TopicRegistry::aurc8());
                let mut p = RunPredictions::new();
                for i in order {
                    let (g, pr) = &rows[i];
                    let toks = (0..g.len()).map(|j| format!("t{j}")).collect();
                    c.push(format!("s{i}"), "cloning", toks, g.clone()).unwrap();
                    p.insert(format!("s{i}"), Payload::Tokens(pr.clone()));
                }
                (c, p)
            };
            let (c1, p1) = build(&mut (0..rows.len()));
            let (c2, p2) = build(&mut (0..rows.len()).rev());
            for space in [LabelSpace::ThreeClass, LabelSpace::Binary] {
                let a = token_f1(&c1, &p1, 0, space).unwrap();
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert_eq!(a, token_f1(&c2, &p2, 0, space).unwrap());
                let s = sentence_f1(&c1, &p1, 0, space, Seed(9)).unwrap();
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert_eq!(s, sentence_f1(&c2, &p2, 0, space, Seed(9)).unwrap());
            }
            let g = segment_f1(&c1, &p1, 0).unwrap();
            prop_assert!((0.0..=1.0).contains(&g));
            prop_assert!((g - segment_f1(&c2, &p2, 0).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn delta_identities(before in 0.0f64..=1.0, after in 0.0f64..=1.0) {
            let r = delta_acc(before, after);
            prop_assert!((r.delta_abs - (r.acc_after - r.acc_before)).abs() <= 1e-12);
            if before > 0.0 {
                prop_assert!((r.delta_rel.unwrap() - 100.0 * r.delta_abs / r.acc_before).abs() <= 1e-12);
            }
        }
    }
}
