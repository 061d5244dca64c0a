//! Before/after perturbation sets (T1 announcing segments, T2 connector
//! concatenation, T3 context removal) and their accuracy deltas.
//!
//! Manual steps are file round-trips over one JSONL record type:
//! generators emit candidates, a curator edits them, and [`validate`] checks
//! schema and gold-label invariants before assembly or evaluation.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{content_segments, segmentize, Corpus, LabeledSentence};
use crate::error::{Error, Result};
use crate::label::{BinaryLabel, Label};
use crate::metrics::{aggregate_runs, delta_acc, Payload, PerturbationReport, Predictions, ScoreDistribution};
use crate::table::Table;

/// Tokens inserted between the ARG segment and the non-ARG sentence in T2.
pub const CONNECTOR: [&str; 3] = ["and", "besides", ","];

/// Assembled T1 items wanted per topic.
pub const T1_TOPIC_TARGET: usize = 100;

/// Which side of an adjacent pair comes first in the source sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Order {
    ArgFirst,
    NonArgFirst,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub tokens: Vec<String>,
}

/// An ARG segment and an adjacent non-ARG segment of the same sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub pair_id: String,
    pub source_sentence_id: String,
    pub topic: String,
    pub arg_label: Label,
    pub arg: Span,
    pub non_arg: Span,
    pub order: Order,
}

impl SegmentPair {
    /// Both spans in sentence order.
    pub fn tokens(&self) -> Vec<String> {
        let (first, second) = match self.order {
            Order::ArgFirst => (&self.arg, &self.non_arg),
            Order::NonArgFirst => (&self.non_arg, &self.arg),
        };
        first.tokens.iter().chain(&second.tokens).cloned().collect()
    }
}

fn span(sentence: &LabeledSentence, start: usize, end: usize) -> Span {
    Span {
        start,
        end,
        tokens: sentence.tokens[start..end].to_vec(),
    }
}

/// Adjacent (ARG, non-ARG) segment pairs; punctuation-only `NON` segments never pair.
pub fn extract_adjacent_pairs(corpus: &Corpus, filter: Option<Order>) -> Vec<SegmentPair> {
    let mut out = Vec::new();
    for s in corpus {
        let segs = segmentize(s);
        for (i, w) in segs.windows(2).enumerate() {
            let (x, y) = (w[0], w[1]);
            let (arg, non, order) = match (x.label.is_arg(), y.label.is_arg()) {
                (true, false) => (x, y, Order::ArgFirst),
                (false, true) => (y, x, Order::NonArgFirst),
                _ => continue,
            };
            if non.is_punct_only || filter.is_some_and(|f| f != order) {
                continue;
            }
            out.push(SegmentPair {
                pair_id: format!("{}:{}", s.id, i),
                source_sentence_id: s.id.clone(),
                topic: s.topic.clone(),
                arg_label: arg.label,
                arg: span(s, arg.start, arg.end),
                non_arg: span(s, non.start, non.end),
                order,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestId {
    T1,
    T2,
    T3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnnFlag {
    Ann,
    NonAnn,
    Discard,
}

/// One candidate, annotation or assembled item; the same JSONL schema serves every stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationRecord {
    pub pair_id: String,
    pub test: TestId,
    pub before_tokens: Vec<String>,
    pub after_tokens: Option<Vec<String>>,
    pub gold_before: BinaryLabel,
    pub gold_after: BinaryLabel,
    pub ann_flag: Option<AnnFlag>,
    pub completion_tokens: Option<Vec<String>>,
    pub approved: bool,
    pub topic: String,
    pub source_ids: Vec<String>,
    /// Offset of `before_tokens` in the first source sentence.
    pub source_start: usize,
    /// T1: length of the announcing prefix. T2: length of the ARG part.
    /// T3: offset of the ARG segment inside `before_tokens`.
    pub split_at: usize,
}

impl PerturbationRecord {
    pub fn before_id(&self) -> String {
        format!("{}#before", self.pair_id)
    }

    pub fn after_id(&self) -> String {
        format!("{}#after", self.pair_id)
    }
}

pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<PerturbationRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&text).map_err(|source| Error::MalformedJson { line: i + 1, source })?,
        );
    }
    Ok(out)
}

pub fn write_records<W: Write>(records: &[PerturbationRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn annotation_error(r: &PerturbationRecord, message: impl Into<String>) -> Error {
    Error::Annotation {
        pair_id: r.pair_id.clone(),
        message: message.into(),
    }
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    needle.is_empty() || haystack.windows(needle.len()).any(|w| w == needle)
}

fn validate_one(r: &PerturbationRecord) -> Result<()> {
    let fail = |m: &str| Err(annotation_error(r, m));
    if r.pair_id.is_empty() {
        return fail("empty pair_id");
    }
    if r.before_tokens.is_empty() {
        return fail("empty before_tokens");
    }
    if r.split_at > r.before_tokens.len() {
        return fail("split_at beyond before_tokens");
    }
    if r.gold_before != BinaryLabel::Arg {
        return fail("before gold must be ARG");
    }
    if matches!(&r.after_tokens, Some(a) if a.is_empty()) {
        return fail("empty after_tokens");
    }
    match r.test {
        TestId::T1 => {
            if r.gold_after != BinaryLabel::NonArg {
                return fail("T1 after gold must be NON_ARG");
            }
            match (&r.ann_flag, &r.completion_tokens) {
                (Some(AnnFlag::Ann), Some(c)) if c.is_empty() => return fail("empty completion"),
                (Some(AnnFlag::Ann), _) => {}
                (_, Some(_)) => return fail("completion on a record not flagged ANN"),
                _ => {}
            }
            if let Some(after) = &r.after_tokens {
                if after.len() < r.split_at || after[..r.split_at] != r.before_tokens[..r.split_at] {
                    return fail("after does not keep the announcing prefix");
                }
            }
        }
        TestId::T2 => {
            if r.gold_after != BinaryLabel::Arg {
                return fail("T2 after gold must be ARG");
            }
            if r.ann_flag.is_some() || r.completion_tokens.is_some() {
                return fail("T2 records take no annotation");
            }
            if let Some(after) = &r.after_tokens {
                let k = r.split_at;
                let ok = k == r.before_tokens.len()
                    && after.len() > k + CONNECTOR.len()
                    && after[..k] == r.before_tokens[..]
                    && after[k..k + CONNECTOR.len()].iter().eq(CONNECTOR.iter());
                if !ok {
                    return fail("after is not ARG segment + connector + sentence");
                }
            }
        }
        TestId::T3 => {
            if r.gold_after != BinaryLabel::Arg {
                return fail("T3 after gold must be ARG");
            }
            if r.ann_flag.is_some() || r.completion_tokens.is_some() {
                return fail("T3 records take no annotation");
            }
            if let Some(after) = &r.after_tokens {
                if !contains_run(&r.before_tokens, after) || after.len() >= r.before_tokens.len() {
                    return fail("after is not a proper contiguous part of before");
                }
            }
        }
    }
    Ok(())
}

/// Schema and gold-label invariants, plus unique ids and unique (test, provenance) keys.
pub fn validate(records: &[PerturbationRecord]) -> Result<()> {
    let mut ids = HashSet::new();
    let mut provenance = HashSet::new();
    for r in records {
        validate_one(r)?;
        if !ids.insert(r.pair_id.as_str()) {
            return Err(annotation_error(r, "duplicate pair_id"));
        }
        if !provenance.insert((r.test, r.source_ids.clone(), r.source_start)) {
            return Err(annotation_error(r, "duplicate provenance"));
        }
    }
    Ok(())
}

/// Candidates for announcing-segment annotation, one per non-ARG-first pair.
pub fn gen_t1_candidates(pairs: &[SegmentPair]) -> Vec<PerturbationRecord> {
    pairs
        .iter()
        .filter(|p| p.order == Order::NonArgFirst)
        .map(|p| PerturbationRecord {
            pair_id: format!("T1:{}", p.pair_id),
            test: TestId::T1,
            before_tokens: p.tokens(),
            after_tokens: None,
            gold_before: BinaryLabel::Arg,
            gold_after: BinaryLabel::NonArg,
            ann_flag: None,
            completion_tokens: None,
            approved: false,
            topic: p.topic.clone(),
            source_ids: vec![p.source_sentence_id.clone()],
            source_start: p.non_arg.start,
            split_at: p.non_arg.tokens.len(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct T1Assembly {
    pub pairs: Vec<PerturbationRecord>,
    /// Assembled items per topic, to compare with [`T1_TOPIC_TARGET`].
    pub per_topic: IndexMap<String, usize>,
    pub discarded: usize,
    pub non_ann: usize,
    pub unflagged: usize,
}

/// Builds T1 items from annotated candidates: after = ANN prefix + completion.
pub fn assemble_t1(records: &[PerturbationRecord]) -> Result<T1Assembly> {
    validate(records)?;
    let mut out = T1Assembly::default();
    for r in records {
        if r.test != TestId::T1 {
            return Err(annotation_error(r, "not a T1 record"));
        }
        match r.ann_flag {
            None => out.unflagged += 1,
            Some(AnnFlag::Discard) => out.discarded += 1,
            Some(AnnFlag::NonAnn) => out.non_ann += 1,
            Some(AnnFlag::Ann) => {
                let completion = r
                    .completion_tokens
                    .as_ref()
                    .ok_or_else(|| annotation_error(r, "ANN record without completion"))?;
                let (prefix, arg) = r.before_tokens.split_at(r.split_at);
                if completion[..] == *arg {
                    return Err(annotation_error(r, "completion repeats the ARG segment"));
                }
                let after: Vec<String> = prefix.iter().chain(completion).cloned().collect();
                *out.per_topic.entry(r.topic.clone()).or_default() += 1;
                out.pairs.push(PerturbationRecord {
                    after_tokens: Some(after),
                    approved: true,
                    ..r.clone()
                });
            }
        }
    }
    if out.pairs.is_empty() {
        log::warn!("no ANN records; T1 set is empty");
    }
    for (topic, n) in &out.per_topic {
        if *n != T1_TOPIC_TARGET {
            log::info!("T1 topic {topic:?}: {n} items (target {T1_TOPIC_TARGET})");
        }
    }
    Ok(out)
}

/// The single ARG segment of a sentence made of one ARG segment plus punctuation.
fn standalone_arg(s: &LabeledSentence) -> Option<Vec<String>> {
    match content_segments(s).as_slice() {
        [seg] if seg.label.is_arg() => Some(s.tokens[seg.range()].to_vec()),
        _ => None,
    }
}

fn topics_in_order(corpus: &Corpus) -> Vec<&str> {
    let present: HashSet<&str> = corpus.iter().map(|s| s.topic.as_str()).collect();
    corpus
        .registry()
        .names()
        .iter()
        .map(String::as_str)
        .filter(|t| present.contains(t))
        .collect()
}

/// Candidates joining a stand-alone ARG segment and a pure non-ARG sentence of
/// the same topic with [`CONNECTOR`]; up to `count_per_topic` per topic.
pub fn gen_t2(corpus: &Corpus, count_per_topic: usize, seed: u64) -> Result<Vec<PerturbationRecord>> {
    let mut out = Vec::new();
    if count_per_topic == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for topic in topics_in_order(corpus) {
        let in_topic = corpus.iter().filter(|s| s.topic == topic);
        let args: Vec<(&LabeledSentence, Vec<String>)> = in_topic
            .clone()
            .filter_map(|s| standalone_arg(s).map(|a| (s, a)))
            .collect();
        let mut nons: Vec<&LabeledSentence> = in_topic.filter(|s| !s.is_arg()).collect();
        if nons.is_empty() {
            return Err(Error::NoNonArgSentences(topic.to_string()));
        }
        if args.len() < count_per_topic {
            log::warn!(
                "T2 topic {topic:?}: {} stand-alone ARG segments, {count_per_topic} requested",
                args.len()
            );
        }
        let k = count_per_topic.min(args.len());
        let picked = rand::seq::index::sample(&mut rng, args.len(), k);
        nons.shuffle(&mut rng);
        for (j, i) in picked.into_iter().enumerate() {
            let (s, arg) = &args[i];
            let non = nons[j % nons.len()];
            let mut after = arg.clone();
            after.extend(CONNECTOR.iter().map(|t| t.to_string()));
            after.extend(non.tokens.iter().cloned());
            out.push(PerturbationRecord {
                pair_id: format!("T2:{}+{}", s.id, non.id),
                test: TestId::T2,
                before_tokens: arg.clone(),
                after_tokens: Some(after),
                gold_before: BinaryLabel::Arg,
                gold_after: BinaryLabel::Arg,
                ann_flag: None,
                completion_tokens: None,
                approved: false,
                topic: topic.to_string(),
                source_ids: vec![s.id.clone(), non.id.clone()],
                source_start: 0,
                split_at: arg.len(),
            });
        }
    }
    Ok(out)
}

/// Allowed imbalance as a share of the total.
pub const BALANCE_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub total: usize,
    pub by_order: BTreeMap<Order, usize>,
    pub by_topic: IndexMap<String, usize>,
}

impl BalanceReport {
    fn spread<'a>(counts: impl Iterator<Item = &'a usize>) -> usize {
        let v: Vec<usize> = counts.copied().collect();
        v.iter().max().unwrap_or(&0) - v.iter().min().unwrap_or(&0)
    }

    pub fn order_spread(&self) -> usize {
        Self::spread(self.by_order.values())
    }

    pub fn topic_spread(&self) -> usize {
        Self::spread(self.by_topic.values())
    }

    pub fn within(&self, tolerance: f64) -> bool {
        let limit = tolerance * self.total as f64;
        self.order_spread() as f64 <= limit && self.topic_spread() as f64 <= limit
    }
}

/// Order and topic counts of T3 records; every order and every listed topic is counted, even at zero.
pub fn balance_report<'a>(records: &[PerturbationRecord], topics: impl IntoIterator<Item = &'a str>) -> BalanceReport {
    let mut by_order: BTreeMap<Order, usize> = [(Order::ArgFirst, 0), (Order::NonArgFirst, 0)].into();
    let mut by_topic: IndexMap<String, usize> = topics.into_iter().map(|t| (t.to_string(), 0)).collect();
    for r in records {
        let order = if r.split_at == 0 { Order::ArgFirst } else { Order::NonArgFirst };
        *by_order.entry(order).or_default() += 1;
        *by_topic.entry(r.topic.clone()).or_default() += 1;
    }
    BalanceReport {
        total: records.len(),
        by_order,
        by_topic,
    }
}

/// Candidates stripping the non-ARG context of adjacent pairs, sampled evenly
/// over (topic, order) strata.
pub fn gen_t3(corpus: &Corpus, count: usize, seed: u64) -> Result<(Vec<PerturbationRecord>, BalanceReport)> {
    let topics = topics_in_order(corpus);
    let mut strata: BTreeMap<(usize, Order), Vec<SegmentPair>> = BTreeMap::new();
    for ti in 0..topics.len() {
        for o in [Order::ArgFirst, Order::NonArgFirst] {
            strata.insert((ti, o), Vec::new());
        }
    }
    let index: IndexMap<&str, usize> = topics.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    for p in extract_adjacent_pairs(corpus, None) {
        strata.get_mut(&(index[p.topic.as_str()], p.order)).unwrap().push(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queues: Vec<std::vec::IntoIter<SegmentPair>> = strata
        .into_values()
        .map(|mut v| {
            v.shuffle(&mut rng);
            v.into_iter()
        })
        .collect();

    let mut picked = Vec::with_capacity(count);
    while picked.len() < count {
        let before = picked.len();
        for q in queues.iter_mut() {
            if picked.len() == count {
                break;
            }
            if let Some(p) = q.next() {
                picked.push(p);
            }
        }
        if picked.len() == before {
            break;
        }
    }
    if picked.len() < count {
        log::warn!("T3: {} adjacent pairs available, {count} requested", picked.len());
    }

    let records: Vec<PerturbationRecord> = picked
        .into_iter()
        .map(|p| PerturbationRecord {
            pair_id: format!("T3:{}", p.pair_id),
            test: TestId::T3,
            before_tokens: p.tokens(),
            after_tokens: Some(p.arg.tokens.clone()),
            gold_before: BinaryLabel::Arg,
            gold_after: BinaryLabel::Arg,
            ann_flag: None,
            completion_tokens: None,
            approved: false,
            topic: p.topic.clone(),
            source_ids: vec![p.source_sentence_id.clone()],
            source_start: p.arg.start.min(p.non_arg.start),
            split_at: match p.order {
                Order::ArgFirst => 0,
                Order::NonArgFirst => p.non_arg.tokens.len(),
            },
        })
        .collect();
    let report = balance_report(&records, topics.iter().copied());
    if !report.within(BALANCE_TOLERANCE) {
        return Err(Error::Balance(format!(
            "{} items, order spread {}, topic spread {}",
            report.total,
            report.order_spread(),
            report.topic_spread()
        )));
    }
    Ok((records, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDelta {
    pub run: u32,
    #[serde(flatten)]
    pub report: PerturbationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEval {
    pub test: TestId,
    pub pairs: usize,
    pub runs: Vec<RunDelta>,
    pub before: ScoreDistribution,
    pub after: ScoreDistribution,
    /// Delta between the mean accuracies.
    pub summary: PerturbationReport,
}

fn predicted(payload: &Payload, id: &str, n: usize) -> Result<BinaryLabel> {
    if let Payload::Tokens(ls) = payload {
        if ls.len() != n {
            return Err(Error::PredictionLength {
                sentence_id: id.to_string(),
                expected: n,
                got: ls.len(),
            });
        }
    }
    payload.binary_label()
}

/// Accuracy before and after per run, one evaluation per test present in `records`.
pub fn eval_perturbation(records: &[PerturbationRecord], preds: &Predictions) -> Result<Vec<PerturbationEval>> {
    if preds.is_empty() {
        return Err(Error::Empty("no predictions"));
    }
    let mut by_test: BTreeMap<TestId, Vec<&PerturbationRecord>> = BTreeMap::new();
    for r in records {
        if r.after_tokens.is_none() {
            return Err(annotation_error(r, "no after_tokens; assemble the set first"));
        }
        by_test.entry(r.test).or_default().push(r);
    }
    let mut out = Vec::new();
    for (test, items) in by_test {
        let mut runs = Vec::new();
        for (run, p) in preds.runs() {
            let hits = items
                .par_iter()
                .map(|r| {
                    let side = |id: String, n: usize, gold: BinaryLabel| -> Result<bool> {
                        let payload = p.get(&id).ok_or_else(|| Error::MissingPrediction {
                            sentence_id: id.clone(),
                            run,
                        })?;
                        Ok(predicted(payload, &id, n)? == gold)
                    };
                    let after_len = r.after_tokens.as_ref().map_or(0, Vec::len);
                    Ok((
                        side(r.before_id(), r.before_tokens.len(), r.gold_before)?,
                        side(r.after_id(), after_len, r.gold_after)?,
                    ))
                })
                .collect::<Result<Vec<(bool, bool)>>>()?;
            let n = hits.len() as f64;
            let before = hits.iter().filter(|h| h.0).count() as f64 / n;
            let after = hits.iter().filter(|h| h.1).count() as f64 / n;
            runs.push(RunDelta {
                run,
                report: delta_acc(before, after),
            });
        }
        let before = aggregate_runs("acc before", &runs.iter().map(|r| r.report.acc_before).collect::<Vec<_>>())?;
        let after = aggregate_runs("acc after", &runs.iter().map(|r| r.report.acc_after).collect::<Vec<_>>())?;
        out.push(PerturbationEval {
            test,
            pairs: items.len(),
            summary: delta_acc(before.mean, after.mean),
            runs,
            before,
            after,
        });
    }
    Ok(out)
}

fn decimal(v: f64) -> String {
    let s = format!("{:.3}", v.abs());
    let s = s.strip_prefix('0').unwrap_or(&s).to_string();
    if v < 0.0 && s != ".000" {
        format!("-{s}")
    } else {
        s
    }
}

fn signed_decimal(v: f64) -> String {
    let s = decimal(v);
    if s.starts_with('-') { s } else { format!("+{s}") }
}

/// Grid of models by tests: accuracy before, after, and the absolute and relative delta.
pub fn render_grid(cells: &[(String, PerturbationEval)]) -> String {
    let tests: Vec<TestId> = {
        let mut t: Vec<TestId> = cells.iter().map(|c| c.1.test).collect();
        t.sort();
        t.dedup();
        t
    };
    let mut header = vec!["model".to_string()];
    for t in &tests {
        header.extend([format!("{t:?} before"), format!("{t:?} after"), format!("{t:?} Δacc")]);
    }
    let mut table = Table::new(header);
    let mut models: Vec<&str> = Vec::new();
    for (m, _) in cells {
        if !models.contains(&m.as_str()) {
            models.push(m);
        }
    }
    for m in models {
        let mut row = vec![m.to_string()];
        for t in &tests {
            match cells.iter().find(|c| c.0 == m && c.1.test == *t) {
                Some((_, e)) => {
                    let rel = match e.summary.delta_rel {
                        Some(r) => format!("{r:+.1}%"),
                        None => "n/a".into(),
                    };
                    row.extend([
                        format!("{} ({})", decimal(e.before.mean), decimal(e.before.std)),
                        format!("{} ({})", decimal(e.after.mean), decimal(e.after.std)),
                        format!("{} ({rel})", signed_decimal(e.summary.delta_abs)),
                    ]);
                }
                None => row.extend(["-".to_string(), "-".to_string(), "-".to_string()]),
            }
        }
        table.row(row);
    }
    table.render()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TopicRegistry;
    use crate::label::Label::*;
    use crate::metrics::PredictionRecord;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn push(c: &mut Corpus, id: &str, topic: &str, parts: &[(&str, Label)]) {
        let mut tokens = Vec::new();
        let mut labels = Vec::new();
        for (text, l) in parts {
            for t in toks(text) {
                tokens.push(t);
                labels.push(*l);
            }
        }
        c.push(id, topic, tokens, labels).unwrap();
    }

    fn gun_control() -> Corpus {
        let mut c = Corpus::new(TopicRegistry::aurc8());
        push(
            &mut c,
            "gc1",
            "gun control",
            &[
                ("Yes ,", Non),
                ("guns can be used for protection", Con),
                ("but", Non),
                ("laws are meant to protect us", Pro),
                (", too .", Non),
            ],
        );
        c
    }

    /// Every index pair (i, i+1) of segments, checked from scratch.
    fn adjacency_oracle(s: &LabeledSentence) -> usize {
        let segs = segmentize(s);
        (0..segs.len().saturating_sub(1))
            .filter(|&i| {
                let (x, y) = (&segs[i], &segs[i + 1]);
                let non = if x.label.is_arg() { y } else { x };
                x.label.is_arg() != y.label.is_arg() && !non.is_punct_only
            })
            .count()
    }

    #[test]
    fn adjacent_pairs_in_example_sentence() {
        let c = gun_control();
        let all = extract_adjacent_pairs(&c, None);
        assert_eq!(all.len(), 4);
        assert_eq!(all.len(), adjacency_oracle(&c.sentences()[0]));
        let arg_first = extract_adjacent_pairs(&c, Some(Order::ArgFirst));
        assert_eq!(arg_first[0].arg.tokens, toks("guns can be used for protection"));
        assert_eq!(arg_first[0].non_arg.tokens, toks("but"));
        let non_first = extract_adjacent_pairs(&c, Some(Order::NonArgFirst));
        assert_eq!(non_first[0].non_arg.tokens, toks("Yes ,"));
        assert_eq!(non_first[0].tokens(), toks("Yes , guns can be used for protection"));
    }

    #[test]
    fn pro_non_con_non_gives_three_pairs() {
        let mut c = Corpus::new(TopicRegistry::aurc8());
        push(&mut c, "s", "abortion", &[("a b", Pro), ("c", Non), ("d", Con), ("e", Non)]);
        push(&mut c, "n", "abortion", &[("x y", Non)]);
        push(&mut c, "p", "abortion", &[("x", Pro), (".", Non)]);
        let pairs = extract_adjacent_pairs(&c, None);
        assert_eq!(pairs.len(), 3);
        assert!(pairs.iter().all(|p| p.source_sentence_id == "s"));
        assert_eq!(pairs.iter().filter(|p| p.order == Order::ArgFirst).count(), 2);
    }

    #[test]
    fn t1_candidates_and_assembly() {
        let mut c = Corpus::new(TopicRegistry::aurc8());
        push(
            &mut c,
            "ab1",
            "abortion",
            &[("Pro-abortion politicians think that", Non), ("women should decide", Pro), (".", Non)],
        );
        push(&mut c, "ab2", "abortion", &[("but", Non), ("it is murder", Con)]);
        push(&mut c, "ab3", "abortion", &[("Well", Non), ("it is fine", Pro)]);
        let cands = gen_t1_candidates(&extract_adjacent_pairs(&c, None));
        assert_eq!(cands.len(), 3);
        assert!(cands.iter().all(|r| r.ann_flag.is_none() && r.after_tokens.is_none()));
        validate(&cands).unwrap();
        assert!(gen_t1_candidates(&[]).is_empty());

        let mut edited = cands.clone();
        edited[0].ann_flag = Some(AnnFlag::Ann);
        edited[0].completion_tokens = Some(toks("the debate has become very delicate ."));
        edited[1].ann_flag = Some(AnnFlag::NonAnn);
        edited[2].ann_flag = Some(AnnFlag::Discard);
        let a = assemble_t1(&edited).unwrap();
        assert_eq!(a.pairs.len(), 1);
        assert_eq!((a.non_ann, a.discarded), (1, 1));
        let p = &a.pairs[0];
        assert_eq!(
            p.after_tokens.as_deref().unwrap(),
            toks("Pro-abortion politicians think that the debate has become very delicate .")
        );
        assert_eq!(p.before_tokens, toks("Pro-abortion politicians think that women should decide"));
        assert_eq!((p.gold_before, p.gold_after), (BinaryLabel::Arg, BinaryLabel::NonArg));
        assert_eq!(a.per_topic["abortion"], 1);
        validate(&a.pairs).unwrap();

        let mut missing = edited.clone();
        missing[0].completion_tokens = None;
        assert!(assemble_t1(&missing).is_err());
        let mut same = edited.clone();
        same[0].completion_tokens = Some(toks("women should decide"));
        assert!(assemble_t1(&same).is_err());
        let mut stray = edited.clone();
        stray[1].completion_tokens = Some(toks("x"));
        assert!(assemble_t1(&stray).is_err());

        assert!(assemble_t1(&cands).unwrap().pairs.is_empty());
    }

    fn uniform_corpus() -> Corpus {
        let mut c = Corpus::new(TopicRegistry::aurc8());
        push(&mut c, "u1", "school uniforms", &[("Uniforms force conformity", Con), (".", Non)]);
        push(&mut c, "u2", "school uniforms", &[("Uniforms are cheap", Pro)]);
        push(&mut c, "u3", "school uniforms", &[("Yes", Non), ("they help", Pro)]);
        push(
            &mut c,
            "u4",
            "school uniforms",
            &[("it 's a great service for parents .", Non)],
        );
        push(&mut c, "u5", "school uniforms", &[("I saw a shop .", Non)]);
        c
    }

    #[test]
    fn t2_concatenates_with_connector() {
        let c = uniform_corpus();
        let out = gen_t2(&c, 5, 7).unwrap();
        assert_eq!(out.len(), 2);
        for r in &out {
            let after = r.after_tokens.as_ref().unwrap();
            assert_eq!(&after[..r.split_at], &r.before_tokens[..]);
            assert_eq!(after[r.split_at..r.split_at + 3], ["and", "besides", ","]);
            assert_eq!((r.gold_before, r.gold_after), (BinaryLabel::Arg, BinaryLabel::Arg));
        }
        let u1 = out.iter().find(|r| r.source_ids[0] == "u1").unwrap();
        assert_eq!(u1.before_tokens, toks("Uniforms force conformity"));
        validate(&out).unwrap();
        assert_eq!(out, gen_t2(&c, 5, 7).unwrap());
        assert!(gen_t2(&c, 0, 7).unwrap().is_empty());

        let no_non = c.filter(|s| s.is_arg());
        assert!(matches!(gen_t2(&no_non, 1, 7), Err(Error::NoNonArgSentences(_))));
    }

    #[test]
    fn t3_strips_context() {
        let c = gun_control();
        let (out, report) = gen_t3(&c, 2, 3).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(report.order_spread(), 0);
        for r in &out {
            assert!(contains_run(&r.before_tokens, r.after_tokens.as_ref().unwrap()));
        }
        validate(&out).unwrap();

        let (all, _) = gen_t3(&c, 4, 3).unwrap();
        let first = all
            .iter()
            .find(|r| r.before_tokens[0] == "Yes")
            .expect("Yes , + ARG pair");
        assert_eq!(first.after_tokens.as_deref().unwrap(), toks("guns can be used for protection"));

        let mut lopsided = Corpus::new(TopicRegistry::aurc8());
        for i in 0..5 {
            push(&mut lopsided, &format!("s{i}"), "cloning", &[("a", Pro), ("b", Non)]);
        }
        assert!(matches!(gen_t3(&lopsided, 4, 1), Err(Error::Balance(_))));
    }

    #[test]
    fn record_round_trip_and_strictness() {
        let recs = gen_t2(&uniform_corpus(), 2, 1).unwrap();
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        assert_eq!(parse_records(buf.as_slice()).unwrap(), recs);
        let text = String::from_utf8(buf).unwrap();
        let bad = text.replacen("\"approved\"", "\"extra\":1,\"approved\"", 1);
        assert!(parse_records(bad.as_bytes()).is_err());
        let bad = text.replacen("\"T2\"", "\"T9\"", 1);
        assert!(parse_records(bad.as_bytes()).is_err());
    }

    fn sentence_pred(preds: &mut Predictions, id: String, run: u32, label: Label) {
        preds
            .insert(PredictionRecord {
                sentence_id: id,
                run,
                payload: Payload::Sentence(label),
            })
            .unwrap();
    }

    #[test]
    fn eval_counts_by_hand() {
        let mut c = Corpus::new(TopicRegistry::aurc8());
        for i in 0..4 {
            push(&mut c, &format!("s{i}"), "cloning", &[("x y", Non), ("a b", Pro)]);
            push(&mut c, &format!("t{i}"), "cloning", &[("a b", Pro), ("x y", Non)]);
        }
        let (recs, _) = gen_t3(&c, 4, 0).unwrap();
        // before: 3 of 4 right; after: 1 of 4 right
        let mut preds = Predictions::new();
        for (i, r) in recs.iter().enumerate() {
            sentence_pred(&mut preds, r.before_id(), 0, if i < 3 { Pro } else { Non });
            sentence_pred(&mut preds, r.after_id(), 0, if i == 0 { Con } else { Non });
        }
        let e = &eval_perturbation(&recs, &preds).unwrap()[0];
        assert_eq!(e.summary.acc_before, 0.75);
        assert_eq!(e.summary.acc_after, 0.25);
        assert_eq!(e.summary.delta_abs, -0.5);
        assert_eq!(e.summary.delta_rel, Some(-100.0 * 0.5 / 0.75));
        let grid = render_grid(&[("m".into(), e.clone())]);
        assert!(grid.contains("-.500 (-66.7%)"), "{grid}");

        let mut same = Predictions::new();
        for r in &recs {
            sentence_pred(&mut same, r.before_id(), 0, Pro);
            sentence_pred(&mut same, r.after_id(), 0, Pro);
        }
        assert_eq!(eval_perturbation(&recs, &same).unwrap()[0].summary.delta_abs, 0.0);

        let mut partial = Predictions::new();
        sentence_pred(&mut partial, recs[0].before_id(), 0, Pro);
        assert!(matches!(
            eval_perturbation(&recs, &partial),
            Err(Error::MissingPrediction { .. })
        ));
    }

    #[test]
    fn token_predictions_reduce_to_binary() {
        let c = gun_control();
        let (recs, _) = gen_t3(&c, 2, 0).unwrap();
        let mut preds = Predictions::new();
        for r in &recs {
            let n = r.before_tokens.len();
            let mut ls = vec![Non; n];
            ls[0] = Con;
            for (id, labels) in [(r.before_id(), ls), (r.after_id(), vec![Non; r.after_tokens.as_ref().unwrap().len()])] {
                preds.insert(PredictionRecord { sentence_id: id, run: 0, payload: Payload::Tokens(labels) }).unwrap();
            }
        }
        let e = &eval_perturbation(&recs, &preds).unwrap()[0];
        assert_eq!((e.summary.acc_before, e.summary.acc_after), (1.0, 0.0));
    }

    #[test]
    fn decimals_render_like_tables() {
        assert_eq!(decimal(0.76), ".760");
        assert_eq!(signed_decimal(-0.077), "-.077");
        assert_eq!(signed_decimal(0.07), "+.070");
        assert_eq!(signed_decimal(-0.0), "+.000");
    }

    fn corpus_strategy() -> impl Strategy<Value = Corpus> {
        let sentence = prop::collection::vec((0usize..3, 1usize..4, any::<bool>()), 1..6);
        prop::collection::vec((0usize..2, sentence), 4..40).prop_map(|rows| {
            let mut c = Corpus::new(TopicRegistry::aurc8());
            for (i, (topic, segs)) in rows.into_iter().enumerate() {
                let mut tokens = Vec::new();
                let mut labels = Vec::new();
                for (j, (l, len, punct)) in segs.into_iter().enumerate() {
                    for k in 0..len {
                        tokens.push(if punct && l == 2 { ",".to_string() } else { format!("w{j}{k}") });
                        labels.push(Label::ALL[l]);
                    }
                }
                let topic = ["gun control", "school uniforms"][topic];
                c.push(format!("s{i}"), topic, tokens, labels).unwrap();
            }
            c
        })
    }

    proptest! {
        #[test]
        fn generator_invariants(c in corpus_strategy(), seed in any::<u64>(), count in 0usize..20) {
            for p in extract_adjacent_pairs(&c, None) {
                let s = c.get(&p.source_sentence_id).unwrap();
                let (a, b) = (&p.arg, &p.non_arg);
                prop_assert!(a.end == b.start || b.end == a.start);
                prop_assert!(s.labels[a.start..a.end].iter().all(|l| l.is_arg()));
                prop_assert!(s.labels[b.start..b.end].iter().all(|l| *l == Non));
            }
            for s in &c {
                let n = extract_adjacent_pairs(&c.filter(|x| x.id == s.id), None).len();
                prop_assert_eq!(n, adjacency_oracle(s));
            }
            if let Ok(t2) = gen_t2(&c, count, seed) {
                validate(&t2).unwrap();
                for r in &t2 {
                    let after = r.after_tokens.as_ref().unwrap();
                    prop_assert!(after.windows(3).any(|w| w.iter().eq(CONNECTOR.iter())));
                }
                prop_assert_eq!(&t2, &gen_t2(&c, count, seed).unwrap());
            }
            match gen_t3(&c, count, seed) {
                Ok((t3, report)) => {
                    validate(&t3).unwrap();
                    prop_assert!(report.within(BALANCE_TOLERANCE));
                    for r in &t3 {
                        prop_assert!(contains_run(&r.before_tokens, r.after_tokens.as_ref().unwrap()));
                    }
                }
                Err(e) => prop_assert!(matches!(e, Error::Balance(_))),
            }
        }
    }
}
