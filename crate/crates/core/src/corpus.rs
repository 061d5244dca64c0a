//! Token-labeled argument corpora: parsing, segmentation, splits, deduplication
//! and composition statistics.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use indexmap::IndexMap;
use log::warn;
use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};
use crate::label::Label;

/// The eight AURC-8 topics in their canonical order.
pub const AURC8_TOPICS: [&str; 8] = [
    "abortion",
    "cloning",
    "marijuana legalization",
    "minimum wage",
    "nuclear energy",
    "death penalty",
    "gun control",
    "school uniforms",
];

/// Ordered list of admissible topics.
///
/// Split schemes are positional: the last two topics are held out for the
/// cross-domain test set, the one before them is the cross-domain dev set, and
/// the in-domain scheme covers every topic except the last two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicRegistry {
    names: Vec<String>,
}

impl TopicRegistry {
    pub fn aurc8() -> Self {
        TopicRegistry {
            names: AURC8_TOPICS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 4 {
            return Err(Error::Registry(format!("at least 4 topics are needed, got {}", names.len())));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Registry(format!("topic {name:?} listed twice")));
            }
        }
        Ok(TopicRegistry { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, topic: &str) -> Option<usize> {
        self.names.iter().position(|t| t == topic)
    }

    /// Split a topic belongs to wholesale under the cross-domain scheme.
    fn cross_domain_split(&self, topic_index: usize) -> Split {
        let n = self.names.len();
        if topic_index + 2 >= n {
            Split::Test
        } else if topic_index + 3 == n {
            Split::Dev
        } else {
            Split::Train
        }
    }

    fn in_domain_covers(&self, topic_index: usize) -> bool {
        topic_index + 2 < self.names.len()
    }
}

impl Default for TopicRegistry {
    fn default() -> Self {
        Self::aurc8()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    pub id: String,
    pub topic: String,
    /// 0-based order of the sentence within its topic.
    pub position: usize,
    pub tokens: Vec<String>,
    pub labels: Vec<Label>,
}

impl LabeledSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn segments(&self) -> Vec<Segment> {
        segmentize(self)
    }

    /// Contains at least one `PRO` or `CON` token.
    pub fn is_arg(&self) -> bool {
        self.labels.iter().any(|l| l.is_arg())
    }
}

/// One line of the canonical corpus JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceLine {
    pub id: String,
    pub topic: String,
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

impl From<&LabeledSentence> for SentenceLine {
    fn from(s: &LabeledSentence) -> Self {
        SentenceLine {
            id: s.id.clone(),
            topic: s.topic.clone(),
            tokens: s.tokens.clone(),
            labels: s.labels.iter().map(|l| l.as_str().to_string()).collect(),
        }
    }
}

/// An ordered, validated collection of sentences with unique ids.
#[derive(Debug, Clone)]
pub struct Corpus {
    registry: TopicRegistry,
    sentences: Vec<LabeledSentence>,
    by_id: HashMap<String, usize>,
    next_position: Vec<usize>,
}

impl Corpus {
    pub fn new(registry: TopicRegistry) -> Self {
        let next_position = vec![0; registry.len()];
        Corpus {
            registry,
            sentences: Vec::new(),
            by_id: HashMap::new(),
            next_position,
        }
    }

    /// Validates and appends a sentence; its position is the next free slot of its topic.
    pub fn push(
        &mut self,
        id: impl Into<String>,
        topic: impl Into<String>,
        tokens: Vec<String>,
        labels: Vec<Label>,
    ) -> Result<&LabeledSentence> {
        let id = id.into();
        let topic = topic.into();
        let topic_index = self
            .registry
            .index_of(&topic)
            .ok_or_else(|| Error::UnknownTopic(topic.clone()))?;
        if tokens.len() != labels.len() {
            return Err(Error::LengthMismatch {
                id,
                tokens: tokens.len(),
                labels: labels.len(),
            });
        }
        if tokens.is_empty() {
            return Err(Error::Empty("sentence without tokens"));
        }
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(Error::Empty("empty token string"));
        }
        if self.by_id.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let position = self.next_position[topic_index];
        self.next_position[topic_index] += 1;
        self.by_id.insert(id.clone(), self.sentences.len());
        self.sentences.push(LabeledSentence {
            id,
            topic,
            position,
            tokens,
            labels,
        });
        Ok(self.sentences.last().expect("just pushed"))
    }

    fn push_existing(&mut self, sentence: LabeledSentence) {
        self.by_id.insert(sentence.id.clone(), self.sentences.len());
        if let Some(ti) = self.registry.index_of(&sentence.topic) {
            self.next_position[ti] = self.next_position[ti].max(sentence.position + 1);
        }
        self.sentences.push(sentence);
    }

    pub fn registry(&self) -> &TopicRegistry {
        &self.registry
    }

    pub fn sentences(&self) -> &[LabeledSentence] {
        &self.sentences
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledSentence> {
        self.sentences.iter()
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&LabeledSentence> {
        self.by_id.get(id).map(|&i| &self.sentences[i])
    }

    pub fn topic_index(&self, sentence: &LabeledSentence) -> usize {
        self.registry
            .index_of(&sentence.topic)
            .expect("corpus sentences carry registered topics")
    }

    /// Sub-corpus of the sentences accepted by `keep`, positions preserved.
    pub fn filter<F>(&self, mut keep: F) -> Corpus
    where
        F: FnMut(&LabeledSentence) -> bool,
    {
        let mut out = Corpus::new(self.registry.clone());
        for s in self.sentences.iter().filter(|s| keep(s)) {
            out.push_existing(s.clone());
        }
        out
    }

    /// Sentences assigned to `split`, in corpus order.
    pub fn split(&self, assignment: &SplitAssignment, split: Split) -> Corpus {
        self.filter(|s| assignment.get(&s.id) == Some(split))
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a LabeledSentence;
    type IntoIter = std::slice::Iter<'a, LabeledSentence>;

    fn into_iter(self) -> Self::IntoIter {
        self.sentences.iter()
    }
}

#[derive(Debug)]
pub struct LineError {
    pub line: usize,
    pub error: Error,
}

/// Outcome of a lenient parse: valid sentences plus per-line failures.
#[derive(Debug)]
pub struct ParseReport {
    pub corpus: Corpus,
    pub errors: Vec<LineError>,
    pub warnings: Vec<String>,
}

fn raw_to_sentence(corpus: &mut Corpus, raw: SentenceLine) -> Result<()> {
    let labels = raw
        .labels
        .iter()
        .map(|l| l.parse::<Label>())
        .collect::<Result<Vec<_>>>()?;
    if raw.tokens.len() != raw.labels.len() {
        return Err(Error::LengthMismatch {
            id: raw.id,
            tokens: raw.tokens.len(),
            labels: raw.labels.len(),
        });
    }
    corpus.push(raw.id, raw.topic, raw.tokens, labels)?;
    Ok(())
}

fn collect_records<I>(records: I, registry: TopicRegistry, strict: bool) -> Result<ParseReport>
where
    I: IntoIterator<Item = (usize, Result<SentenceLine>)>,
{
    let mut corpus = Corpus::new(registry);
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    for (line, record) in records {
        let outcome = record.and_then(|raw| raw_to_sentence(&mut corpus, raw));
        if let Err(error) = outcome {
            if strict {
                return Err(error);
            }
            warn!("line {line}: {error}");
            errors.push(LineError { line, error });
        }
    }
    if corpus.is_empty() {
        let msg = "corpus is empty".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(ParseReport {
        corpus,
        errors,
        warnings,
    })
}

fn jsonl_records<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, Result<SentenceLine>)> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line_no = i + 1;
            match line {
                Err(e) => Some((line_no, Err(Error::Io(e)))),
                Ok(text) if text.trim().is_empty() => None,
                Ok(text) => Some((
                    line_no,
                    serde_json::from_str::<SentenceLine>(&text).map_err(|source| {
                        Error::MalformedJson {
                            line: line_no,
                            source,
                        }
                    }),
                )),
            }
        })
}

/// Strict parse of canonical JSONL: the first invalid line aborts.
pub fn parse_corpus<R: BufRead>(reader: R, registry: TopicRegistry) -> Result<Corpus> {
    collect_records(jsonl_records(reader), registry, true).map(|r| r.corpus)
}

/// Parses canonical JSONL, skipping and reporting invalid lines.
pub fn parse_corpus_lenient<R: BufRead>(reader: R, registry: TopicRegistry) -> Result<ParseReport> {
    let report = collect_records(jsonl_records(reader), registry, false)?;
    // Read failures are not line-level schema problems.
    if let Some(pos) = report
        .errors
        .iter()
        .position(|e| matches!(e.error, Error::Io(_)))
    {
        let mut errors = report.errors;
        return Err(errors.swap_remove(pos).error);
    }
    Ok(report)
}

/// Column layout for sentence-per-row TSV input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsvMapping {
    pub id_column: usize,
    pub topic_column: usize,
    pub tokens_column: usize,
    pub labels_column: usize,
    pub has_header: bool,
    /// Separator between tokens (and between labels) inside a cell.
    pub item_separator: String,
}

impl Default for TsvMapping {
    fn default() -> Self {
        TsvMapping {
            id_column: 0,
            topic_column: 1,
            tokens_column: 2,
            labels_column: 3,
            has_header: false,
            item_separator: " ".to_string(),
        }
    }
}

impl TsvMapping {
    fn record(&self, line: usize, text: &str) -> Result<SentenceLine> {
        let cells: Vec<&str> = text.split('\t').collect();
        let cell = |col: usize| {
            cells.get(col).copied().ok_or_else(|| Error::Schema {
                line,
                message: format!("missing column {col} ({} present)", cells.len()),
            })
        };
        let split = |s: &str| -> Vec<String> {
            s.split(self.item_separator.as_str())
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect()
        };
        Ok(SentenceLine {
            id: cell(self.id_column)?.to_string(),
            topic: cell(self.topic_column)?.to_string(),
            tokens: split(cell(self.tokens_column)?),
            labels: split(cell(self.labels_column)?),
        })
    }
}

fn tsv_records<'a, R: BufRead + 'a>(
    reader: R,
    mapping: &'a TsvMapping,
) -> impl Iterator<Item = (usize, Result<SentenceLine>)> + 'a {
    let skip = usize::from(mapping.has_header);
    reader
        .lines()
        .enumerate()
        .skip(skip)
        .filter_map(move |(i, line)| {
            let line_no = i + 1;
            match line {
                Err(e) => Some((line_no, Err(Error::Io(e)))),
                Ok(text) if text.trim().is_empty() => None,
                Ok(text) => Some((line_no, mapping.record(line_no, &text))),
            }
        })
}

/// Parses column-mapped TSV into the same validated form as [`parse_corpus`].
pub fn parse_tsv<R: BufRead>(
    reader: R,
    mapping: &TsvMapping,
    registry: TopicRegistry,
    strict: bool,
) -> Result<ParseReport> {
    collect_records(tsv_records(reader, mapping), registry, strict)
}

/// Writes the corpus as canonical JSONL.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut writer: W) -> Result<()> {
    for s in corpus {
        serde_json::to_writer(&mut writer, &SentenceLine::from(s))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Maximal run of identically labeled tokens, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: Label,
    pub start: usize,
    pub end: usize,
    pub is_punct_only: bool,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// True iff the token is non-empty and every character is Unicode punctuation (P*).
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty()
        && token.chars().all(|c| {
            matches!(
                get_general_category(c),
                GeneralCategory::ConnectorPunctuation
                    | GeneralCategory::DashPunctuation
                    | GeneralCategory::OpenPunctuation
                    | GeneralCategory::ClosePunctuation
                    | GeneralCategory::InitialPunctuation
                    | GeneralCategory::FinalPunctuation
                    | GeneralCategory::OtherPunctuation
            )
        })
}

/// Maximal label runs over parallel token/label slices.
pub fn segmentize_labels<S: AsRef<str>>(tokens: &[S], labels: &[Label]) -> Vec<Segment> {
    debug_assert_eq!(tokens.len(), labels.len());
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            out.push(Segment {
                label: labels[start],
                start,
                end: i,
                is_punct_only: tokens[start..i].iter().all(|t| is_punctuation(t.as_ref())),
            });
            start = i;
        }
    }
    out
}

pub fn segmentize(sentence: &LabeledSentence) -> Vec<Segment> {
    segmentize_labels(&sentence.tokens, &sentence.labels)
}

/// Segments that matter for composition: punctuation-only `NON` segments dropped.
pub fn content_segments(sentence: &LabeledSentence) -> Vec<Segment> {
    segmentize(sentence)
        .into_iter()
        .filter(|s| !(s.label == Label::Non && s.is_punct_only))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    InDomain,
    CrossDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Sentence id → split; unassigned sentences are absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub scheme: Scheme,
    pub map: IndexMap<String, Split>,
}

impl SplitAssignment {
    pub fn get(&self, id: &str) -> Option<Split> {
        self.map.get(id).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.map.values().filter(|&&s| s == split).count()
    }

    /// Per-topic `[train, dev, test]` counts in registry order.
    pub fn topic_counts(&self, corpus: &Corpus) -> Vec<(String, [usize; 3])> {
        let mut counts: Vec<(String, [usize; 3])> = corpus
            .registry()
            .names()
            .iter()
            .map(|n| (n.clone(), [0; 3]))
            .collect();
        for s in corpus {
            if let Some(split) = self.get(&s.id) {
                counts[corpus.topic_index(s)].1[split as usize] += 1;
            }
        }
        counts
    }
}

fn by_topic(corpus: &Corpus) -> Vec<Vec<&LabeledSentence>> {
    let mut groups = vec![Vec::new(); corpus.registry().len()];
    for s in corpus {
        groups[corpus.topic_index(s)].push(s);
    }
    for g in &mut groups {
        g.sort_by_key(|s| s.position);
    }
    groups
}

/// Assigns sentences to train/dev/test.
///
/// In-domain cuts each covered topic at `floor(0.7n)` and `floor(0.8n)`;
/// cross-domain assigns whole topics.
pub fn assign_splits(corpus: &Corpus, scheme: Scheme) -> Result<SplitAssignment> {
    let registry = corpus.registry();
    let mut map = IndexMap::with_capacity(corpus.len());
    let mut unassigned = 0usize;
    for (topic_index, group) in by_topic(corpus).into_iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        match scheme {
            Scheme::CrossDomain => {
                let split = registry.cross_domain_split(topic_index);
                map.extend(group.iter().map(|s| (s.id.clone(), split)));
            }
            Scheme::InDomain if !registry.in_domain_covers(topic_index) => {
                unassigned += group.len();
            }
            Scheme::InDomain => {
                let n = group.len();
                if n < 10 {
                    return Err(Error::DegenerateSplit {
                        topic: registry.names()[topic_index].clone(),
                        count: n,
                    });
                }
                let train_end = n * 7 / 10;
                let dev_end = n * 8 / 10;
                for (i, s) in group.iter().enumerate() {
                    let split = if i < train_end {
                        Split::Train
                    } else if i < dev_end {
                        Split::Dev
                    } else {
                        Split::Test
                    };
                    map.insert(s.id.clone(), split);
                }
            }
        }
    }
    if unassigned > 0 {
        warn!("in-domain split leaves {unassigned} sentences of held-out topics unassigned");
    }
    // Emit in corpus order regardless of grouping.
    map.sort_by_cached_key(|id, _| corpus.by_id[id]);
    Ok(SplitAssignment { scheme, map })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub dropped: String,
    pub duplicate_of: String,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct Deduplicated {
    pub corpus: Corpus,
    pub assignment: SplitAssignment,
    pub removed: Vec<Removal>,
}

/// Drops assigned sentences whose token sequence already occurred earlier in
/// (topic, position) order, within and across splits.
pub fn deduplicate(corpus: &Corpus, assignment: &SplitAssignment) -> Deduplicated {
    let mut first_seen: HashMap<&[String], &str> = HashMap::new();
    let mut removed = Vec::new();
    let mut dropped: HashSet<&str> = HashSet::new();
    for group in by_topic(corpus) {
        for s in group {
            let Some(split) = assignment.get(&s.id) else {
                continue;
            };
            match first_seen.get(s.tokens.as_slice()) {
                Some(&original) => {
                    removed.push(Removal {
                        dropped: s.id.clone(),
                        duplicate_of: original.to_string(),
                        split,
                    });
                    dropped.insert(s.id.as_str());
                }
                None => {
                    first_seen.insert(s.tokens.as_slice(), s.id.as_str());
                }
            }
        }
    }
    let kept = corpus.filter(|s| !dropped.contains(s.id.as_str()));
    let mut map = assignment.map.clone();
    map.retain(|id, _| !dropped.contains(id.as_str()));
    Deduplicated {
        corpus: kept,
        assignment: SplitAssignment {
            scheme: assignment.scheme,
            map,
        },
        removed,
    }
}

/// How a sentence's content segments combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Composition {
    NonArg,
    ProOnly,
    ConOnly,
    Mixed,
}

pub fn composition(sentence: &LabeledSentence) -> Composition {
    if !sentence.is_arg() {
        return Composition::NonArg;
    }
    let segs = content_segments(sentence);
    if segs.iter().all(|s| s.label == Label::Pro) {
        Composition::ProOnly
    } else if segs.iter().all(|s| s.label == Label::Con) {
        Composition::ConOnly
    } else {
        Composition::Mixed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountShare {
    pub count: usize,
    /// Percentage of the parent total; 0 when the parent is empty.
    pub percent: f64,
}

impl CountShare {
    fn of(count: usize, total: usize) -> Self {
        let percent = if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        };
        CountShare { count, percent }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub arg: CountShare,
    pub non_arg: CountShare,
    /// Shares below are relative to the ARG count.
    pub pro_only: CountShare,
    pub con_only: CountShare,
    pub mixed: CountShare,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut counts = [0usize; 4];
    for s in corpus {
        counts[composition(s) as usize] += 1;
    }
    let [non_arg, pro_only, con_only, mixed] = counts;
    let total = corpus.len();
    let arg = pro_only + con_only + mixed;
    CorpusStats {
        total,
        arg: CountShare::of(arg, total),
        non_arg: CountShare::of(non_arg, total),
        pro_only: CountShare::of(pro_only, arg),
        con_only: CountShare::of(con_only, arg),
        mixed: CountShare::of(mixed, arg),
    }
}
