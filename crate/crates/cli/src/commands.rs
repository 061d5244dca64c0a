use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use aurkit::corpus::{
    assign_splits, corpus_stats, deduplicate, parse_corpus, parse_corpus_lenient, parse_tsv, write_corpus, Corpus,
    CountShare, Removal, Scheme,
};
use aurkit::label::Label;
use aurkit::labelalg::derive_sentence_label;
use aurkit::metrics::{evaluate as eval_corpus, parse_predictions, write_predictions, Payload, PredictionRecord, Predictions};
use aurkit::perturb::{
    assemble_t1, eval_perturbation, extract_adjacent_pairs, gen_t1_candidates, gen_t2, gen_t3, parse_records,
    render_grid, validate, write_records, PerturbationEval, PerturbationRecord,
};
use aurkit::reprogate::{compare_table, parse_repro_entries};
use aurkit::subpop::{build_similarity_set, parse_embeddings, run_subpop, token_ratio_set, Relation, SubpopOptions};
use aurkit::table::Table;

use crate::config::RunConfig;
use crate::{CorpusSplit, Format, InputFormat, SplitArg, SubpopArgs};

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn required_output(cfg: &RunConfig, flag: Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
    match cfg.output(flag, default_name) {
        Some(p) => Ok(p),
        None => bail!("no output path given (--output or paths.output in config)"),
    }
}

/// Prints the report on stdout and, if asked, also saves its JSON form.
fn emit<T: Serialize>(fmt: Format, report: &T, text: impl FnOnce() -> String, output: Option<PathBuf>) -> Result<()> {
    let json = serde_json::to_string_pretty(report)? + "\n";
    if let Some(path) = output {
        let mut w = create(&path)?;
        w.write_all(json.as_bytes())?;
        w.flush()?;
    }
    let mut out = std::io::stdout().lock();
    match fmt {
        Format::Json => out.write_all(json.as_bytes())?,
        Format::Text => out.write_all(text().as_bytes())?,
    }
    Ok(())
}

fn load_corpus(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<Corpus> {
    let path = cfg.input(flag, &cfg.paths.corpus, "corpus")?;
    let corpus = parse_corpus(open(&path)?, cfg.registry.clone())
        .with_context(|| format!("reading corpus {}", path.display()))?;
    if corpus.is_empty() {
        log::warn!("corpus {} is empty", path.display());
    }
    Ok(corpus)
}

/// One split of the deduplicated corpus, or the corpus as given.
fn select(cfg: &RunConfig, corpus: &Corpus, split: SplitArg) -> Result<Corpus> {
    let Some(split) = split.split() else {
        return Ok(corpus.clone());
    };
    let assignment = assign_splits(corpus, cfg.scheme)?;
    let dedup = deduplicate(corpus, &assignment);
    Ok(dedup.corpus.split(&dedup.assignment, split))
}

fn load_predictions(path: &Path) -> Result<Predictions> {
    parse_predictions(open(path)?).with_context(|| format!("reading predictions {}", path.display()))
}

#[derive(Serialize)]
struct LineIssue {
    line: usize,
    message: String,
}

#[derive(Serialize)]
struct IngestReport {
    sentences: usize,
    errors: Vec<LineIssue>,
    warnings: Vec<String>,
}

pub fn ingest(
    cfg: &RunConfig,
    fmt: Format,
    input: Option<PathBuf>,
    input_format: InputFormat,
    output: Option<PathBuf>,
) -> Result<()> {
    let input = cfg.input(input, &cfg.paths.corpus, "input")?;
    let output = required_output(cfg, output, "corpus.jsonl")?;
    let tsv = match input_format {
        InputFormat::Tsv => true,
        InputFormat::Jsonl => false,
        InputFormat::Auto => input.extension().is_some_and(|e| e == "tsv"),
    };
    let parsed = if tsv {
        parse_tsv(open(&input)?, &cfg.tsv, cfg.registry.clone(), cfg.strict)
    } else if cfg.strict {
        parse_corpus(open(&input)?, cfg.registry.clone()).map(|corpus| aurkit::corpus::ParseReport {
            warnings: if corpus.is_empty() { vec!["corpus is empty".to_string()] } else { Vec::new() },
            corpus,
            errors: Vec::new(),
        })
    } else {
        parse_corpus_lenient(open(&input)?, cfg.registry.clone())
    };
    let parsed = parsed.with_context(|| format!("ingesting {}", input.display()))?;
    for e in &parsed.errors {
        log::warn!("line {}: {} (skipped)", e.line, e.error);
    }
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    let mut w = create(&output)?;
    write_corpus(&parsed.corpus, &mut w)?;
    w.flush()?;
    let report = IngestReport {
        sentences: parsed.corpus.len(),
        errors: parsed
            .errors
            .iter()
            .map(|e| LineIssue {
                line: e.line,
                message: e.error.to_string(),
            })
            .collect(),
        warnings: parsed.warnings.clone(),
    };
    emit(
        fmt,
        &report,
        || format!("{} sentences, {} skipped lines\n", report.sentences, report.errors.len()),
        None,
    )
}

#[derive(Serialize)]
struct SplitRow {
    topic: String,
    train: usize,
    dev: usize,
    test: usize,
}

#[derive(Serialize)]
struct SplitSummary {
    scheme: Scheme,
    topics: Vec<SplitRow>,
    duplicates_removed: Vec<Removal>,
}

#[derive(Serialize)]
struct StatsReport {
    stats: aurkit::corpus::CorpusStats,
    splits: Option<SplitSummary>,
}

pub fn stats(cfg: &RunConfig, fmt: Format, corpus: Option<PathBuf>) -> Result<()> {
    let corpus = load_corpus(cfg, corpus)?;
    let stats = corpus_stats(&corpus);
    let splits = match assign_splits(&corpus, cfg.scheme) {
        Ok(a) => {
            let d = deduplicate(&corpus, &a);
            Some(SplitSummary {
                scheme: cfg.scheme,
                topics: d
                    .assignment
                    .topic_counts(&d.corpus)
                    .into_iter()
                    .map(|(topic, [train, dev, test])| SplitRow { topic, train, dev, test })
                    .collect(),
                duplicates_removed: d.removed,
            })
        }
        Err(e) => {
            log::warn!("no split summary: {e}");
            None
        }
    };
    let report = StatsReport { stats, splits };
    emit(
        fmt,
        &report,
        || {
            let s = &report.stats;
            let mut t = Table::new(["sentences", "count", "%"]);
            let share = |c: &CountShare| [c.count.to_string(), format!("{:.2}", c.percent)];
            t.row(["total".to_string(), s.total.to_string(), String::new()]);
            for (name, c) in [
                ("ARG", &s.arg),
                ("non-ARG", &s.non_arg),
                ("PRO only", &s.pro_only),
                ("CON only", &s.con_only),
                ("mixed", &s.mixed),
            ] {
                let [a, b] = share(c);
                t.row([name.to_string(), a, b]);
            }
            let mut out = t.render();
            if let Some(sp) = &report.splits {
                let mut t = Table::new(["topic", "train", "dev", "test"]);
                for r in &sp.topics {
                    t.row([r.topic.clone(), r.train.to_string(), r.dev.to_string(), r.test.to_string()]);
                }
                out.push('\n');
                out.push_str(&t.render());
                out.push_str(&format!("{} duplicates removed\n", sp.duplicates_removed.len()));
            }
            out
        },
        None,
    )
}

pub fn evaluate(
    cfg: &RunConfig,
    fmt: Format,
    corpus: Option<PathBuf>,
    predictions: Option<PathBuf>,
    split: SplitArg,
    output: Option<PathBuf>,
) -> Result<()> {
    let corpus = load_corpus(cfg, corpus)?;
    let gold = select(cfg, &corpus, split)?;
    let preds = load_predictions(&cfg.input(predictions, &cfg.paths.predictions, "predictions")?)?;
    let report = eval_corpus(&gold, &preds, cfg.label_space, cfg.seed)?;
    emit(fmt, &report, || report.render(), output)
}

pub fn t1_candidates(cfg: &RunConfig, src: CorpusSplit) -> Result<()> {
    let corpus = load_corpus(cfg, src.corpus)?;
    let source = select(cfg, &corpus, src.split)?;
    let records = gen_t1_candidates(&extract_adjacent_pairs(&source, None));
    let output = required_output(cfg, src.output, "t1_candidates.jsonl")?;
    write_records(&records, create(&output)?)?;
    log::info!("{} T1 candidates written to {}", records.len(), output.display());
    Ok(())
}

#[derive(Serialize)]
struct AssembleSummary {
    assembled: usize,
    per_topic: indexmap::IndexMap<String, usize>,
    target_per_topic: usize,
    discarded: usize,
    non_ann: usize,
    unflagged: usize,
}

pub fn t1_assemble(cfg: &RunConfig, fmt: Format, input: Option<PathBuf>, output: Option<PathBuf>) -> Result<()> {
    let input = cfg.input(input, &cfg.paths.annotations, "annotation")?;
    let records = parse_records(open(&input)?).with_context(|| format!("reading {}", input.display()))?;
    let a = assemble_t1(&records)?;
    let output = required_output(cfg, output, "t1.jsonl")?;
    write_records(&a.pairs, create(&output)?)?;
    let summary = AssembleSummary {
        assembled: a.pairs.len(),
        per_topic: a.per_topic,
        target_per_topic: aurkit::perturb::T1_TOPIC_TARGET,
        discarded: a.discarded,
        non_ann: a.non_ann,
        unflagged: a.unflagged,
    };
    emit(
        fmt,
        &summary,
        || {
            let mut t = Table::new(["topic", "items", "target"]);
            for (topic, n) in &summary.per_topic {
                t.row([topic.clone(), n.to_string(), summary.target_per_topic.to_string()]);
            }
            t.render()
        },
        None,
    )
}

pub fn t2(cfg: &RunConfig, src: CorpusSplit, count_per_topic: usize) -> Result<()> {
    let corpus = load_corpus(cfg, src.corpus)?;
    let source = select(cfg, &corpus, src.split)?;
    let records = gen_t2(&source, count_per_topic, cfg.seed.0)?;
    let output = required_output(cfg, src.output, "t2_candidates.jsonl")?;
    write_records(&records, create(&output)?)?;
    log::info!("{} T2 candidates written to {}", records.len(), output.display());
    Ok(())
}

pub fn t3(cfg: &RunConfig, fmt: Format, src: CorpusSplit, count: usize) -> Result<()> {
    let corpus = load_corpus(cfg, src.corpus)?;
    let source = select(cfg, &corpus, src.split)?;
    let (records, balance) = gen_t3(&source, count, cfg.seed.0)?;
    let output = required_output(cfg, src.output, "t3_candidates.jsonl")?;
    write_records(&records, create(&output)?)?;
    emit(
        fmt,
        &balance,
        || {
            let mut t = Table::new(["stratum", "items"]);
            for (o, n) in &balance.by_order {
                t.row([format!("{o:?}"), n.to_string()]);
            }
            for (topic, n) in &balance.by_topic {
                t.row([topic.clone(), n.to_string()]);
            }
            t.render()
        },
        None,
    )
}

#[derive(Serialize)]
struct ModelEval {
    model: String,
    results: Vec<PerturbationEval>,
}

fn named_predictions(arg: &str) -> Result<(String, PathBuf)> {
    let as_path = Path::new(arg);
    if as_path.exists() {
        let name = as_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| arg.to_string());
        return Ok((name, as_path.to_path_buf()));
    }
    match arg.split_once('=') {
        Some((name, path)) if Path::new(path).exists() => Ok((name.to_string(), PathBuf::from(path))),
        _ => bail!("predictions file {arg} does not exist"),
    }
}

pub fn perturb_eval(
    fmt: Format,
    pairs: &[PathBuf],
    predictions: &[String],
    approved_only: bool,
    output: Option<PathBuf>,
) -> Result<()> {
    let mut records: Vec<PerturbationRecord> = Vec::new();
    for p in pairs {
        records.extend(parse_records(open(p)?).with_context(|| format!("reading {}", p.display()))?);
    }
    if approved_only {
        records.retain(|r| r.approved);
    }
    validate(&records)?;
    if records.is_empty() {
        bail!("no perturbation items to evaluate");
    }
    let mut report = Vec::new();
    for arg in predictions {
        let (model, path) = named_predictions(arg)?;
        let preds = load_predictions(&path)?;
        let results = eval_perturbation(&records, &preds).with_context(|| format!("model {model}"))?;
        report.push(ModelEval { model, results });
    }
    emit(
        fmt,
        &report,
        || {
            let cells: Vec<(String, PerturbationEval)> = report
                .iter()
                .flat_map(|m| m.results.iter().map(|r| (m.model.clone(), r.clone())))
                .collect();
            render_grid(&cells)
        },
        output,
    )
}

/// `embeddings` is `Some((path, same_relation))` for T4/T5 and `None` for T6.
pub fn subpop(
    cfg: &RunConfig,
    fmt: Format,
    args: SubpopArgs,
    embeddings: Option<(Option<PathBuf>, bool)>,
) -> Result<()> {
    let corpus = load_corpus(cfg, args.corpus)?;
    let test = select(cfg, &corpus, SplitArg::Test)?;
    let preds = load_predictions(&cfg.input(args.predictions, &cfg.paths.predictions, "predictions")?)?;
    let options = SubpopOptions {
        oov: cfg.oov_mode,
        punct: cfg.punct_mixed_mode,
    };
    let set = match embeddings {
        None => token_ratio_set(&test, options.punct)?,
        Some((path, same)) => {
            let path = cfg.input(path, &cfg.paths.embeddings, "embeddings")?;
            let table = parse_embeddings(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
            let train = select(cfg, &corpus, SplitArg::Train)?;
            let relation = if same { Relation::Same } else { Relation::Opposite };
            build_similarity_set(&test, &train, relation, &table, options)?
        }
    };
    let report = run_subpop(&set, &test, &preds)?;
    for r in &report.runs {
        if let Some(u) = r.undefined {
            log::warn!("run {}: correlation undefined ({u:?})", r.run);
        }
    }
    emit(fmt, &report, || report.render(), args.output)
}

pub fn repro(fmt: Format, input: PathBuf, output: Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let entries = parse_repro_entries(&text).with_context(|| format!("parsing {}", input.display()))?;
    let report = compare_table(&entries);
    emit(fmt, &report, || report.render(), output)
}

pub fn baseline(
    cfg: &RunConfig,
    corpus: Option<PathBuf>,
    pairs: &[PathBuf],
    runs: u32,
    output: Option<PathBuf>,
) -> Result<()> {
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    let corpus = load_corpus(cfg, corpus)?;
    let train = select(cfg, &corpus, SplitArg::Train)?;
    if train.is_empty() {
        bail!("no training split under the {:?} scheme", cfg.scheme);
    }
    let mut counts = [0usize; 3];
    for s in &train {
        counts[derive_sentence_label(&s.labels, cfg.seed, &s.id)? as usize] += 1;
    }
    // ties resolve in PRO, CON, NON order
    let majority = Label::ALL
        .into_iter()
        .max_by(|a, b| counts[*a as usize].cmp(&counts[*b as usize]).then(b.cmp(a)))
        .expect("three labels");
    log::info!("baseline majority label {majority} from {} train sentences", train.len());

    let mut ids: Vec<String> = corpus.iter().map(|s| s.id.clone()).collect();
    for p in pairs {
        for r in parse_records(open(p)?).with_context(|| format!("reading {}", p.display()))? {
            ids.push(r.before_id());
            if r.after_tokens.is_some() {
                ids.push(r.after_id());
            }
        }
    }
    let mut preds = Predictions::new();
    for run in 0..runs {
        for id in &ids {
            preds.insert(PredictionRecord {
                sentence_id: id.clone(),
                run,
                payload: Payload::Sentence(majority),
            })?;
        }
    }
    let output = required_output(cfg, output, "baseline_predictions.jsonl")?;
    write_predictions(&preds, create(&output)?)?;
    Ok(())
}
