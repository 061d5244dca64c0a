//! Synthetic AURC-8-shaped fixtures shared by the CLI tests and the acceptance suite.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aurkit::corpus::{write_corpus, Corpus, TopicRegistry, AURC8_TOPICS};
use aurkit::label::Label::{self, *};
use aurkit::metrics::{write_predictions, Payload, PredictionRecord, Predictions};
use aurkit::subpop::{write_embeddings, EmbeddingTable};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VOCAB: usize = 300;
pub const DIM: usize = 8;

/// Sentence counts per composition class over 8,000 sentences.
pub const NON_ARG: usize = 3_500;
pub const PRO_ONLY: usize = 658;
pub const CON_ONLY: usize = 621;
pub const MIXED: usize = 3_221;

/// In-topic duplicates planted as (topic index, split, how many); split 0 = train, 1 = dev.
/// With them, in-domain dedup leaves 700/99, 696/100, 699/100 (x3) and 700/100 per topic.
const PLANTED: [(usize, usize, usize); 6] = [(0, 1, 1), (1, 0, 4), (2, 0, 1), (3, 0, 1), (4, 0, 1), (5, 0, 0)];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    NonArg,
    ProOnly,
    ConOnly,
    Mixed,
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| format!("w{}", rng.gen_range(0..VOCAB))).collect()
}

fn run(rng: &mut ChaCha8Rng, label: Label, tokens: &mut Vec<String>, labels: &mut Vec<Label>) {
    let n = rng.gen_range(3..7);
    for t in words(rng, n) {
        tokens.push(t);
        labels.push(label);
    }
}

fn sentence(rng: &mut ChaCha8Rng, class: Class) -> (Vec<String>, Vec<Label>) {
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    let pattern: &[Label] = match class {
        Class::NonArg => &[Non, Non],
        Class::ProOnly => &[Pro],
        Class::ConOnly => &[Con],
        Class::Mixed => [
            &[Non, Pro][..],
            &[Non, Con, Non],
            &[Pro, Non, Con],
            &[Con, Non],
            &[Pro, Con],
            &[Non, Pro, Non, Pro],
        ]
        .choose(rng)
        .unwrap(),
    };
    for (i, l) in pattern.iter().enumerate() {
        if i > 0 && *l == Non && rng.gen_bool(0.3) {
            tokens.push(",".into());
            labels.push(Non);
        }
        run(rng, *l, &mut tokens, &mut labels);
    }
    tokens.push(".".into());
    labels.push(Non);
    (tokens, labels)
}

/// 8 topics x 1,000 sentences with the exact class counts above.
pub fn aurc8_fixture(seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<Class> = [
        (Class::NonArg, NON_ARG),
        (Class::ProOnly, PRO_ONLY),
        (Class::ConOnly, CON_ONLY),
        (Class::Mixed, MIXED),
    ]
    .iter()
    .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
    .collect();
    classes.shuffle(&mut rng);

    let mut corpus = Corpus::new(TopicRegistry::aurc8());
    for (t, topic) in AURC8_TOPICS.iter().enumerate() {
        let cls = &classes[t * 1000..(t + 1) * 1000];
        let mut rows: Vec<(Vec<String>, Vec<Label>)> = cls.iter().map(|&c| sentence(&mut rng, c)).collect();
        if let Some(&(_, split, k)) = PLANTED.iter().find(|p| p.0 == t) {
            let end = if split == 0 { 700 } else { 800 };
            for j in 0..k {
                // copy an earlier train sentence of the same class so class counts are unchanged
                let p = end - 1 - j;
                let q = (0..700 - k).find(|&q| cls[q] == cls[p]).unwrap();
                rows[p] = rows[q].clone();
            }
        }
        for (i, (tokens, labels)) in rows.into_iter().enumerate() {
            corpus
                .push(format!("t{}-{:04}", t + 1, i), *topic, tokens, labels)
                .unwrap();
        }
    }
    corpus
}

/// Random unit-free vectors for every vocabulary word; punctuation stays out of vocabulary.
pub fn fixture_embeddings(seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = EmbeddingTable::new(DIM).unwrap();
    for w in 0..VOCAB {
        let v: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        t.insert(format!("w{w}"), v).unwrap();
    }
    t
}

/// Gold token labels with each token relabeled uniformly at `flip` rate, per run.
pub fn noisy_predictions(corpus: &Corpus, runs: u32, flip: f64, seed: u64) -> Predictions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut preds = Predictions::new();
    for run in 0..runs {
        for s in corpus {
            let labels = s
                .labels
                .iter()
                .map(|&l| if rng.gen_bool(flip) { *Label::ALL.choose(&mut rng).unwrap() } else { l })
                .collect();
            preds
                .insert(PredictionRecord {
                    sentence_id: s.id.clone(),
                    run,
                    payload: Payload::Tokens(labels),
                })
                .unwrap();
        }
    }
    preds
}

/// Sentence-granularity predictions: the gold binary label, flipped at `flip` rate.
pub fn noisy_sentence_predictions(corpus: &Corpus, runs: u32, flip: f64, seed: u64) -> Predictions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut preds = Predictions::new();
    for run in 0..runs {
        for s in corpus {
            let label = match (s.is_arg(), rng.gen_bool(flip)) {
                (true, false) | (false, true) => Pro,
                _ => Non,
            };
            preds
                .insert(PredictionRecord {
                    sentence_id: s.id.clone(),
                    run,
                    payload: Payload::Sentence(label),
                })
                .unwrap();
        }
    }
    preds
}

pub fn write_corpus_file(corpus: &Corpus, path: &Path) {
    write_corpus(corpus, std::fs::File::create(path).unwrap()).unwrap();
}

pub fn write_predictions_file(preds: &Predictions, path: &Path) {
    write_predictions(preds, std::fs::File::create(path).unwrap()).unwrap();
}

pub fn write_embeddings_file(table: &EmbeddingTable, path: &Path) {
    write_embeddings(table, std::fs::File::create(path).unwrap()).unwrap();
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_aurkit"))
}

pub fn aurkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn aurkit")
}

/// Runs the binary and panics with its stderr if it fails.
pub fn aurkit_ok(dir: &Path, args: &[&str]) -> String {
    let out = aurkit(dir, args);
    assert!(
        out.status.success(),
        "aurkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}
