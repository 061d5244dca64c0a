mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aurkit::corpus::{Scheme, Split};
use aurkit::labelalg::PunctMode;
use aurkit::metrics::LabelSpace;
use aurkit::subpop::OovMode;

use config::{FileConfig, Overrides, RunConfig};

/// Evaluation and robustness toolkit for argument unit recognition.
#[derive(Debug, Parser)]
#[command(name = "aurkit", version)]
pub struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Seed for tie-breaks and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, global = true, value_enum)]
    labels: Option<LabelsArg>,
    /// Out-of-vocabulary handling for sentence embeddings.
    #[arg(long, global = true, value_enum)]
    oov: Option<OovArg>,
    /// Whether punctuation-only NON segments count when selecting mixed-segment sentences.
    #[arg(long, global = true, value_enum)]
    punct_mixed: Option<PunctArg>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fail on the first malformed input line instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report format on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    InDomain,
    CrossDomain,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LabelsArg {
    #[value(name = "3class")]
    ThreeClass,
    Binary,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OovArg {
    Skip,
    Zero,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PunctArg {
    Ignore,
    Include,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
    All,
}

impl SplitArg {
    pub fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Dev => Some(Split::Dev),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Auto,
    Jsonl,
    Tsv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a corpus (JSONL or column-mapped TSV) and write canonical JSONL.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
        input_format: InputFormat,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Corpus composition and split sizes after deduplication.
    Stats {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Token-, segment- and sentence-F1 per run and aggregated.
    Evaluate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Perturbation sets and their accuracy deltas.
    #[command(subcommand)]
    Perturb(PerturbCommand),
    /// Correlation of correctness with similarity or token ratio.
    #[command(subcommand)]
    Subpop(SubpopCommand),
    /// Two-standard-deviation reproduction gate over a grid of results.
    Repro {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Majority-class predictions from the training split.
    Baseline {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Perturbation files whose items also get predictions.
        #[arg(long)]
        pairs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        runs: u32,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CorpusSplit {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Sentences to sample from.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum PerturbCommand {
    /// Non-ARG-first pairs for announcing-segment annotation.
    T1Candidates(CorpusSplit),
    /// Build T1 items from an annotated candidate file.
    T1Assemble {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// ARG segment + "and besides ," + non-ARG sentence candidates.
    T2 {
        #[command(flatten)]
        source: CorpusSplit,
        #[arg(long, default_value_t = 50)]
        count_per_topic: usize,
    },
    /// ARG segments stripped of their non-ARG context.
    T3 {
        #[command(flatten)]
        source: CorpusSplit,
        #[arg(long, default_value_t = 200)]
        count: usize,
    },
    /// Accuracy before and after, per model.
    Eval {
        #[arg(long, required = true)]
        pairs: Vec<PathBuf>,
        /// `name=path` or a path (named by its file stem).
        #[arg(long, required = true)]
        predictions: Vec<String>,
        /// Only evaluate items a curator approved.
        #[arg(long)]
        approved_only: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SubpopArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum SubpopCommand {
    /// Nearest train neighbour shares the ARG label.
    T4 {
        #[command(flatten)]
        args: SubpopArgs,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Nearest train neighbour is non-ARG.
    T5 {
        #[command(flatten)]
        args: SubpopArgs,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Argumentative token ratio.
    T6 {
        #[command(flatten)]
        args: SubpopArgs,
    },
}

fn overrides(g: &Global) -> Overrides {
    Overrides {
        seed: g.seed,
        label_space: g.labels.map(|l| match l {
            LabelsArg::ThreeClass => LabelSpace::ThreeClass,
            LabelsArg::Binary => LabelSpace::Binary,
        }),
        scheme: g.scheme.map(|s| match s {
            SchemeArg::InDomain => Scheme::InDomain,
            SchemeArg::CrossDomain => Scheme::CrossDomain,
        }),
        oov_mode: g.oov.map(|o| match o {
            OovArg::Skip => OovMode::Skip,
            OovArg::Zero => OovMode::Zero,
        }),
        punct_mixed_mode: g.punct_mixed.map(|p| match p {
            PunctArg::Ignore => PunctMode::Ignore,
            PunctArg::Include => PunctMode::Include,
        }),
        threads: g.threads,
        strict: g.strict,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.global.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cfg = RunConfig::resolve(file, overrides(&cli.global))?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let fmt = cli.global.format;
    match cli.command {
        Command::Ingest { input, input_format, output } => commands::ingest(&cfg, fmt, input, input_format, output),
        Command::Stats { corpus } => commands::stats(&cfg, fmt, corpus),
        Command::Evaluate { corpus, predictions, split, output } => {
            commands::evaluate(&cfg, fmt, corpus, predictions, split, output)
        }
        Command::Perturb(p) => match p {
            PerturbCommand::T1Candidates(src) => commands::t1_candidates(&cfg, src),
            PerturbCommand::T1Assemble { input, output } => commands::t1_assemble(&cfg, fmt, input, output),
            PerturbCommand::T2 { source, count_per_topic } => commands::t2(&cfg, source, count_per_topic),
            PerturbCommand::T3 { source, count } => commands::t3(&cfg, fmt, source, count),
            PerturbCommand::Eval { pairs, predictions, approved_only, output } => {
                commands::perturb_eval(fmt, &pairs, &predictions, approved_only, output)
            }
        },
        Command::Subpop(s) => match s {
            SubpopCommand::T4 { args, embeddings } => commands::subpop(&cfg, fmt, args, Some((embeddings, true))),
            SubpopCommand::T5 { args, embeddings } => commands::subpop(&cfg, fmt, args, Some((embeddings, false))),
            SubpopCommand::T6 { args } => commands::subpop(&cfg, fmt, args, None),
        },
        Command::Repro { input, output } => commands::repro(fmt, input, output),
        Command::Baseline { corpus, pairs, runs, output } => commands::baseline(&cfg, corpus, &pairs, runs, output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
