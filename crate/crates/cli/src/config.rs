use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use aurkit::corpus::{Scheme, TopicRegistry, TsvMapping};
use aurkit::labelalg::{PunctMode, Seed};
use aurkit::metrics::LabelSpace;
use aurkit::subpop::OovMode;
use serde::Deserialize;

/// File locations a config may supply instead of per-command flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    /// Directory for outputs when a command gets no explicit output path.
    pub output: Option<PathBuf>,
}

/// Contents of the `--config` TOML file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub label_space: Option<LabelSpace>,
    pub scheme: Option<Scheme>,
    pub oov_mode: Option<OovMode>,
    pub punct_mixed_mode: Option<PunctMode>,
    pub threads: Option<usize>,
    pub strict: Option<bool>,
    pub topics: Option<Vec<String>>,
    pub paths: Paths,
    pub tsv: TsvMapping,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Settings after merging flags over the config file over defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: Seed,
    pub label_space: LabelSpace,
    pub scheme: Scheme,
    pub oov_mode: OovMode,
    pub punct_mixed_mode: PunctMode,
    pub threads: Option<usize>,
    pub strict: bool,
    pub registry: TopicRegistry,
    pub paths: Paths,
    pub tsv: TsvMapping,
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub label_space: Option<LabelSpace>,
    pub scheme: Option<Scheme>,
    pub oov_mode: Option<OovMode>,
    pub punct_mixed_mode: Option<PunctMode>,
    pub threads: Option<usize>,
    pub strict: bool,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, flags: Overrides) -> Result<Self> {
        let registry = match file.topics {
            Some(t) => TopicRegistry::new(t)?,
            None => TopicRegistry::aurc8(),
        };
        if let Some(0) = flags.threads.or(file.threads) {
            bail!("--threads must be at least 1");
        }
        Ok(RunConfig {
            seed: Seed(flags.seed.or(file.seed).unwrap_or(0)),
            label_space: flags.label_space.or(file.label_space).unwrap_or_default(),
            scheme: flags.scheme.or(file.scheme).unwrap_or(Scheme::InDomain),
            oov_mode: flags.oov_mode.or(file.oov_mode).unwrap_or_default(),
            punct_mixed_mode: flags.punct_mixed_mode.or(file.punct_mixed_mode).unwrap_or_default(),
            threads: flags.threads.or(file.threads),
            strict: flags.strict || file.strict.unwrap_or(false),
            registry,
            paths: file.paths,
            tsv: file.tsv,
        })
    }

    /// An input path from the flag, else from the config; it must exist.
    pub fn input(&self, flag: Option<PathBuf>, from_config: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        let path = match flag.or_else(|| from_config.clone()) {
            Some(p) => p,
            None => bail!("no {what} path given (flag or config)"),
        };
        if !path.exists() {
            bail!("{what} file {} does not exist", path.display());
        }
        Ok(path)
    }

    /// An output path from the flag, else `<paths.output>/<default_name>`.
    pub fn output(&self, flag: Option<PathBuf>, default_name: &str) -> Option<PathBuf> {
        flag.or_else(|| self.paths.output.as_ref().map(|d| d.join(default_name)))
    }
}
