//! Experiment configuration: a TOML file provides defaults, command-line
//! flags override individual keys (flags always win).
//!
//! The file has four optional tables. `[encoder]` and `[generator]`
//! deserialize straight into the library config types (unknown keys are
//! rejected), `[experiment]` holds pipeline choices, `[paths]` the artifact
//! locations:
//!
//! ```toml
//! [encoder]
//! backend = "bow_hash"
//! dim = 256
//!
//! [generator]
//! backend = "mock"
//! n_samples = 8
//! seed = 7
//!
//! [experiment]
//! instruction = "web"
//! k = 1000
//!
//! [paths]
//! corpus = "corpus.jsonl"
//! queries = "queries.tsv"
//! run = "out/run.txt"
//! ```
//!
//! API keys are read from the `HYDE_ENCODER_API_KEY` / `HYDE_LLM_API_KEY`
//! environment variables by the library backends; there is intentionally no
//! config key or flag for them.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::Deserialize;

use hyde_core::encoder::EncoderConfig;
use hyde_core::eval::{Metric, DEFAULT_BINARIZE_AT};
use hyde_core::generator::GenerationConfig;
use hyde_core::ingest::FieldMode;
use hyde_core::{HydeError, Result};

/// Search mode: hypothetical-document expansion or plain query encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Hyde,
    Baseline,
}

impl FromStr for SearchMode {
    type Err = HydeError;

    fn from_str(s: &str) -> Result<SearchMode> {
        match s {
            "hyde" => Ok(SearchMode::Hyde),
            "baseline" => Ok(SearchMode::Baseline),
            _ => Err(HydeError::Config(format!(
                "unknown mode {s:?} (expected \"hyde\" or \"baseline\")"
            ))),
        }
    }
}

impl std::fmt::Display for SearchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchMode::Hyde => "hyde",
            SearchMode::Baseline => "baseline",
        })
    }
}

/// `[experiment]` table of the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentSection {
    instruction: Option<String>,
    instruction_file: Option<PathBuf>,
    mode: Option<String>,
    k: Option<usize>,
    include_query: Option<bool>,
    field: Option<String>,
    metrics: Option<Vec<String>>,
    binarize_at: Option<u32>,
    tag: Option<String>,
}

/// `[paths]` table of the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PathsSection {
    corpus: Option<PathBuf>,
    queries: Option<PathBuf>,
    qrels: Option<PathBuf>,
    cache: Option<PathBuf>,
    store: Option<PathBuf>,
    index: Option<PathBuf>,
    run: Option<PathBuf>,
    report: Option<PathBuf>,
}

/// Whole config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    encoder: Option<EncoderConfig>,
    generator: Option<GenerationConfig>,
    experiment: Option<ExperimentSection>,
    paths: Option<PathsSection>,
}

/// Every config key as an optional command-line flag. `None` means "not
/// given"; anything given replaces the file/default value.
#[derive(Debug, Args)]
pub struct Overrides {
    /// TOML config file supplying defaults for all other flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    // -- artifact paths -------------------------------------------------
    /// JSONL corpus (one {"_id"|"id", "title"?, "text"} object per line).
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// TSV queries (query_id<TAB>text).
    #[arg(long, value_name = "FILE")]
    pub queries: Option<PathBuf>,
    /// TREC qrels file (qid 0 docid grade).
    #[arg(long, value_name = "FILE")]
    pub qrels: Option<PathBuf>,
    /// Generation cache (append-only JSONL).
    #[arg(long, value_name = "FILE")]
    pub cache: Option<PathBuf>,
    /// Binary embedding store.
    #[arg(long, value_name = "FILE")]
    pub store: Option<PathBuf>,
    /// Binary vector index.
    #[arg(long, value_name = "FILE")]
    pub index: Option<PathBuf>,
    /// TREC run file.
    #[arg(long, value_name = "FILE")]
    pub run: Option<PathBuf>,
    /// Metric report; ".json" extension selects JSON, anything else TSV.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    // -- experiment ------------------------------------------------------
    /// Built-in instruction template name (web, scifact, arguana,
    /// trec-covid, fiqa, dbpedia, trec-news, mrtydi, mrtydi-{sw,ko,ja,bn}).
    #[arg(long, value_name = "NAME")]
    pub instruction: Option<String>,
    /// File containing a custom instruction template (overrides
    /// --instruction; must contain exactly one placeholder).
    #[arg(long, value_name = "FILE")]
    pub instruction_file: Option<PathBuf>,
    /// Search mode: "hyde" or "baseline".
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,
    /// Retrieval depth (top-k documents per query).
    #[arg(long, value_name = "K")]
    pub k: Option<usize>,
    /// Include the encoded query in the averaged query vector (true/false).
    #[arg(long, value_name = "BOOL")]
    pub include_query: Option<bool>,
    /// Which document fields feed the encoder: "title_text" or "text".
    #[arg(long, value_name = "FIELDS")]
    pub field: Option<String>,
    /// Metrics to report, comma separated (e.g. "ndcg@10,map,recall@1k").
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    /// Minimum grade counted as relevant by MAP/recall/MRR.
    #[arg(long, value_name = "GRADE")]
    pub binarize_at: Option<u32>,
    /// Run-file tag (defaults to a descriptive tag built from the config).
    #[arg(long, value_name = "TAG")]
    pub tag: Option<String>,

    // -- encoder ---------------------------------------------------------
    /// Encoder backend: "bow_hash" or "remote".
    #[arg(long, value_name = "NAME")]
    pub encoder_backend: Option<String>,
    /// Remote encoder endpoint URL.
    #[arg(long, value_name = "URL")]
    pub encoder_endpoint: Option<String>,
    /// Remote encoder model name.
    #[arg(long, value_name = "NAME")]
    pub encoder_model: Option<String>,
    /// Embedding dimension.
    #[arg(long, value_name = "DIM")]
    pub dim: Option<usize>,
    /// Maximum characters per text before encoding (longer is truncated).
    #[arg(long, value_name = "N")]
    pub max_input_chars: Option<usize>,
    /// Texts per embedding request.
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// L2-normalize embeddings after encoding (true/false).
    #[arg(long, value_name = "BOOL")]
    pub normalize: Option<bool>,
    /// Concurrent embedding requests.
    #[arg(long, value_name = "N")]
    pub encoder_parallelism: Option<usize>,
    /// Retry budget for embedding requests.
    #[arg(long, value_name = "N")]
    pub encoder_max_attempts: Option<u32>,
    /// Base backoff delay for embedding retries, in milliseconds.
    #[arg(long, value_name = "MS")]
    pub encoder_base_delay_ms: Option<u64>,

    // -- generator --------------------------------------------------------
    /// Generator backend: "mock" or "remote".
    #[arg(long, value_name = "NAME")]
    pub generator_backend: Option<String>,
    /// Remote generator endpoint URL.
    #[arg(long, value_name = "URL")]
    pub generator_endpoint: Option<String>,
    /// Remote generator model name.
    #[arg(long, value_name = "NAME")]
    pub generator_model: Option<String>,
    /// Remote API shape: "chat" or "completions".
    #[arg(long, value_name = "API")]
    pub api: Option<String>,
    /// Hypothetical documents sampled per query (N; 0 = baseline behavior).
    #[arg(long, value_name = "N")]
    pub n: Option<usize>,
    /// Sampling temperature.
    #[arg(long, value_name = "T")]
    pub temperature: Option<f64>,
    /// Maximum generated tokens per sample.
    #[arg(long, value_name = "N")]
    pub max_tokens: Option<usize>,
    /// Generation seed (drives the mock backend; forwarded to remote APIs).
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Concurrent generation requests.
    #[arg(long, value_name = "N")]
    pub generator_parallelism: Option<usize>,
    /// Retry budget for generation requests.
    #[arg(long, value_name = "N")]
    pub generator_max_attempts: Option<u32>,
    /// Base backoff delay for generation retries, in milliseconds.
    #[arg(long, value_name = "MS")]
    pub generator_base_delay_ms: Option<u64>,
}

/// Artifact locations after merging.
#[derive(Debug, Clone, Default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub run: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Fully merged experiment configuration (defaults ← file ← flags).
#[derive(Debug, Clone)]
pub struct Experiment {
    pub encoder: EncoderConfig,
    pub generator: GenerationConfig,
    pub instruction: Option<String>,
    pub instruction_file: Option<PathBuf>,
    pub mode: SearchMode,
    pub k: usize,
    pub include_query: bool,
    pub field: FieldMode,
    pub metrics: Vec<Metric>,
    pub binarize_at: u32,
    pub tag: Option<String>,
    pub paths: Paths,
}

/// Metrics reported when neither the file nor a flag chooses any.
pub const DEFAULT_METRICS: [&str; 4] = ["ndcg@10", "map", "recall@1000", "mrr@100"];

fn parse_metrics(names: &[String]) -> Result<Vec<Metric>> {
    if names.is_empty() {
        return Err(HydeError::Config("metric list is empty".to_string()));
    }
    names.iter().map(|name| name.parse()).collect()
}

impl Experiment {
    /// Load the config file (when given) and fold the flag overrides in.
    pub fn resolve(overrides: &Overrides) -> Result<Experiment> {
        let file = match &overrides.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    HydeError::Config(format!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| HydeError::Config(format!("bad config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };

        let mut encoder = file.encoder.unwrap_or_default();
        let mut generator = file.generator.unwrap_or_default();
        let experiment = file.experiment.unwrap_or_default();
        let paths_file = file.paths.unwrap_or_default();

        // Encoder keys: flags win over file values.
        if let Some(backend) = &overrides.encoder_backend {
            encoder.backend = backend.parse()?;
        }
        if let Some(url) = &overrides.encoder_endpoint {
            encoder.endpoint_url = Some(url.clone());
        }
        if let Some(model) = &overrides.encoder_model {
            encoder.model_name = Some(model.clone());
        }
        if let Some(dim) = overrides.dim {
            encoder.dim = dim;
        }
        if let Some(v) = overrides.max_input_chars {
            encoder.max_input_chars = v;
        }
        if let Some(v) = overrides.batch_size {
            encoder.batch_size = v;
        }
        if let Some(v) = overrides.normalize {
            encoder.normalize = v;
        }
        if let Some(v) = overrides.encoder_parallelism {
            encoder.parallelism = v;
        }
        if let Some(v) = overrides.encoder_max_attempts {
            encoder.retry.max_attempts = v;
        }
        if let Some(v) = overrides.encoder_base_delay_ms {
            encoder.retry.base_delay_ms = v;
        }

        // Generator keys.
        if let Some(backend) = &overrides.generator_backend {
            generator.backend = backend.parse()?;
        }
        if let Some(url) = &overrides.generator_endpoint {
            generator.endpoint_url = Some(url.clone());
        }
        if let Some(model) = &overrides.generator_model {
            generator.model_name = Some(model.clone());
        }
        if let Some(api) = &overrides.api {
            generator.api = api.parse()?;
        }
        if let Some(n) = overrides.n {
            generator.n_samples = n;
        }
        if let Some(t) = overrides.temperature {
            generator.temperature = t;
        }
        if let Some(v) = overrides.max_tokens {
            generator.max_tokens = v;
        }
        if let Some(seed) = overrides.seed {
            generator.seed = Some(seed);
        }
        if let Some(v) = overrides.generator_parallelism {
            generator.parallelism = v;
        }
        if let Some(v) = overrides.generator_max_attempts {
            generator.retry.max_attempts = v;
        }
        if let Some(v) = overrides.generator_base_delay_ms {
            generator.retry.base_delay_ms = v;
        }

        // Experiment keys.
        let instruction = overrides.instruction.clone().or(experiment.instruction);
        let instruction_file = overrides
            .instruction_file
            .clone()
            .or(experiment.instruction_file);
        let mode = match overrides.mode.as_deref().or(experiment.mode.as_deref()) {
            Some(text) => text.parse()?,
            None => SearchMode::Hyde,
        };
        let k = overrides.k.or(experiment.k).unwrap_or(1000);
        if k == 0 {
            return Err(HydeError::Config("k must be at least 1".to_string()));
        }
        let include_query = overrides
            .include_query
            .or(experiment.include_query)
            .unwrap_or(true);
        let field = match overrides.field.as_deref().or(experiment.field.as_deref()) {
            Some(text) => text.parse()?,
            None => FieldMode::default(),
        };
        let metric_names: Vec<String> = overrides
            .metrics
            .clone()
            .or(experiment.metrics)
            .unwrap_or_else(|| DEFAULT_METRICS.iter().map(|s| s.to_string()).collect());
        let metrics = parse_metrics(&metric_names)?;
        let binarize_at = overrides
            .binarize_at
            .or(experiment.binarize_at)
            .unwrap_or(DEFAULT_BINARIZE_AT);
        let tag = overrides.tag.clone().or(experiment.tag);

        let paths = Paths {
            corpus: overrides.corpus.clone().or(paths_file.corpus),
            queries: overrides.queries.clone().or(paths_file.queries),
            qrels: overrides.qrels.clone().or(paths_file.qrels),
            cache: overrides.cache.clone().or(paths_file.cache),
            store: overrides.store.clone().or(paths_file.store),
            index: overrides.index.clone().or(paths_file.index),
            run: overrides.run.clone().or(paths_file.run),
            report: overrides.report.clone().or(paths_file.report),
        };

        Ok(Experiment {
            encoder,
            generator,
            instruction,
            instruction_file,
            mode,
            k,
            include_query,
            field,
            metrics,
            binarize_at,
            tag,
            paths,
        })
    }

    /// A required input path, with a clear error naming the missing key.
    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| HydeError::Config(format!("missing required path: {key}")))
    }

    /// A required input path that must already exist on disk.
    pub fn require_existing<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        let path = self.require(value, key)?;
        if !path.exists() {
            return Err(HydeError::Config(format!(
                "{key} file does not exist: {}",
                path.display()
            )));
        }
        Ok(path)
    }
}
