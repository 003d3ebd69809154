//! Hypothetical-document generation.
//!
//! Given a query and a task-specific instruction template, this module
//! produces `N` sampled "hypothetical documents" — short passages written as
//! if they answered the query. A remote backend talks to an OpenAI-compatible
//! completion endpoint; a mock backend fabricates deterministic
//! pseudo-passages from a seeded PRNG so every downstream stage can be tested
//! offline and byte-reproducibly.
//!
//! Because remote generations are expensive and experiments get re-run, an
//! append-only JSONL cache keyed by the full sampling configuration
//! (model, template, query text, temperature, sample count, token budget)
//! stores every generated set.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HydeError, Result};
use crate::hash::{Fnv1a, SplitMix64};
use crate::remote::{self, RequestError, RetryPolicy};
use crate::types::QueryRecord;

/// Environment variable holding the bearer token for the completion
/// endpoint. Never read from config files.
pub const LLM_API_KEY_VAR: &str = "HYDE_LLM_API_KEY";

/// Placeholder tokens a template may contain (exactly one, exactly once).
pub const PLACEHOLDERS: [&str; 4] = ["[QUESTION]", "[Claim]", "[PASSAGE]", "[TOPIC]"];

/// Number of vocabulary tokens a mock pseudo-passage appends to the query.
const MOCK_TOKENS_PER_SAMPLE: usize = 32;

/// An instruction prompt with a single placeholder slot for the query text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionTemplate {
    name: String,
    template: String,
    placeholder: &'static str,
}

impl InstructionTemplate {
    /// Validate that `template` contains exactly one occurrence of exactly
    /// one placeholder token.
    pub fn new(name: impl Into<String>, template: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let template = template.into();
        let mut found: Option<&'static str> = None;
        let mut occurrences = 0usize;
        for token in PLACEHOLDERS {
            let count = template.matches(token).count();
            if count > 0 {
                occurrences += count;
                match found {
                    None => found = Some(token),
                    Some(first) => {
                        return Err(HydeError::Template(format!(
                            "template {name:?} mixes placeholders {first} and {token}"
                        )))
                    }
                }
            }
        }
        match (found, occurrences) {
            (Some(placeholder), 1) => Ok(InstructionTemplate {
                name,
                template,
                placeholder,
            }),
            (Some(placeholder), n) => Err(HydeError::Template(format!(
                "template {name:?} contains {placeholder} {n} times; exactly one required"
            ))),
            (None, _) => Err(HydeError::Template(format!(
                "template {name:?} contains no placeholder (expected one of {PLACEHOLDERS:?})"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.template
    }

    pub fn placeholder(&self) -> &str {
        self.placeholder
    }

    /// Substitute the query text into the placeholder slot; nothing else in
    /// the template changes.
    pub fn render(&self, query: &QueryRecord) -> String {
        self.template.replacen(self.placeholder, &query.text, 1)
    }
}

/// Render the instruction prompt for a query.
pub fn render_instruction(template: &InstructionTemplate, query: &QueryRecord) -> String {
    template.render(query)
}

/// The built-in instruction registry. Each entry is a task-specific prompt;
/// lines are joined with single newlines.
const BUILTIN_TEMPLATES: [(&str, &str); 12] = [
    (
        "web",
        "Please write a passage to answer the question\nQuestion: [QUESTION]\nPassage:",
    ),
    (
        "scifact",
        "Please write a scientific paper passage to support/refute the claim\nClaim: [Claim]\nPassage:",
    ),
    (
        "arguana",
        "Please write a counter argument for the passage\nPassage: [PASSAGE]\nCounter Argument:",
    ),
    (
        "trec-covid",
        "Please write a scientific paper passage to answer the question\nQuestion: [QUESTION]\nPassage:",
    ),
    (
        "fiqa",
        "Please write a financial article passage to answer the question\nQuestion: [QUESTION]\nPassage:",
    ),
    (
        "dbpedia",
        "Please write a passage to answer the question.\nQuestion: [QUESTION]\nPassage:",
    ),
    (
        "trec-news",
        "Please write a news passage about the topic.\nTopic: [TOPIC]\nPassage:",
    ),
    (
        "mrtydi-sw",
        "Please write a passage in Swahili to answer the question in detail.\nQuestion: [QUESTION]\nPassage:",
    ),
    (
        "mrtydi-ko",
        "Please write a passage in Korean to answer the question in detail.\nQuestion: [QUESTION]\nPassage:",
    ),
    (
        "mrtydi-ja",
        "Please write a passage in Japanese to answer the question in detail.\nQuestion: [QUESTION]\nPassage:",
    ),
    (
        "mrtydi-bn",
        "Please write a passage in Bengali to answer the question in detail.\nQuestion: [QUESTION]\nPassage:",
    ),
    (
        "mrtydi",
        "Please write a passage in Swahili/Korean/Japanese/Bengali to answer the question in detail.\nQuestion: [QUESTION]\nPassage:",
    ),
];

/// All built-in templates, validated.
pub fn builtin_templates() -> Vec<InstructionTemplate> {
    BUILTIN_TEMPLATES
        .iter()
        .map(|(name, text)| {
            InstructionTemplate::new(*name, *text).expect("built-in templates are valid")
        })
        .collect()
}

/// Look up one built-in template by name.
pub fn builtin_template(name: &str) -> Option<InstructionTemplate> {
    BUILTIN_TEMPLATES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| InstructionTemplate::new(*n, *text).expect("built-in templates are valid"))
}

/// Which generator implementation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorBackend {
    Remote,
    Mock,
}

impl std::str::FromStr for GeneratorBackend {
    type Err = HydeError;

    /// Accepts the same spellings the config file uses.
    fn from_str(s: &str) -> Result<GeneratorBackend> {
        match s {
            "remote" => Ok(GeneratorBackend::Remote),
            "mock" => Ok(GeneratorBackend::Mock),
            _ => Err(HydeError::Config(format!(
                "unknown generator backend {s:?} (expected \"remote\" or \"mock\")"
            ))),
        }
    }
}

/// Remote API flavor: chat (`messages`) or plain completions (`prompt`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemoteApi {
    Chat,
    Completions,
}

impl std::str::FromStr for RemoteApi {
    type Err = HydeError;

    /// Accepts the same spellings the config file uses.
    fn from_str(s: &str) -> Result<RemoteApi> {
        match s {
            "chat" => Ok(RemoteApi::Chat),
            "completions" => Ok(RemoteApi::Completions),
            _ => Err(HydeError::Config(format!(
                "unknown api {s:?} (expected \"chat\" or \"completions\")"
            ))),
        }
    }
}

/// Sampling configuration for hypothetical-document generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub backend: GeneratorBackend,
    /// Remote backend only: full completion endpoint URL.
    pub endpoint_url: Option<String>,
    /// Remote backend only: model identifier sent with each request.
    pub model_name: Option<String>,
    /// Remote backend: request shape (chat vs completions).
    pub api: RemoteApi,
    /// Number of hypothetical documents to sample per query (N). Zero is
    /// allowed and degenerates the pipeline to the plain-query baseline.
    pub n_samples: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    /// Drives the mock backend; forwarded to remote APIs that accept a seed.
    pub seed: Option<u64>,
    /// Maximum concurrent sample requests.
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            backend: GeneratorBackend::Mock,
            endpoint_url: None,
            model_name: None,
            api: RemoteApi::Chat,
            n_samples: 8,
            temperature: 0.7,
            max_tokens: 512,
            seed: None,
            parallelism: 4,
            retry: RetryPolicy::default(),
        }
    }
}

impl GenerationConfig {
    /// Deterministic offline generator with the given seed.
    pub fn mock(seed: u64) -> Self {
        GenerationConfig {
            backend: GeneratorBackend::Mock,
            seed: Some(seed),
            ..GenerationConfig::default()
        }
    }

    /// Remote OpenAI-compatible generator.
    pub fn remote(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        GenerationConfig {
            backend: GeneratorBackend::Remote,
            endpoint_url: Some(endpoint_url.into()),
            model_name: Some(model_name.into()),
            ..GenerationConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(HydeError::Config(format!(
                "temperature must be a finite value ≥ 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(HydeError::Config(
                "generator max_tokens must be at least 1".to_string(),
            ));
        }
        if self.backend == GeneratorBackend::Remote {
            if self.endpoint_url.as_deref().unwrap_or("").is_empty() {
                return Err(HydeError::Config(
                    "remote generator requires endpoint_url".to_string(),
                ));
            }
            if self.model_name.as_deref().unwrap_or("").is_empty() {
                return Err(HydeError::Config(
                    "remote generator requires model_name".to_string(),
                ));
            }
        }
        self.retry.validate()
    }

    /// The model name recorded in cache keys, provenance, and run tags. The
    /// mock backend synthesizes one from its seed so differently-seeded runs
    /// never share cache entries.
    pub fn effective_model_name(&self) -> String {
        match self.backend {
            GeneratorBackend::Remote => self
                .model_name
                .clone()
                .unwrap_or_else(|| "remote".to_string()),
            GeneratorBackend::Mock => format!("mock-seed{}", self.seed.unwrap_or(0)),
        }
    }
}

/// Where a set of samples came from; stored alongside the samples in the
/// cache so any cached generation can be traced back to its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_name: String,
    pub temperature: f64,
    pub template_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Response ids from the remote API, one per sample (empty string when
    /// the server sent none; empty list for the mock backend).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub request_ids: Vec<String>,
}

/// The N sampled hypothetical documents for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypotheticalSet {
    pub query_id: String,
    pub samples: Vec<String>,
    pub provenance: Provenance,
}

impl HypotheticalSet {
    /// Indices of degenerate samples: empty or whitespace-only generations.
    /// These are kept (they encode to the zero vector) so the sample count
    /// always equals the requested N.
    pub fn degenerate_indices(&self) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.trim().is_empty())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Generate `cfg.n_samples` hypothetical documents for `query`.
pub fn generate_hypotheticals(
    cfg: &GenerationConfig,
    template: &InstructionTemplate,
    query: &QueryRecord,
) -> Result<HypotheticalSet> {
    cfg.validate()?;
    let (samples, request_ids) = match cfg.backend {
        GeneratorBackend::Mock => {
            let seed = cfg.seed.unwrap_or(0);
            let samples = (0..cfg.n_samples)
                .map(|i| mock_sample(seed, &query.query_id, i as u64, &query.text))
                .collect();
            (samples, Vec::new())
        }
        GeneratorBackend::Remote => generate_remote(cfg, template, query)?,
    };
    let degenerate = samples
        .iter()
        .filter(|s: &&String| s.trim().is_empty())
        .count();
    if degenerate > 0 {
        log::warn!(
            "query {}: {degenerate}/{} generations are empty (kept as zero-information samples)",
            query.query_id,
            samples.len()
        );
    }
    Ok(HypotheticalSet {
        query_id: query.query_id.clone(),
        samples,
        provenance: Provenance {
            model_name: cfg.effective_model_name(),
            temperature: cfg.temperature,
            template_name: template.name().to_string(),
            seed: cfg.seed,
            request_ids,
        },
    })
}

/// Deterministic pseudo-passage: the query text followed by 32 vocabulary
/// tokens drawn by SplitMix64 seeded with FNV-1a over
/// `seed (8 bytes LE) ‖ query_id (UTF-8) ‖ sample index (8 bytes LE)`.
/// Echoing the query text guarantees lexical overlap with documents that
/// share the query's vocabulary, which is what makes offline smoke tests of
/// the full pipeline meaningful.
fn mock_sample(seed: u64, query_id: &str, index: u64, query_text: &str) -> String {
    let mut hasher = Fnv1a::new();
    hasher
        .update(&seed.to_le_bytes())
        .update(query_id.as_bytes())
        .update(&index.to_le_bytes());
    let mut rng = SplitMix64::new(hasher.finish());
    let mut passage = String::with_capacity(query_text.len() + MOCK_TOKENS_PER_SAMPLE * 9);
    passage.push_str(query_text);
    for _ in 0..MOCK_TOKENS_PER_SAMPLE {
        passage.push(' ');
        passage.push_str(MOCK_VOCAB[(rng.next_u64() % 256) as usize]);
    }
    passage
}

fn generate_remote(
    cfg: &GenerationConfig,
    template: &InstructionTemplate,
    query: &QueryRecord,
) -> Result<(Vec<String>, Vec<String>)> {
    let client = remote::http_client()?;
    let bearer = remote::bearer_from_env(LLM_API_KEY_VAR);
    let prompt = template.render(query);

    // N independent sampled completions (not the API's `n` parameter) so a
    // partial failure retries just the affected sample.
    let indices: Vec<usize> = (0..cfg.n_samples).collect();
    let results: Vec<Result<(String, String)>> =
        remote::bounded_map(indices, cfg.parallelism, |_, sample_idx| {
            let completion =
                request_completion(cfg, &client, bearer.as_deref(), &prompt, sample_idx)?;
            if completion.0.trim().is_empty() {
                // One more try for an empty completion; if it is still empty
                // we keep it rather than resampling forever, so N stays
                // honest.
                log::warn!(
                    "query {} sample {sample_idx}: empty completion, retrying once",
                    query.query_id
                );
                return request_completion(cfg, &client, bearer.as_deref(), &prompt, sample_idx);
            }
            Ok(completion)
        });

    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut request_ids = Vec::with_capacity(cfg.n_samples);
    for result in results {
        let (text, id) = result?;
        samples.push(text);
        request_ids.push(id);
    }
    Ok((samples, request_ids))
}

/// One completion request; returns (text, response id).
fn request_completion(
    cfg: &GenerationConfig,
    client: &reqwest::blocking::Client,
    bearer: Option<&str>,
    prompt: &str,
    sample_idx: usize,
) -> Result<(String, String)> {
    let endpoint = cfg.endpoint_url.as_deref().expect("validated");
    let model = cfg.model_name.as_deref().expect("validated");
    let mut body = match cfg.api {
        RemoteApi::Chat => serde_json::json!({
            "model": model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        }),
        RemoteApi::Completions => serde_json::json!({
            "model": model,
            "prompt": prompt,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        }),
    };
    if let Some(seed) = cfg.seed {
        body["seed"] = serde_json::json!(seed);
    }

    let what = format!("generate sample {sample_idx}");
    remote::with_retries(&cfg.retry, &what, || {
        let value = remote::post_json(client, endpoint, bearer, &body)?;
        let text = extract_completion_text(&value, cfg.api).ok_or_else(|| {
            RequestError::Fatal("unrecognized completion response shape".to_string())
        })?;
        let id = value
            .get("id")
            .and_then(|v| v.as_str())
            .unwrap_or("")
            .to_string();
        Ok((text, id))
    })
}

fn extract_completion_text(value: &serde_json::Value, api: RemoteApi) -> Option<String> {
    let first = value.get("choices")?.as_array()?.first()?;
    let text = match api {
        RemoteApi::Chat => first.get("message")?.get("content")?.as_str()?,
        RemoteApi::Completions => first.get("text")?.as_str()?,
    };
    Some(text.to_string())
}

/// Cache key: SHA-256 over the length-prefixed sampling configuration.
/// Any change to the model, template text, query text, temperature, sample
/// count, or token budget produces a different key.
pub fn cache_key(
    model_name: &str,
    template_text: &str,
    query_text: &str,
    temperature: f64,
    n_samples: usize,
    max_tokens: usize,
) -> String {
    let mut hasher = Sha256::new();
    for field in [model_name, template_text, query_text] {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field.as_bytes());
    }
    hasher.update(temperature.to_bits().to_le_bytes());
    hasher.update((n_samples as u64).to_le_bytes());
    hasher.update((max_tokens as u64).to_le_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Cache key for a (config, template, query) triple.
pub fn cache_key_for(
    cfg: &GenerationConfig,
    template: &InstructionTemplate,
    query: &QueryRecord,
) -> String {
    cache_key(
        &cfg.effective_model_name(),
        template.text(),
        &query.text,
        cfg.temperature,
        cfg.n_samples,
        cfg.max_tokens,
    )
}

/// One line of the cache file.
#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    query_id: String,
    samples: Vec<String>,
    provenance: Provenance,
}

/// Append-only JSONL generation cache.
///
/// Opening reads a snapshot of the whole file into memory (corrupt lines are
/// skipped with a warning — a half-written trailing line after a crash must
/// not poison the archive). Stores append a line and update the snapshot; if
/// a key is appended twice the later line wins on the next open, matching
/// the in-memory behavior.
pub struct GenerationCache {
    path: PathBuf,
    entries: HashMap<String, HypotheticalSet>,
}

impl GenerationCache {
    /// Open (or create the directory entry for) a cache file.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut entries = HashMap::new();
        match File::open(&path) {
            Ok(file) => {
                let reader = BufReader::new(file);
                for (line_no, line) in reader.lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    match serde_json::from_str::<CacheLine>(&line) {
                        Ok(parsed) => {
                            entries.insert(
                                parsed.key,
                                HypotheticalSet {
                                    query_id: parsed.query_id,
                                    samples: parsed.samples,
                                    provenance: parsed.provenance,
                                },
                            );
                        }
                        Err(e) => {
                            log::warn!(
                                "{}:{}: skipping corrupt cache line: {e}",
                                path.display(),
                                line_no + 1
                            );
                        }
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Ok(GenerationCache { path, entries })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact-key lookup into the open snapshot.
    pub fn lookup(&self, key: &str) -> Option<&HypotheticalSet> {
        self.entries.get(key)
    }

    /// Append a generation set under `key` and add it to the snapshot.
    pub fn store(&mut self, key: &str, set: &HypotheticalSet) -> Result<()> {
        let line = serde_json::to_string(&CacheLine {
            key: key.to_string(),
            query_id: set.query_id.clone(),
            samples: set.samples.clone(),
            provenance: set.provenance.clone(),
        })?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
        self.entries.insert(key.to_string(), set.clone());
        Ok(())
    }
}

/// Fixed 256-word vocabulary for mock pseudo-passages. The exact contents
/// and order are part of the deterministic-generation contract; do not
/// reorder or edit.
const MOCK_VOCAB: [&str; 256] = [
    "river",
    "stone",
    "mountain",
    "valley",
    "forest",
    "meadow",
    "ocean",
    "harbor",
    "island",
    "cliff",
    "breeze",
    "storm",
    "thunder",
    "drizzle",
    "sunrise",
    "sunset",
    "twilight",
    "shadow",
    "ember",
    "flame",
    "copper",
    "silver",
    "golden",
    "marble",
    "granite",
    "timber",
    "willow",
    "cedar",
    "maple",
    "birch",
    "falcon",
    "heron",
    "sparrow",
    "raven",
    "finch",
    "otter",
    "badger",
    "marten",
    "lynx",
    "elk",
    "anchor",
    "compass",
    "lantern",
    "beacon",
    "rudder",
    "keel",
    "mast",
    "galley",
    "cargo",
    "thread",
    "needle",
    "loom",
    "fabric",
    "weave",
    "stitch",
    "button",
    "ribbon",
    "collar",
    "sleeve",
    "kettle",
    "saucer",
    "ladle",
    "skillet",
    "oven",
    "pantry",
    "cellar",
    "attic",
    "hearth",
    "mantel",
    "ledger",
    "quill",
    "parchment",
    "scroll",
    "codex",
    "margin",
    "chapter",
    "verse",
    "stanza",
    "preface",
    "circuit",
    "dynamo",
    "piston",
    "gear",
    "lever",
    "pulley",
    "spring",
    "valve",
    "gasket",
    "flange",
    "orchard",
    "vineyard",
    "furrow",
    "harvest",
    "sickle",
    "granary",
    "fallow",
    "pasture",
    "hedge",
    "thicket",
    "comet",
    "nebula",
    "quasar",
    "orbit",
    "zenith",
    "nadir",
    "equinox",
    "solstice",
    "aurora",
    "eclipse",
    "isotope",
    "lattice",
    "quantum",
    "photon",
    "neutron",
    "proton",
    "electron",
    "plasma",
    "vapor",
    "crystal",
    "sonata",
    "prelude",
    "fugue",
    "minuet",
    "rondo",
    "cadence",
    "tempo",
    "timbre",
    "chord",
    "refrain",
    "mosaic",
    "fresco",
    "etching",
    "canvas",
    "palette",
    "pigment",
    "varnish",
    "easel",
    "gallery",
    "plinth",
    "glacier",
    "tundra",
    "fjord",
    "steppe",
    "savanna",
    "lagoon",
    "atoll",
    "reef",
    "dune",
    "mesa",
    "parable",
    "riddle",
    "proverb",
    "fable",
    "legend",
    "saga",
    "myth",
    "chronicle",
    "annal",
    "edict",
    "caravan",
    "bazaar",
    "caravanserai",
    "mosque",
    "pagoda",
    "temple",
    "shrine",
    "obelisk",
    "ziggurat",
    "citadel",
    "cipher",
    "sigil",
    "rune",
    "glyph",
    "token",
    "emblem",
    "crest",
    "banner",
    "pennant",
    "standard",
    "mortar",
    "pestle",
    "crucible",
    "alembic",
    "retort",
    "funnel",
    "sieve",
    "tongs",
    "bellows",
    "forge",
    "saddle",
    "bridle",
    "stirrup",
    "harness",
    "yoke",
    "plough",
    "cartwheel",
    "axle",
    "spoke",
    "hub",
    "biscuit",
    "porridge",
    "chutney",
    "saffron",
    "cardamom",
    "nutmeg",
    "clove",
    "cinnamon",
    "ginger",
    "anise",
    "velvet",
    "linen",
    "muslin",
    "damask",
    "brocade",
    "taffeta",
    "calico",
    "gingham",
    "tweed",
    "flannel",
    "gosling",
    "cygnet",
    "owlet",
    "leveret",
    "fawn",
    "kit",
    "cub",
    "colt",
    "filly",
    "foal",
    "pebble",
    "boulder",
    "shale",
    "quartz",
    "basalt",
    "obsidian",
    "pumice",
    "flint",
    "slate",
    "chalk",
    "jetty",
    "quay",
    "wharf",
    "pier",
    "slipway",
    "mooring",
    "buoy",
    "trawler",
    "skiff",
    "lullaby",
    "anthem",
    "ballad",
    "carol",
    "shanty",
    "dirge",
    "hymn",
    "ode",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn query(id: &str, text: &str) -> QueryRecord {
        QueryRecord::new(id, text).unwrap()
    }

    #[test]
    fn template_validation() {
        assert!(InstructionTemplate::new("ok", "Q: [QUESTION] A:").is_ok());
        assert!(matches!(
            InstructionTemplate::new("none", "no slot here"),
            Err(HydeError::Template(_))
        ));
        assert!(matches!(
            InstructionTemplate::new("twice", "[QUESTION] and [QUESTION]"),
            Err(HydeError::Template(_))
        ));
        assert!(matches!(
            InstructionTemplate::new("mixed", "[QUESTION] or [TOPIC]"),
            Err(HydeError::Template(_))
        ));
    }

    #[test]
    fn render_worked_examples() {
        let web = builtin_template("web").unwrap();
        assert_eq!(
            render_instruction(&web, &query("q1", "what is dns")),
            "Please write a passage to answer the question\nQuestion: what is dns\nPassage:"
        );

        let scifact = builtin_template("scifact").unwrap();
        let prompt = render_instruction(&scifact, &query("c1", "zinc deficiency causes hair loss"));
        assert!(prompt.contains("scientific paper passage to support/refute the claim"));
        assert!(prompt.contains("zinc deficiency causes hair loss"));

        let custom = InstructionTemplate::new("t", "X [QUESTION] Y").unwrap();
        assert_eq!(render_instruction(&custom, &query("q", "q")), "X q Y");
    }

    #[test]
    fn rendering_is_injective_in_query() {
        let web = builtin_template("web").unwrap();
        let a = render_instruction(&web, &query("a", "first question"));
        let b = render_instruction(&web, &query("b", "second question"));
        assert_ne!(a, b);
    }

    #[test]
    fn builtin_registry_is_complete_and_valid() {
        let names: Vec<&str> = BUILTIN_TEMPLATES.iter().map(|(n, _)| *n).collect();
        for expected in [
            "web",
            "scifact",
            "arguana",
            "trec-covid",
            "fiqa",
            "dbpedia",
            "trec-news",
            "mrtydi-sw",
            "mrtydi-ko",
            "mrtydi-ja",
            "mrtydi-bn",
        ] {
            assert!(names.contains(&expected), "missing template {expected}");
        }
        assert_eq!(builtin_templates().len(), BUILTIN_TEMPLATES.len());
        assert_eq!(
            builtin_template("scifact").unwrap().placeholder(),
            "[Claim]"
        );
        assert_eq!(
            builtin_template("arguana").unwrap().placeholder(),
            "[PASSAGE]"
        );
        assert_eq!(
            builtin_template("trec-news").unwrap().placeholder(),
            "[TOPIC]"
        );
        assert!(builtin_template("no-such").is_none());
    }

    #[test]
    fn mock_is_deterministic() {
        let cfg = GenerationConfig {
            n_samples: 3,
            ..GenerationConfig::mock(7)
        };
        let tpl = builtin_template("web").unwrap();
        let q = query("q01", "capital of france");
        let a = generate_hypotheticals(&cfg, &tpl, &q).unwrap();
        let b = generate_hypotheticals(&cfg, &tpl, &q).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 3);
        // Each sample echoes the query and appends exactly 32 tokens.
        for sample in &a.samples {
            assert!(sample.starts_with("capital of france "));
            assert_eq!(sample.split(' ').count(), 3 + MOCK_TOKENS_PER_SAMPLE);
        }
        // Distinct sample indices give distinct passages.
        assert_ne!(a.samples[0], a.samples[1]);
    }

    // Frozen oracle: hashing seed=7 ‖ "q01" ‖ index=0 and running SplitMix64
    // was computed independently; the first five vocabulary indices are
    // 169, 33, 151, 254, 219.
    #[test]
    fn mock_matches_prng_oracle() {
        let s = mock_sample(7, "q01", 0, "q");
        let tokens: Vec<&str> = s.split(' ').collect();
        assert_eq!(tokens[0], "q");
        assert_eq!(
            &tokens[1..6],
            &[
                MOCK_VOCAB[169],
                MOCK_VOCAB[33],
                MOCK_VOCAB[151],
                MOCK_VOCAB[254],
                MOCK_VOCAB[219]
            ]
        );
        assert_eq!(
            &tokens[1..6],
            &["cipher", "raven", "proverb", "hymn", "gosling"]
        );
    }

    #[test]
    fn mock_seeds_differ() {
        let tpl = builtin_template("web").unwrap();
        let q = query("q01", "some question");
        let one = GenerationConfig {
            n_samples: 1,
            ..GenerationConfig::mock(7)
        };
        let other = GenerationConfig {
            n_samples: 1,
            ..GenerationConfig::mock(8)
        };
        let a = generate_hypotheticals(&one, &tpl, &q).unwrap();
        let b = generate_hypotheticals(&other, &tpl, &q).unwrap();
        assert_ne!(a.samples, b.samples);
    }

    #[test]
    fn zero_samples_allowed() {
        let cfg = GenerationConfig {
            n_samples: 0,
            ..GenerationConfig::mock(1)
        };
        let tpl = builtin_template("web").unwrap();
        let set = generate_hypotheticals(&cfg, &tpl, &query("q", "text")).unwrap();
        assert!(set.samples.is_empty());
        assert!(set.degenerate_indices().is_empty());
    }

    #[test]
    fn degenerate_detection() {
        let set = HypotheticalSet {
            query_id: "q".to_string(),
            samples: vec!["real text".to_string(), "  ".to_string(), String::new()],
            provenance: Provenance {
                model_name: "m".to_string(),
                temperature: 0.7,
                template_name: "web".to_string(),
                seed: None,
                request_ids: vec![],
            },
        };
        assert_eq!(set.degenerate_indices(), vec![1, 2]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = GenerationConfig::mock(0);
        cfg.temperature = -1.0;
        assert!(matches!(cfg.validate(), Err(HydeError::Config(_))));

        let mut cfg = GenerationConfig::mock(0);
        cfg.max_tokens = 0;
        assert!(matches!(cfg.validate(), Err(HydeError::Config(_))));

        let cfg = GenerationConfig {
            backend: GeneratorBackend::Remote,
            ..GenerationConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(HydeError::Config(_))));
    }

    #[test]
    fn cache_key_sensitivity() {
        let base = cache_key("m", "tpl [QUESTION]", "query", 0.7, 8, 512);
        assert_eq!(base.len(), 64);
        assert_ne!(
            base,
            cache_key("m2", "tpl [QUESTION]", "query", 0.7, 8, 512)
        );
        assert_ne!(
            base,
            cache_key("m", "tpl2 [QUESTION]", "query", 0.7, 8, 512)
        );
        assert_ne!(
            base,
            cache_key("m", "tpl [QUESTION]", "query2", 0.7, 8, 512)
        );
        assert_ne!(base, cache_key("m", "tpl [QUESTION]", "query", 0.8, 8, 512));
        assert_ne!(base, cache_key("m", "tpl [QUESTION]", "query", 0.7, 4, 512));
        assert_ne!(base, cache_key("m", "tpl [QUESTION]", "query", 0.7, 8, 256));
        // Field boundaries are length-prefixed: moving a character across
        // the boundary changes the key.
        assert_ne!(
            cache_key("ab", "c", "q", 0.7, 1, 1),
            cache_key("a", "bc", "q", 0.7, 1, 1)
        );
        // Deterministic.
        assert_eq!(base, cache_key("m", "tpl [QUESTION]", "query", 0.7, 8, 512));
    }

    #[test]
    fn mock_cache_keys_distinguish_seeds() {
        let tpl = builtin_template("web").unwrap();
        let q = query("q", "text");
        let k7 = cache_key_for(&GenerationConfig::mock(7), &tpl, &q);
        let k8 = cache_key_for(&GenerationConfig::mock(8), &tpl, &q);
        assert_ne!(k7, k8);
    }

    #[test]
    fn cache_round_trip_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen-cache.jsonl");
        let set = HypotheticalSet {
            query_id: "q1".to_string(),
            samples: vec!["sample one".to_string(), String::new()],
            provenance: Provenance {
                model_name: "mock-seed7".to_string(),
                temperature: 0.7,
                template_name: "web".to_string(),
                seed: Some(7),
                request_ids: vec![],
            },
        };

        let mut cache = GenerationCache::open(&path).unwrap();
        assert!(cache.is_empty());
        assert!(cache.lookup("k1").is_none());
        cache.store("k1", &set).unwrap();
        assert_eq!(cache.lookup("k1"), Some(&set));

        // A fresh open sees the stored entry; other keys still miss.
        let reopened = GenerationCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.lookup("k1"), Some(&set));
        assert!(reopened.lookup("k2").is_none());
    }

    #[test]
    fn cache_skips_corrupt_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let good = CacheLine {
            key: "good".to_string(),
            query_id: "q".to_string(),
            samples: vec!["s".to_string()],
            provenance: Provenance {
                model_name: "m".to_string(),
                temperature: 0.0,
                template_name: "web".to_string(),
                seed: None,
                request_ids: vec![],
            },
        };
        let mut contents = String::new();
        contents.push_str("{ not json\n");
        contents.push_str(&serde_json::to_string(&good).unwrap());
        contents.push('\n');
        contents.push_str("{\"key\": \"half\n");
        std::fs::write(&path, contents).unwrap();

        let cache = GenerationCache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);
        assert!(cache.lookup("good").is_some());
    }
}
