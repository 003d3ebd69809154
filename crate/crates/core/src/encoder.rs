//! Document/query encoders.
//!
//! Two backends sit behind one entry point, [`embed_texts`]:
//!
//! * **remote** — POSTs batches to an HTTP embedding endpoint (the setup used
//!   with a real contrastive encoder serving embeddings over the network).
//! * **bow_hash** — a deterministic hashed bag-of-words encoder that needs no
//!   network or model weights. It is not a quality encoder; it exists so the
//!   whole pipeline can run offline with reproducible vectors, and it
//!   preserves the one property the pipeline logic relies on: texts sharing
//!   more tokens get larger inner products.
//!
//! Both backends see identical pre-processing (truncation to
//! `max_input_chars`) and post-processing (optional L2 normalization), so
//! swapping backends changes only where vectors come from.

use serde::{Deserialize, Serialize};

use crate::error::{HydeError, Result};
use crate::hash::fnv1a64;
use crate::remote::{self, RequestError, RetryPolicy};
use crate::types::EmbeddingVector;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Environment variable holding the bearer token for the remote embedding
/// endpoint. Never read from config files.
pub const ENCODER_API_KEY_VAR: &str = "HYDE_ENCODER_API_KEY";

/// Below this many texts the parallel feature sticks to one thread; rayon
/// setup costs more than hashing a handful of strings.
#[cfg(feature = "parallel")]
const PARALLEL_MIN_TEXTS: usize = 16;

/// Which encoder implementation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderBackend {
    Remote,
    BowHash,
}

impl std::str::FromStr for EncoderBackend {
    type Err = HydeError;

    /// Accepts the same spellings the config file uses.
    fn from_str(s: &str) -> Result<EncoderBackend> {
        match s {
            "remote" => Ok(EncoderBackend::Remote),
            "bow_hash" => Ok(EncoderBackend::BowHash),
            _ => Err(HydeError::Config(format!(
                "unknown encoder backend {s:?} (expected \"remote\" or \"bow_hash\")"
            ))),
        }
    }
}

/// Encoder configuration. `dim` is authoritative: remote responses of any
/// other width are rejected rather than silently accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub backend: EncoderBackend,
    /// Remote backend only: full URL of the embedding endpoint.
    pub endpoint_url: Option<String>,
    /// Remote backend only: model identifier sent with each request. Also
    /// recorded in run-file tags.
    pub model_name: Option<String>,
    /// Embedding dimensionality.
    pub dim: usize,
    /// Inputs longer than this many characters are truncated before
    /// encoding (typical embedding endpoints cap input length anyway).
    pub max_input_chars: usize,
    /// Remote backend: texts per request.
    pub batch_size: usize,
    /// L2-normalize every vector after encoding.
    pub normalize: bool,
    /// Remote backend: maximum in-flight requests.
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            backend: EncoderBackend::BowHash,
            endpoint_url: None,
            model_name: None,
            dim: 768,
            max_input_chars: 2000,
            batch_size: 32,
            normalize: false,
            parallelism: 4,
            retry: RetryPolicy::default(),
        }
    }
}

impl EncoderConfig {
    /// Offline hashed bag-of-words encoder of the given width.
    pub fn bow_hash(dim: usize) -> Self {
        EncoderConfig {
            backend: EncoderBackend::BowHash,
            dim,
            ..EncoderConfig::default()
        }
    }

    /// Remote HTTP encoder.
    pub fn remote(
        endpoint_url: impl Into<String>,
        model_name: impl Into<String>,
        dim: usize,
    ) -> Self {
        EncoderConfig {
            backend: EncoderBackend::Remote,
            endpoint_url: Some(endpoint_url.into()),
            model_name: Some(model_name.into()),
            dim,
            ..EncoderConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(HydeError::Config(
                "encoder dim must be at least 1".to_string(),
            ));
        }
        if self.max_input_chars == 0 {
            return Err(HydeError::Config(
                "encoder max_input_chars must be at least 1".to_string(),
            ));
        }
        if self.batch_size == 0 {
            return Err(HydeError::Config(
                "encoder batch_size must be at least 1".to_string(),
            ));
        }
        if self.backend == EncoderBackend::Remote {
            if self.endpoint_url.as_deref().unwrap_or("").is_empty() {
                return Err(HydeError::Config(
                    "remote encoder requires endpoint_url".to_string(),
                ));
            }
            if self.model_name.as_deref().unwrap_or("").is_empty() {
                return Err(HydeError::Config(
                    "remote encoder requires model_name".to_string(),
                ));
            }
        }
        self.retry.validate()
    }

    /// Name used in run-file tags: the remote model, or a synthetic name for
    /// the offline backend.
    pub fn tag_name(&self) -> String {
        match self.backend {
            EncoderBackend::Remote => self
                .model_name
                .clone()
                .unwrap_or_else(|| "remote".to_string()),
            EncoderBackend::BowHash => format!("bow{}", self.dim),
        }
    }
}

/// Lowercase the text and split it into maximal runs of alphanumeric
/// characters (Unicode-aware); everything else separates tokens.
pub fn tokenize_bow(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Hashed bag-of-words vector: component `fnv1a64(token) % dim` counts the
/// occurrences of `token`. Empty or all-separator text yields the zero
/// vector.
fn bow_hash_vector(text: &str, dim: usize) -> EmbeddingVector {
    let mut counts = vec![0f32; dim];
    for token in tokenize_bow(text) {
        let bucket = (fnv1a64(token.as_bytes()) % dim as u64) as usize;
        counts[bucket] += 1.0;
    }
    EmbeddingVector::new(counts).expect("count vector is non-empty and finite")
}

/// Encode a non-empty list of texts, preserving order. This is the only
/// encoding entry point; it dispatches on `config.backend`.
pub fn embed_texts(config: &EncoderConfig, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
    config.validate()?;
    if texts.is_empty() {
        return Err(HydeError::EmptyInput("no texts to embed"));
    }
    let truncated: Vec<&str> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let cut = truncate_chars(t, config.max_input_chars);
            if cut.len() < t.len() {
                log::debug!(
                    "truncating input {i} from {} to {} bytes ({} chars)",
                    t.len(),
                    cut.len(),
                    config.max_input_chars
                );
            }
            cut
        })
        .collect();

    let vectors = match config.backend {
        EncoderBackend::BowHash => embed_bow(config, &truncated),
        EncoderBackend::Remote => embed_remote(config, &truncated)?,
    };

    if config.normalize {
        Ok(vectors.iter().map(EmbeddingVector::normalized).collect())
    } else {
        Ok(vectors)
    }
}

/// Longest prefix of `text` with at most `max_chars` characters.
fn truncate_chars(text: &str, max_chars: usize) -> &str {
    match text.char_indices().nth(max_chars) {
        Some((byte_idx, _)) => &text[..byte_idx],
        None => text,
    }
}

fn embed_bow(config: &EncoderConfig, texts: &[&str]) -> Vec<EmbeddingVector> {
    #[cfg(feature = "parallel")]
    if texts.len() >= PARALLEL_MIN_TEXTS {
        return texts
            .par_iter()
            .map(|t| bow_hash_vector(t, config.dim))
            .collect();
    }
    texts
        .iter()
        .map(|t| bow_hash_vector(t, config.dim))
        .collect()
}

fn embed_remote(config: &EncoderConfig, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
    let client = remote::http_client()?;
    let bearer = remote::bearer_from_env(ENCODER_API_KEY_VAR);
    let endpoint = config.endpoint_url.as_deref().expect("validated");
    let model = config.model_name.as_deref().expect("validated");

    let batches: Vec<Vec<String>> = texts
        .chunks(config.batch_size)
        .map(|chunk| chunk.iter().map(|t| t.to_string()).collect())
        .collect();

    let results: Vec<Result<Vec<EmbeddingVector>>> =
        remote::bounded_map(batches, config.parallelism, |batch_idx, batch| {
            embed_one_batch(
                config,
                &client,
                bearer.as_deref(),
                endpoint,
                model,
                batch_idx,
                &batch,
            )
        });

    let mut vectors = Vec::with_capacity(texts.len());
    for result in results {
        vectors.extend(result?);
    }
    Ok(vectors)
}

fn embed_one_batch(
    config: &EncoderConfig,
    client: &reqwest::blocking::Client,
    bearer: Option<&str>,
    endpoint: &str,
    model: &str,
    batch_idx: usize,
    batch: &[String],
) -> Result<Vec<EmbeddingVector>> {
    let body = serde_json::json!({ "model": model, "input": batch });
    let what = format!("embed batch {batch_idx} ({} texts)", batch.len());
    remote::with_retries(&config.retry, &what, || {
        let value = remote::post_json(client, endpoint, bearer, &body)?;
        let rows = parse_embedding_response(&value).ok_or_else(|| {
            RequestError::Fatal("unrecognized embedding response shape".to_string())
        })?;
        if rows.len() != batch.len() {
            return Err(RequestError::Fatal(format!(
                "expected {} embeddings, got {}",
                batch.len(),
                rows.len()
            )));
        }
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != config.dim {
                return Err(RequestError::Fatal(format!(
                    "expected dim {}, got {}",
                    config.dim,
                    row.len()
                )));
            }
            let vector = EmbeddingVector::new(row)
                .map_err(|e| RequestError::Fatal(format!("bad embedding: {e}")))?;
            out.push(vector);
        }
        Ok(out)
    })
}

/// Pull ordered embedding rows out of the common response shapes:
/// a bare array of arrays, `{"embeddings": [[...]]}`, or the OpenAI-style
/// `{"data": [{"embedding": [...], "index": n}]}` (re-ordered by `index`
/// when present).
fn parse_embedding_response(value: &serde_json::Value) -> Option<Vec<Vec<f32>>> {
    if let Some(rows) = value.as_array() {
        return rows.iter().map(parse_float_row).collect();
    }
    if let Some(rows) = value.get("embeddings").and_then(|v| v.as_array()) {
        return rows.iter().map(parse_float_row).collect();
    }
    if let Some(items) = value.get("data").and_then(|v| v.as_array()) {
        let mut rows: Vec<(usize, Vec<f32>)> = Vec::with_capacity(items.len());
        for (pos, item) in items.iter().enumerate() {
            let row = parse_float_row(item.get("embedding")?)?;
            let index = item
                .get("index")
                .and_then(|i| i.as_u64())
                .map_or(pos, |i| i as usize);
            rows.push((index, row));
        }
        rows.sort_by_key(|(index, _)| *index);
        return Some(rows.into_iter().map(|(_, row)| row).collect());
    }
    None
}

fn parse_float_row(value: &serde_json::Value) -> Option<Vec<f32>> {
    value
        .as_array()?
        .iter()
        .map(|v| v.as_f64().map(|f| f as f32))
        .collect()
}
