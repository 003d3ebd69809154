//! Query-vector estimation and end-to-end search.
//!
//! The core idea wired together here: instead of embedding the query text
//! directly, embed `N` generated hypothetical documents (and optionally the
//! query too) with the same document encoder, average them, and use the mean
//! as the search vector. With `N = 0` and the query included, the estimate
//! is exactly the plain query embedding, so the whole pipeline degrades
//! gracefully to the dense-retrieval baseline — a property the test suite
//! leans on heavily.

use crate::encoder::{embed_texts, EncoderConfig};
use crate::error::{HydeError, Result, StageExt};
use crate::generator::{
    cache_key_for, generate_hypotheticals, GenerationCache, GenerationConfig, HypotheticalSet,
    InstructionTemplate,
};
use crate::index::FlatIndex;
use crate::types::{mean_of_refs, EmbeddingVector, QueryRecord, ScoredDoc};

/// The estimated dense query vector plus how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryVectorEstimate {
    pub query_id: String,
    pub vector: EmbeddingVector,
    /// Number of hypothetical-document vectors averaged in.
    pub n_used: usize,
    /// Whether the query's own embedding participated in the mean.
    pub include_query: bool,
}

/// Average hypothetical-document vectors (and optionally the query vector)
/// into one search vector.
///
/// With `include_query` the result is the mean of the `N+1` vectors
/// `[hypo..., query]`; without it, the mean of the `N` hypothetical vectors.
/// `N = 0` with the query included returns exactly the query vector.
pub fn estimate_query_vector(
    query_id: &str,
    hypo_vectors: &[EmbeddingVector],
    query_vector: Option<&EmbeddingVector>,
    include_query: bool,
) -> Result<QueryVectorEstimate> {
    if include_query && query_vector.is_none() {
        return Err(HydeError::Config(
            "include_query requires a query vector".to_string(),
        ));
    }
    if !include_query && hypo_vectors.is_empty() {
        return Err(HydeError::EmptyInput(
            "no hypothetical vectors and the query vector is excluded",
        ));
    }
    let query_tail = query_vector.filter(|_| include_query);
    let vector = mean_of_refs(hypo_vectors.iter().chain(query_tail))?;
    Ok(QueryVectorEstimate {
        query_id: query_id.to_string(),
        vector,
        n_used: hypo_vectors.len(),
        include_query,
    })
}

/// Everything produced on the way to a ranking; returned by
/// [`hyde_search_full`] for callers that want the intermediates (the CLI
/// logs degenerate generations and caches the samples).
#[derive(Debug, Clone)]
pub struct HydeSearchOutcome {
    pub hits: Vec<ScoredDoc>,
    pub estimate: QueryVectorEstimate,
    pub hypothetical: HypotheticalSet,
}

/// Full hypothetical-document search: generate, embed, average, retrieve.
/// See [`hyde_search_full`] for the variant that returns intermediates.
#[allow(clippy::too_many_arguments)]
pub fn hyde_search(
    query: &QueryRecord,
    template: &InstructionTemplate,
    gen_cfg: &GenerationConfig,
    enc_cfg: &EncoderConfig,
    index: &FlatIndex,
    k: usize,
    include_query: bool,
    cache: Option<&mut GenerationCache>,
) -> Result<Vec<ScoredDoc>> {
    Ok(hyde_search_full(
        query,
        template,
        gen_cfg,
        enc_cfg,
        index,
        k,
        include_query,
        cache,
    )?
    .hits)
}

/// As [`hyde_search`], also returning the estimate and the generated set.
///
/// Stage labels on errors: `generate` (LM sampling / cache), `encode`
/// (embedding), `estimate` (averaging), `search` (index scan).
#[allow(clippy::too_many_arguments)]
pub fn hyde_search_full(
    query: &QueryRecord,
    template: &InstructionTemplate,
    gen_cfg: &GenerationConfig,
    enc_cfg: &EncoderConfig,
    index: &FlatIndex,
    k: usize,
    include_query: bool,
    cache: Option<&mut GenerationCache>,
) -> Result<HydeSearchOutcome> {
    // 1. Obtain hypothetical documents, consulting the cache when present.
    let hypothetical = match cache {
        Some(cache) => {
            let key = cache_key_for(gen_cfg, template, query);
            match cache.lookup(&key) {
                Some(stored) => stored.clone(),
                None => {
                    let fresh =
                        generate_hypotheticals(gen_cfg, template, query).stage("generate")?;
                    cache.store(&key, &fresh).stage("generate")?;
                    fresh
                }
            }
        }
        None => generate_hypotheticals(gen_cfg, template, query).stage("generate")?,
    };

    // 2. Embed the samples and (if requested) the query with the shared
    // document encoder. Degenerate empty samples become zero vectors and
    // still count toward N.
    let hypo_vectors = if hypothetical.samples.is_empty() {
        Vec::new()
    } else {
        embed_texts(enc_cfg, &hypothetical.samples).stage("encode")?
    };
    let query_vector = if include_query {
        Some(
            embed_texts(enc_cfg, std::slice::from_ref(&query.text))
                .stage("encode")?
                .remove(0),
        )
    } else {
        None
    };

    // 3. Average into the search vector.
    let estimate = estimate_query_vector(
        &query.query_id,
        &hypo_vectors,
        query_vector.as_ref(),
        include_query,
    )
    .stage("estimate")?;

    // 4. Exact top-k retrieval.
    let hits = index.search_topk(&estimate.vector, k).stage("search")?;
    Ok(HydeSearchOutcome {
        hits,
        estimate,
        hypothetical,
    })
}

/// Plain dense-retrieval baseline: embed the query text, retrieve top-k.
/// Produces rankings identical to [`hyde_search`] with `n_samples = 0` and
/// `include_query = true`.
pub fn baseline_search(
    query: &QueryRecord,
    enc_cfg: &EncoderConfig,
    index: &FlatIndex,
    k: usize,
) -> Result<Vec<ScoredDoc>> {
    let query_vector = embed_texts(enc_cfg, std::slice::from_ref(&query.text))
        .stage("encode")?
        .remove(0);
    // Route through the estimator so the baseline shares the exact
    // arithmetic (including the f64→f32 mean round-trip) of the N=0 path.
    let estimate =
        estimate_query_vector(&query.query_id, &[], Some(&query_vector), true).stage("estimate")?;
    index.search_topk(&estimate.vector, k).stage("search")
}
