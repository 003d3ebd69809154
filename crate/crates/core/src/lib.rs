//! Zero-shot dense retrieval via hypothetical document embeddings.
//!
//! The pipeline turns a free-text query into a dense query vector without any
//! retrieval supervision: an instruction-following language model writes a
//! handful of hypothetical answer passages, a shared document encoder maps
//! each passage (and optionally the query itself) into the corpus embedding
//! space, and the component-wise mean of those vectors is used for exact
//! inner-product search over a flat index.
//!
//! Crate layout:
//!
//! * [`types`] — embedding vectors, corpus/query records, scored results,
//!   and the exact-arithmetic primitives (`inner_product`, `mean_vectors`).
//! * [`encoder`] — document/query encoders: a remote HTTP embedding backend
//!   and a deterministic hashed bag-of-words backend for offline tests.
//! * [`generator`] — instruction templates, hypothetical-document generation
//!   (remote LLM or deterministic mock), and an append-only generation cache.
//! * [`pipeline`] — query vector estimation and end-to-end search entry
//!   points (`hyde_search`, `baseline_search`).
//! * [`index`] — exact flat inner-product index with binary persistence.
//! * [`eval`] — TREC-style qrels/run handling and rank metrics (nDCG, MAP,
//!   recall, MRR).
//! * [`ingest`] — JSONL corpus / TSV query loading and the resumable
//!   embedding store produced by corpus encoding.
//!
//! With the default `parallel` feature, index scans, batch encoding, and
//! per-query evaluation fan out across a rayon thread pool; every parallel
//! path has a sequential twin that produces identical results, so the feature
//! only affects throughput.

pub mod encoder;
pub mod error;
pub mod eval;
pub mod generator;
pub mod hash;
pub mod index;
pub mod ingest;
pub mod pipeline;
pub mod types;

mod records;
mod remote;

pub use error::{HydeError, Result, StageExt};
pub use types::{
    inner_product, mean_vectors, DocumentRecord, EmbeddingVector, QueryRecord, ScoredDoc,
};
