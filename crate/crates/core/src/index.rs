//! Exact flat maximum-inner-product index.
//!
//! The index is a dense row-major matrix of corpus embeddings plus their
//! doc_ids, scanned exhaustively at query time: every document is scored with
//! a 64-bit-accumulated inner product and the top k survive. No
//! approximation, no training — score order is a pure function of the data.
//!
//! Ordering contract: results sort by score descending with ties broken by
//! doc_id ascending, which is a strict total order (ids are unique). That
//! makes top-k selection deterministic across platforms, thread counts, and
//! the parallel/sequential code paths.
//!
//! With the `parallel` feature (default), corpora at or above
//! [`PARALLEL_MIN_ENTRIES`] rows are scored on the rayon pool;
//! [`FlatIndex::search_topk_seq`] is the always-compiled sequential twin used
//! as the benchmark baseline and correctness reference.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{HydeError, Result};
use crate::records::{self, RecordResult};
use crate::types::{dot_f64, EmbeddingVector, ScoredDoc};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// File magic for the persisted index.
const INDEX_MAGIC: [u8; 4] = *b"HYDX";
/// Current format version.
const INDEX_VERSION: u32 = 1;

/// Minimum corpus size before scoring fans out across threads; below this
/// the scan is cheaper than the fork/join overhead.
#[cfg(feature = "parallel")]
pub const PARALLEL_MIN_ENTRIES: usize = 256;

/// Flat in-memory index: `ids[i]` owns row `i` of the row-major `data`
/// matrix. Entry order is ingestion order and is persisted stably.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
}

impl FlatIndex {
    /// Build an index from `(doc_id, vector)` pairs. All vectors must share
    /// one dimension and ids must be unique; entry order is preserved.
    pub fn build<I>(entries: I) -> Result<FlatIndex>
    where
        I: IntoIterator<Item = (String, EmbeddingVector)>,
    {
        let mut dim = 0usize;
        let mut ids: Vec<String> = Vec::new();
        let mut data: Vec<f32> = Vec::new();
        let mut seen: std::collections::HashSet<String> = std::collections::HashSet::new();
        for (doc_id, vector) in entries {
            if ids.is_empty() {
                dim = vector.dim();
            } else if vector.dim() != dim {
                return Err(HydeError::DimMismatch {
                    left: dim,
                    right: vector.dim(),
                });
            }
            if !seen.insert(doc_id.clone()) {
                return Err(HydeError::DuplicateId(doc_id));
            }
            ids.push(doc_id);
            data.extend_from_slice(vector.values());
        }
        Ok(FlatIndex { dim, ids, data })
    }

    /// Number of indexed documents.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Embedding dimensionality (0 for an empty index).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Iterate entries in ingestion order as `(doc_id, row)`.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim.max(1)))
            .map(|(id, row)| (id.as_str(), row))
    }

    /// Exact top-k by inner product. Dispatches to the parallel scan for
    /// large corpora when the `parallel` feature is enabled; results are
    /// identical to [`search_topk_seq`](Self::search_topk_seq) either way.
    pub fn search_topk(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredDoc>> {
        self.check_query(query, k)?;
        if self.is_empty() {
            return Ok(Vec::new());
        }
        #[cfg(feature = "parallel")]
        if self.len() >= PARALLEL_MIN_ENTRIES {
            let scored: Vec<(f64, usize)> = self
                .data
                .par_chunks(self.dim)
                .enumerate()
                .map(|(i, row)| (dot_f64(query.values(), row), i))
                .collect();
            return Ok(self.select_topk(scored, k));
        }
        self.search_topk_seq(query, k)
    }

    /// Sequential reference scan: same contract and identical output as
    /// [`search_topk`](Self::search_topk), never using the thread pool.
    pub fn search_topk_seq(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredDoc>> {
        self.check_query(query, k)?;
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let scored: Vec<(f64, usize)> = self
            .data
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| (dot_f64(query.values(), row), i))
            .collect();
        Ok(self.select_topk(scored, k))
    }

    /// Top-k for a batch of queries; queries are independent and are
    /// partitioned across threads when the `parallel` feature is enabled.
    pub fn search_batch(
        &self,
        queries: &[EmbeddingVector],
        k: usize,
    ) -> Result<Vec<Vec<ScoredDoc>>> {
        #[cfg(feature = "parallel")]
        {
            queries
                .par_iter()
                .map(|q| self.search_topk_seq(q, k))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            queries.iter().map(|q| self.search_topk_seq(q, k)).collect()
        }
    }

    fn check_query(&self, query: &EmbeddingVector, k: usize) -> Result<()> {
        if k == 0 {
            return Err(HydeError::Config("search k must be at least 1".to_string()));
        }
        if !self.is_empty() && query.dim() != self.dim {
            return Err(HydeError::DimMismatch {
                left: query.dim(),
                right: self.dim,
            });
        }
        Ok(())
    }

    /// Keep the best `k` of the scored rows under (score desc, doc_id asc)
    /// and return them in that order.
    fn select_topk(&self, mut scored: Vec<(f64, usize)>, k: usize) -> Vec<ScoredDoc> {
        let better = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.ids[a.1].as_str().cmp(self.ids[b.1].as_str()))
        };
        let k = k.min(scored.len());
        // For small k a partial selection avoids sorting the whole corpus;
        // the comparator is a strict total order, so both paths agree.
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, better);
            scored.truncate(k);
        }
        scored.sort_unstable_by(better);
        scored
            .into_iter()
            .map(|(score, i)| ScoredDoc {
                doc_id: self.ids[i].clone(),
                score,
            })
            .collect()
    }

    /// Persist to `path`: magic "HYDX", u32 LE version, u32 LE dim, u64 LE
    /// count, then one record per entry in order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for (id, row) in self.entries() {
            records::write_record(&mut w, id, row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load an index persisted by [`save`](Self::save). Round-trips are
    /// bit-exact; malformed files fail with the offending byte offset.
    pub fn load(path: &Path) -> Result<FlatIndex> {
        let mut r = BufReader::new(File::open(path)?);
        let mut offset = 0u64;

        let mut magic = [0u8; 4];
        read_header_bytes(&mut r, &mut magic, path, &mut offset)?;
        if magic != INDEX_MAGIC {
            return Err(HydeError::binary(path, 0, format!("bad magic {magic:?}")));
        }
        let mut word = [0u8; 4];
        read_header_bytes(&mut r, &mut word, path, &mut offset)?;
        let version = u32::from_le_bytes(word);
        if version != INDEX_VERSION {
            return Err(HydeError::binary(
                path,
                4,
                format!("unsupported version {version} (expected {INDEX_VERSION})"),
            ));
        }
        read_header_bytes(&mut r, &mut word, path, &mut offset)?;
        let dim = u32::from_le_bytes(word) as usize;
        let mut count_bytes = [0u8; 8];
        read_header_bytes(&mut r, &mut count_bytes, path, &mut offset)?;
        let count = u64::from_le_bytes(count_bytes);
        if dim == 0 && count > 0 {
            return Err(HydeError::binary(path, 8, "dim 0 with nonzero entry count"));
        }

        let mut entries: Vec<(String, EmbeddingVector)> =
            Vec::with_capacity(count.min(1 << 20) as usize);
        for _ in 0..count {
            match records::read_record(&mut r, dim)? {
                RecordResult::Record { id, values } => {
                    let len = records::record_len(&id, dim);
                    let vector = EmbeddingVector::new(values).map_err(|e| {
                        HydeError::binary(path, offset, format!("record {id:?}: {e}"))
                    })?;
                    entries.push((id, vector));
                    offset += len;
                }
                RecordResult::CleanEof => {
                    return Err(HydeError::binary(
                        path,
                        offset,
                        format!(
                            "expected {count} records, file ends after {}",
                            entries.len()
                        ),
                    ))
                }
                RecordResult::Malformed { message } => {
                    return Err(HydeError::binary(path, offset, message))
                }
            }
        }
        // The declared count is authoritative; trailing bytes mean the file
        // was not produced by this writer.
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(HydeError::binary(
                path,
                offset,
                "trailing bytes after final record",
            ));
        }

        FlatIndex::build(entries)
            .map_err(|e| HydeError::binary(path, offset, format!("invalid entries: {e}")))
    }
}

fn read_header_bytes<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    path: &Path,
    offset: &mut u64,
) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            HydeError::binary(path, *offset, "file too short for header")
        } else {
            HydeError::Io(e)
        }
    })?;
    *offset += buf.len() as u64;
    Ok(())
}

/// Free-function alias for [`FlatIndex::build`].
pub fn build_index<I>(entries: I) -> Result<FlatIndex>
where
    I: IntoIterator<Item = (String, EmbeddingVector)>,
{
    FlatIndex::build(entries)
}
