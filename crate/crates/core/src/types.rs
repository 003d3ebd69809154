//! Core value types: embedding vectors, corpus/query records, scored search
//! results, and the exact-arithmetic vector operations.
//!
//! Vectors store `f32` components (matching what embedding APIs return and
//! what goes on disk) but all reductions — inner products and means — widen
//! to `f64` and accumulate left to right. That fixed evaluation order is part
//! of the crate contract: the flat index, the query-vector estimator, and the
//! test oracles all reproduce scores bit for bit because they share it.

use crate::error::{HydeError, Result};

/// A dense embedding with `f32` storage and validated contents: at least one
/// component, all components finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Validate and wrap raw components. Rejects empty vectors and any
    /// NaN/infinite component (those would silently poison every score
    /// downstream).
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(HydeError::InvalidVector(
                "zero-dimensional vector".to_string(),
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(HydeError::InvalidVector(format!(
                "non-finite component {} at position {pos}",
                values[pos]
            )));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// L2-normalized copy. The zero vector has no direction and is returned
    /// unchanged rather than turned into NaNs.
    pub fn normalized(&self) -> Self {
        let norm = self
            .values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return self.clone();
        }
        EmbeddingVector {
            values: self
                .values
                .iter()
                .map(|&v| (f64::from(v) / norm) as f32)
                .collect(),
        }
    }
}

/// Widen-then-multiply inner product over raw `f32` slices, summed left to
/// right in `f64`. Callers must have checked lengths; this is the shared hot
/// loop for both the public [`inner_product`] and the flat index scan.
pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc += f64::from(x) * f64::from(y);
    }
    acc
}

/// Exact inner product of two vectors of equal dimension, accumulated in
/// `f64` from the first component to the last.
pub fn inner_product(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(HydeError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(dot_f64(a.values(), b.values()))
}

/// Component-wise mean of a non-empty list of equal-dimension vectors.
///
/// Accumulates each component in `f64` over the vectors in list order, then
/// divides by the count and narrows back to `f32`. With up to a few thousand
/// inputs this is exact enough that the mean of `k` copies of `v` is `v`
/// bit for bit.
pub fn mean_vectors(vectors: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    mean_of_refs(vectors.iter())
}

/// Mean over an iterator of vector references; shared by [`mean_vectors`]
/// and the query-vector estimator so both reduce in the identical order.
pub(crate) fn mean_of_refs<'a, I>(vectors: I) -> Result<EmbeddingVector>
where
    I: IntoIterator<Item = &'a EmbeddingVector>,
{
    let mut iter = vectors.into_iter();
    let first = iter
        .next()
        .ok_or(HydeError::EmptyInput("mean of zero vectors"))?;
    let dim = first.dim();
    let mut acc: Vec<f64> = first.values().iter().map(|&v| f64::from(v)).collect();
    let mut count = 1u32;
    for v in iter {
        if v.dim() != dim {
            return Err(HydeError::DimMismatch {
                left: dim,
                right: v.dim(),
            });
        }
        for (slot, &x) in acc.iter_mut().zip(v.values()) {
            *slot += f64::from(x);
        }
        count += 1;
    }
    let inv = f64::from(count);
    let values: Vec<f32> = acc.into_iter().map(|s| (s / inv) as f32).collect();
    EmbeddingVector::new(values)
}

/// One corpus document: stable id, optional title, body text.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub title: Option<String>,
    pub text: String,
}

impl DocumentRecord {
    /// Validate and build a record. Ids must be non-empty and contain no
    /// whitespace (they are written into whitespace-delimited run files);
    /// the body may be empty only when a non-empty title carries the content.
    pub fn new(
        doc_id: impl Into<String>,
        title: Option<String>,
        text: impl Into<String>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        let text = text.into();
        validate_id("doc_id", &doc_id)?;
        let title = title.filter(|t| !t.is_empty());
        if text.is_empty() && title.is_none() {
            return Err(HydeError::InvalidRecord(format!(
                "document {doc_id:?} has neither text nor title"
            )));
        }
        Ok(DocumentRecord {
            doc_id,
            title,
            text,
        })
    }

    /// The string handed to the encoder. With `include_title` (the default
    /// for corpora that carry titles) the title is prepended to the body,
    /// separated by one space.
    pub fn embedding_text(&self, include_title: bool) -> String {
        match (&self.title, include_title) {
            (Some(title), true) => {
                if self.text.is_empty() {
                    title.clone()
                } else {
                    format!("{title} {}", self.text)
                }
            }
            _ => self.text.clone(),
        }
    }
}

/// One search query: stable id plus free text.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
}

impl QueryRecord {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let query_id = query_id.into();
        let text = text.into();
        validate_id("query_id", &query_id)?;
        if text.is_empty() {
            return Err(HydeError::InvalidRecord(format!(
                "query {query_id:?} has empty text"
            )));
        }
        Ok(QueryRecord { query_id, text })
    }
}

/// One retrieved document with its exact inner-product score. Rank is the
/// position in the surrounding list (best first), not stored here.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

fn validate_id(what: &str, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(HydeError::InvalidRecord(format!("empty {what}")));
    }
    if id.chars().any(char::is_whitespace) {
        return Err(HydeError::InvalidRecord(format!(
            "{what} {id:?} contains whitespace"
        )));
    }
    Ok(())
}
