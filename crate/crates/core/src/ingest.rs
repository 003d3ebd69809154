//! Corpus and query ingestion, and the embedding store.
//!
//! Corpora are JSONL (one `{"_id"|"id", "title"?, "text"}` object per line,
//! BEIR-style), queries are TSV (`query_id<TAB>text`). Corpus reading is
//! streaming: peak memory is bounded by the encoding batch, not the corpus
//! (only the set of seen ids is retained, for duplicate detection and
//! resume).
//!
//! The embedding store is the binary artifact produced by corpus encoding:
//! a `"HYDE"` magic, format version, and dimension header followed by the
//! same `(id, vector)` record layout the index uses. There is deliberately
//! no record count in the header — the store grows by appending, and
//! [`embed_corpus`] resumes an interrupted run by skipping ids already
//! present (a truncated trailing record from a crash is discarded on open).

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Lines, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::encoder::{embed_texts, EncoderConfig};
use crate::error::{HydeError, Result};
use crate::records::{self, RecordResult};
use crate::types::{DocumentRecord, EmbeddingVector, QueryRecord};

/// File magic for the embedding store.
const STORE_MAGIC: [u8; 4] = *b"HYDE";
/// Current store format version.
const STORE_VERSION: u32 = 1;
/// Store header length in bytes: magic + version + dim.
const STORE_HEADER_LEN: u64 = 12;

/// Which part of a document feeds the encoder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FieldMode {
    /// Body text only.
    Text,
    /// Title prepended to body when a title exists (the BEIR-style default).
    #[default]
    TitleText,
}

impl FieldMode {
    fn include_title(self) -> bool {
        matches!(self, FieldMode::TitleText)
    }
}

impl FromStr for FieldMode {
    type Err = HydeError;

    fn from_str(s: &str) -> Result<FieldMode> {
        match s {
            "text" => Ok(FieldMode::Text),
            "title_text" => Ok(FieldMode::TitleText),
            _ => Err(HydeError::Config(format!(
                "unknown field mode {s:?} (expected \"text\" or \"title_text\")"
            ))),
        }
    }
}

impl std::fmt::Display for FieldMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FieldMode::Text => "text",
            FieldMode::TitleText => "title_text",
        })
    }
}

#[derive(Deserialize)]
struct RawDoc {
    #[serde(alias = "_id")]
    id: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    text: String,
}

/// Streaming JSONL corpus reader; yields documents in file order and fails
/// on malformed lines or duplicate ids with the offending line number.
pub struct CorpusReader {
    path: PathBuf,
    lines: Lines<BufReader<File>>,
    line_no: usize,
    seen: HashSet<String>,
}

impl CorpusReader {
    fn parse_line(&mut self, line: &str) -> Result<Option<DocumentRecord>> {
        if line.trim().is_empty() {
            return Ok(None);
        }
        let raw: RawDoc = serde_json::from_str(line)
            .map_err(|e| HydeError::format(&self.path, self.line_no, format!("bad JSON: {e}")))?;
        if !self.seen.insert(raw.id.clone()) {
            return Err(HydeError::format(
                &self.path,
                self.line_no,
                format!("duplicate doc id {:?}", raw.id),
            ));
        }
        let record = DocumentRecord::new(raw.id, raw.title, raw.text)
            .map_err(|e| HydeError::format(&self.path, self.line_no, e.to_string()))?;
        Ok(Some(record))
    }
}

impl Iterator for CorpusReader {
    type Item = Result<DocumentRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            match self.parse_line(&line) {
                Ok(Some(record)) => return Some(Ok(record)),
                Ok(None) => continue,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Open a JSONL corpus for streaming.
pub fn load_corpus(path: &Path) -> Result<CorpusReader> {
    let file = File::open(path)?;
    Ok(CorpusReader {
        path: path.to_path_buf(),
        lines: BufReader::new(file).lines(),
        line_no: 0,
        seen: HashSet::new(),
    })
}

/// Load a TSV query file (`query_id<TAB>text` per line).
pub fn load_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| HydeError::format(path, line_no, "expected query_id<TAB>text"))?;
        if !seen.insert(id.to_string()) {
            return Err(HydeError::format(
                path,
                line_no,
                format!("duplicate query id {id:?}"),
            ));
        }
        let record = QueryRecord::new(id, text.trim_end_matches('\r'))
            .map_err(|e| HydeError::format(path, line_no, e.to_string()))?;
        queries.push(record);
    }
    Ok(queries)
}

/// Sequential writer for the embedding store.
pub struct StoreWriter {
    writer: BufWriter<File>,
    dim: usize,
}

impl StoreWriter {
    /// Create a fresh store, writing its header.
    pub fn create(path: &Path, dim: usize) -> Result<StoreWriter> {
        if dim == 0 {
            return Err(HydeError::Config(
                "store dim must be at least 1".to_string(),
            ));
        }
        let mut writer = BufWriter::new(File::create(path)?);
        writer.write_all(&STORE_MAGIC)?;
        writer.write_all(&STORE_VERSION.to_le_bytes())?;
        writer.write_all(&(dim as u32).to_le_bytes())?;
        Ok(StoreWriter { writer, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Append one record.
    pub fn append(&mut self, id: &str, vector: &EmbeddingVector) -> Result<()> {
        if vector.dim() != self.dim {
            return Err(HydeError::DimMismatch {
                left: self.dim,
                right: vector.dim(),
            });
        }
        records::write_record(&mut self.writer, id, vector.values())?;
        Ok(())
    }

    /// Flush buffered records to disk.
    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Reader over a complete embedding store; any malformed record is an error
/// (readers feed the index — silent truncation here would silently shrink
/// the corpus).
#[derive(Debug)]
pub struct StoreReader {
    path: PathBuf,
    reader: BufReader<File>,
    dim: usize,
    offset: u64,
    done: bool,
}

impl StoreReader {
    /// Open a store and validate its header.
    pub fn open(path: &Path) -> Result<StoreReader> {
        let mut reader = BufReader::new(File::open(path)?);
        let dim = read_store_header(&mut reader, path)?;
        Ok(StoreReader {
            path: path.to_path_buf(),
            reader,
            dim,
            offset: STORE_HEADER_LEN,
            done: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Iterator for StoreReader {
    type Item = Result<(String, EmbeddingVector)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match records::read_record(&mut self.reader, self.dim) {
            Ok(RecordResult::Record { id, values }) => {
                self.offset += records::record_len(&id, self.dim);
                match EmbeddingVector::new(values) {
                    Ok(vector) => Some(Ok((id, vector))),
                    Err(e) => {
                        self.done = true;
                        Some(Err(HydeError::binary(
                            &self.path,
                            self.offset,
                            format!("record {id:?}: {e}"),
                        )))
                    }
                }
            }
            Ok(RecordResult::CleanEof) => {
                self.done = true;
                None
            }
            Ok(RecordResult::Malformed { message }) => {
                self.done = true;
                Some(Err(HydeError::binary(&self.path, self.offset, message)))
            }
            Err(e) => {
                self.done = true;
                Some(Err(e.into()))
            }
        }
    }
}

fn read_store_header<R: Read>(reader: &mut R, path: &Path) -> Result<usize> {
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| HydeError::binary(path, 0, "file too short for header"))?;
    if magic != STORE_MAGIC {
        return Err(HydeError::binary(path, 0, format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    reader
        .read_exact(&mut word)
        .map_err(|_| HydeError::binary(path, 4, "file too short for header"))?;
    let version = u32::from_le_bytes(word);
    if version != STORE_VERSION {
        return Err(HydeError::binary(
            path,
            4,
            format!("unsupported version {version} (expected {STORE_VERSION})"),
        ));
    }
    reader
        .read_exact(&mut word)
        .map_err(|_| HydeError::binary(path, 8, "file too short for header"))?;
    let dim = u32::from_le_bytes(word) as usize;
    if dim == 0 {
        return Err(HydeError::binary(path, 8, "store dim is 0"));
    }
    Ok(dim)
}

/// Open a store for appending, recovering from an interrupted run: scans
/// existing records, collects their ids, and truncates any malformed tail
/// (e.g. a half-written record from a crash) so appends start at a clean
/// record boundary. A missing file becomes a fresh store.
pub fn open_store_for_resume(path: &Path, dim: usize) -> Result<(StoreWriter, HashSet<String>)> {
    if dim == 0 {
        return Err(HydeError::Config(
            "store dim must be at least 1".to_string(),
        ));
    }
    let existing = match File::open(path) {
        Ok(file) => Some(file),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let Some(file) = existing else {
        return Ok((StoreWriter::create(path, dim)?, HashSet::new()));
    };

    let mut reader = BufReader::new(file);
    let stored_dim = read_store_header(&mut reader, path)?;
    if stored_dim != dim {
        return Err(HydeError::Config(format!(
            "existing store {} has dim {stored_dim}, config wants {dim}",
            path.display()
        )));
    }

    let mut ids = HashSet::new();
    let mut good_end = STORE_HEADER_LEN;
    loop {
        match records::read_record(&mut reader, dim)? {
            RecordResult::Record { id, values: _ } => {
                good_end += records::record_len(&id, dim);
                if !ids.insert(id.clone()) {
                    return Err(HydeError::binary(
                        path,
                        good_end,
                        format!("duplicate id {id:?} in store"),
                    ));
                }
            }
            RecordResult::CleanEof => break,
            RecordResult::Malformed { message } => {
                log::warn!(
                    "{}: discarding malformed tail at byte {good_end} ({message})",
                    path.display()
                );
                break;
            }
        }
    }
    drop(reader);

    let file = OpenOptions::new().read(true).write(true).open(path)?;
    file.set_len(good_end)?;
    let mut file = file;
    file.seek(SeekFrom::End(0))?;
    let writer = StoreWriter {
        writer: BufWriter::new(file),
        dim,
    };
    Ok((writer, ids))
}

/// Counters returned by [`embed_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedStats {
    /// Documents seen in the corpus file.
    pub total_docs: usize,
    /// Documents embedded and appended in this invocation.
    pub newly_embedded: usize,
    /// Documents skipped because the store already held them.
    pub skipped_existing: usize,
}

/// Embed a whole corpus into a store file, batching by
/// `enc_cfg.batch_size` and resuming past ids already present. An encoder
/// failure aborts with the number of durably completed records; the store
/// stays valid for a later resume.
pub fn embed_corpus(
    corpus_path: &Path,
    enc_cfg: &EncoderConfig,
    out_path: &Path,
    field: FieldMode,
) -> Result<EmbedStats> {
    enc_cfg.validate()?;
    let (mut writer, existing) = open_store_for_resume(out_path, enc_cfg.dim)?;
    let mut stats = EmbedStats {
        total_docs: 0,
        newly_embedded: 0,
        skipped_existing: 0,
    };
    let mut batch_ids: Vec<String> = Vec::with_capacity(enc_cfg.batch_size);
    let mut batch_texts: Vec<String> = Vec::with_capacity(enc_cfg.batch_size);

    let flush_batch = |writer: &mut StoreWriter,
                       ids: &mut Vec<String>,
                       texts: &mut Vec<String>,
                       done: &mut usize|
     -> Result<()> {
        if ids.is_empty() {
            return Ok(());
        }
        let vectors = embed_texts(enc_cfg, texts)?;
        for (id, vector) in ids.iter().zip(&vectors) {
            writer.append(id, vector)?;
            *done += 1;
        }
        ids.clear();
        texts.clear();
        Ok(())
    };

    for record in load_corpus(corpus_path)? {
        let record = record.map_err(|e| abort(stats.newly_embedded, e))?;
        stats.total_docs += 1;
        if existing.contains(&record.doc_id) {
            stats.skipped_existing += 1;
            continue;
        }
        batch_ids.push(record.doc_id.clone());
        batch_texts.push(record.embedding_text(field.include_title()));
        if batch_ids.len() == enc_cfg.batch_size {
            flush_batch(
                &mut writer,
                &mut batch_ids,
                &mut batch_texts,
                &mut stats.newly_embedded,
            )
            .map_err(|e| abort(stats.newly_embedded, e))?;
        }
    }
    flush_batch(
        &mut writer,
        &mut batch_ids,
        &mut batch_texts,
        &mut stats.newly_embedded,
    )
    .map_err(|e| abort(stats.newly_embedded, e))?;
    writer.finish()?;
    Ok(stats)
}

fn abort(completed: usize, source: HydeError) -> HydeError {
    HydeError::Aborted {
        completed,
        source: Box::new(source),
    }
}
