//! Shared binary record layout for the flat index and the embedding store.
//!
//! Both artifacts carry a sequence of `(doc_id, vector)` records after their
//! headers: `u32` little-endian id byte-length, the id's UTF-8 bytes, then
//! `dim × f32` little-endian components. Round-trips are bit-exact.

use std::io::{ErrorKind, Read, Write};

/// Ids longer than this are assumed to be garbage (a corrupt or truncated
/// length prefix read as data), not real ids.
const MAX_ID_BYTES: u32 = 1 << 20;

/// Result of attempting to read one record.
pub(crate) enum RecordResult {
    /// A complete record.
    Record { id: String, values: Vec<f32> },
    /// The reader was positioned exactly at end-of-data.
    CleanEof,
    /// Data ended mid-record or the record is structurally invalid.
    Malformed { message: String },
}

/// Serialized byte length of a record with the given id and dimension.
pub(crate) fn record_len(id: &str, dim: usize) -> u64 {
    4 + id.len() as u64 + 4 * dim as u64
}

/// Write one record. Callers are responsible for having validated the id
/// (non-empty, no whitespace) and the vector width.
pub(crate) fn write_record<W: Write>(w: &mut W, id: &str, values: &[f32]) -> std::io::Result<()> {
    w.write_all(&(id.len() as u32).to_le_bytes())?;
    w.write_all(id.as_bytes())?;
    let mut buf = Vec::with_capacity(values.len() * 4);
    for &v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

/// Read one record of width `dim`. IO errors other than end-of-data bubble
/// up as `Err`; end-of-data and structural problems are reported in
/// [`RecordResult`] so callers can decide whether they are fatal (index
/// load) or a resumable truncation (embedding store).
pub(crate) fn read_record<R: Read>(r: &mut R, dim: usize) -> std::io::Result<RecordResult> {
    let mut len_buf = [0u8; 4];
    match read_exact_or_eof(r, &mut len_buf)? {
        ReadStatus::Full => {}
        ReadStatus::CleanEof => return Ok(RecordResult::CleanEof),
        ReadStatus::Partial => {
            return Ok(RecordResult::Malformed {
                message: "data ends inside an id length prefix".to_string(),
            })
        }
    }
    let id_len = u32::from_le_bytes(len_buf);
    if id_len == 0 || id_len > MAX_ID_BYTES {
        return Ok(RecordResult::Malformed {
            message: format!("implausible id length {id_len}"),
        });
    }

    let mut id_buf = vec![0u8; id_len as usize];
    match read_exact_or_eof(r, &mut id_buf)? {
        ReadStatus::Full => {}
        _ => {
            return Ok(RecordResult::Malformed {
                message: "data ends inside an id".to_string(),
            })
        }
    }
    let id = match String::from_utf8(id_buf) {
        Ok(id) => id,
        Err(_) => {
            return Ok(RecordResult::Malformed {
                message: "id is not valid UTF-8".to_string(),
            })
        }
    };

    let mut vec_buf = vec![0u8; dim * 4];
    match read_exact_or_eof(r, &mut vec_buf)? {
        ReadStatus::Full => {}
        _ => {
            return Ok(RecordResult::Malformed {
                message: format!("data ends inside the vector for id {id:?}"),
            })
        }
    }
    let values = vec_buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(RecordResult::Record { id, values })
}

enum ReadStatus {
    Full,
    CleanEof,
    Partial,
}

/// `read_exact`, but distinguishing "no bytes at all" (clean EOF) from
/// "some but not enough" (truncation).
fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<ReadStatus> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Ok(if filled == 0 {
                    ReadStatus::CleanEof
                } else {
                    ReadStatus::Partial
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(ReadStatus::Full)
}
