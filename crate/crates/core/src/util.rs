use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// FNV-1a over `key`, folded into `seed`. Used to give every sample and
/// stratum its own RNG stream derived from the single run seed.
pub(crate) fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for byte in key.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A line of a JSONL file that failed to parse.
#[derive(Debug, Clone, PartialEq)]
pub struct BadLine {
    pub line_number: usize,
    pub message: String,
}

/// Reads every parseable record of a JSONL file, collecting the malformed
/// lines instead of aborting. Blank lines are ignored.
pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> io::Result<(Vec<T>, Vec<BadLine>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut bad = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(record) => records.push(record),
            Err(err) => bad.push(BadLine {
                line_number: idx + 1,
                message: err.to_string(),
            }),
        }
    }
    Ok((records, bad))
}

/// Writes all records, replacing `path` only once the new file is complete.
pub(crate) fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> io::Result<()> {
    let mut buf = Vec::new();
    for record in records {
        serde_json::to_writer(&mut buf, record)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

pub(crate) fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> io::Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
