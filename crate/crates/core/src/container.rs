//! Little-endian binary container shared by every model checkpoint.
//!
//! A container starts with a 4-byte magic and a `u16` format version. The
//! remaining layout is owned by each model; this module only provides the
//! primitive readers and writers plus bounds-checked decoding.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot write {path}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {path}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint is truncated or corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint was built against a different {what} (expected hash {expected:016x}, found {found:016x})")]
    IncompatibleGraph {
        what: &'static str,
        expected: u64,
        found: u64,
    },
}

pub type Result<T, E = CheckpointError> = std::result::Result<T, E>;

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &[u8; 4]) -> Self {
        let mut e = Self { buf: Vec::new() };
        e.buf.extend_from_slice(magic);
        e.u16(FORMAT_VERSION);
        e
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, values: &[f32]) {
        self.buf.reserve(values.len() * 4);
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    /// `u32` count followed by `u32`-length-prefixed UTF-8 strings.
    pub fn strings<'a>(&mut self, items: impl ExactSizeIterator<Item = &'a str>) {
        self.u32(items.len() as u32);
        for s in items {
            self.u32(s.len() as u32);
            self.buf.extend_from_slice(s.as_bytes());
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn write_to(self, path: &Path) -> Result<()> {
        write_file(&self.buf, path)
    }
}

pub fn write_file(bytes: &[u8], path: &Path) -> Result<()> {
    let err = |source| CheckpointError::Write {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(err)?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(err)?;
    w.flush().map_err(err)
}

pub struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Checks magic and version.
    pub fn new(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < 6 {
            return Err(CheckpointError::Format("file shorter than header".into()));
        }
        if &bytes[..4] != magic {
            return Err(CheckpointError::Format(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Format(format!(
                "unsupported version {version}"
            )));
        }
        Ok(Self { bytes, pos: 6 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| {
                CheckpointError::Corrupt(format!(
                    "need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads `rows * cols` floats, refusing sizes the remaining input cannot hold.
    pub fn f32s(&mut self, rows: u64, cols: u64) -> Result<Vec<f32>> {
        let count = rows
            .checked_mul(cols)
            .and_then(|c| usize::try_from(c).ok())
            .ok_or_else(|| CheckpointError::Corrupt(format!("matrix {rows}x{cols} too large")))?;
        let bytes = count
            .checked_mul(4)
            .ok_or_else(|| CheckpointError::Corrupt(format!("matrix {rows}x{cols} too large")))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.u32()? as usize;
        // every string needs at least its 4-byte length prefix
        if n > self.remaining() / 4 {
            return Err(CheckpointError::Corrupt(format!("string table of {n} entries")));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let len = self.u32()? as usize;
            let raw = self.take(len)?;
            let s = std::str::from_utf8(raw)
                .map_err(|e| CheckpointError::Corrupt(format!("invalid utf-8 string: {e}")))?;
            out.push(s.to_owned());
        }
        Ok(out)
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(CheckpointError::Corrupt(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| CheckpointError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub fn check_hash(what: &'static str, expected: u64, found: u64) -> Result<()> {
    if expected != found {
        return Err(CheckpointError::IncompatibleGraph {
            what,
            expected,
            found,
        });
    }
    Ok(())
}
