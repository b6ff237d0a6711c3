//! The `L2GE` embedding file format.
//!
//! ```text
//! magic    4 bytes  "L2GE"
//! version  u32
//! n        u64
//! d        u64
//! ids      n × u64
//! coords   n·d × f64, row-major
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"L2GE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub node_ids: Vec<u64>,
    /// `n × d`, row `r` belongs to `node_ids[r]`.
    pub coords: DMatrix<f64>,
}

pub fn write(path: &Path, node_ids: &[u64], coords: &DMatrix<f64>) -> Result<()> {
    assert_eq!(node_ids.len(), coords.nrows(), "one id per row");
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(coords.nrows() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(coords.ncols() as u64).to_le_bytes()).map_err(io)?;
    for id in node_ids {
        w.write_all(&id.to_le_bytes()).map_err(io)?;
    }
    for r in 0..coords.nrows() {
        for c in 0..coords.ncols() {
            w.write_all(&coords[(r, c)].to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read(path: &Path) -> Result<EmbeddingFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);
    let bad = |message: String| Error::Format {
        path: path.into(),
        message,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4).map_err(|_| bad("truncated header".into()))?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    r.read_exact(&mut b8).map_err(|_| bad("truncated header".into()))?;
    let n = u64::from_le_bytes(b8);
    r.read_exact(&mut b8).map_err(|_| bad("truncated header".into()))?;
    let d = u64::from_le_bytes(b8);
    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_add(n))
        .and_then(|words| words.checked_mul(8))
        .and_then(|bytes| bytes.checked_add(24))
        .ok_or_else(|| bad(format!("header sizes overflow (n = {n}, d = {d})")))?;
    if expected != len {
        return Err(bad(format!(
            "file is {len} bytes, header (n = {n}, d = {d}) implies {expected}"
        )));
    }
    let (n, d) = (n as usize, d as usize);
    let mut node_ids = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8).map_err(|e| Error::io(path, e))?;
        node_ids.push(u64::from_le_bytes(b8));
    }
    let mut coords = DMatrix::zeros(n, d);
    for row in 0..n {
        for col in 0..d {
            r.read_exact(&mut b8).map_err(|e| Error::io(path, e))?;
            coords[(row, col)] = f64::from_le_bytes(b8);
        }
    }
    Ok(EmbeddingFile { node_ids, coords })
}
