//! Precomputed token embeddings.
//!
//! ```text
//! "CRME" | version u32 | d u32
//! repeated: id_len u16 | id bytes (UTF-8) | n u16 | n·d f32 rows
//! ```
//!
//! Little-endian throughout. Items listed here bypass the hashed base
//! embedder; the adapter trains on top of the supplied rows.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::matrix::{normalize_in_place, Matrix};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"CRME";
pub const EMBEDDING_VERSION: u32 = 1;

const FMT: &str = "embedding file";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    items: BTreeMap<String, Matrix>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            items: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Matrix> {
        self.items.get(id)
    }

    /// Adds rows for `id`; rows are normalized on insertion.
    pub fn insert(&mut self, id: impl Into<String>, mut rows: Matrix) -> Result<()> {
        let id = id.into();
        if rows.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: rows.cols(),
            });
        }
        if rows.rows() == 0 || rows.rows() > u16::MAX as usize || id.len() > u16::MAX as usize {
            return Err(Error::invalid(format!("item {id} has an unsupported shape")));
        }
        for i in 0..rows.rows() {
            let row = rows.row_mut(i);
            if row.iter().any(|v| !v.is_finite()) || normalize_in_place(row) == 0.0 {
                return Err(Error::invalid(format!("item {id} row {i} is zero or non-finite")));
            }
        }
        if self.items.insert(id.clone(), rows).is_some() {
            return Err(Error::invalid(format!("duplicate embedding id {id}")));
        }
        Ok(())
    }

    pub fn write(&self, mut out: impl Write) -> Result<()> {
        out.write_all(EMBEDDING_MAGIC)?;
        out.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        for (id, rows) in &self.items {
            out.write_all(&(id.len() as u16).to_le_bytes())?;
            out.write_all(id.as_bytes())?;
            out.write_all(&(rows.rows() as u16).to_le_bytes())?;
            for &v in rows.as_slice() {
                out.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != EMBEDDING_MAGIC {
            return Err(Error::format(FMT, "bad magic"));
        }
        let version = cur.u32()?;
        if version != EMBEDDING_VERSION {
            return Err(Error::format(FMT, format!("unsupported version {version}")));
        }
        let dim = cur.u32()? as usize;
        if dim == 0 {
            return Err(Error::format(FMT, "zero dimension"));
        }
        let mut store = Self::new(dim);
        while !cur.at_end() {
            let id_len = cur.u16()? as usize;
            let id = std::str::from_utf8(cur.take(id_len)?)
                .map_err(|e| Error::format(FMT, format!("id is not UTF-8: {e}")))?
                .to_string();
            let n = cur.u16()? as usize;
            let raw = cur.take(n.checked_mul(dim).and_then(|x| x.checked_mul(4)).ok_or_else(
                || Error::format(FMT, "row block overflows"),
            )?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let rows = Matrix::from_vec(n, dim, data)?;
            store
                .insert(id, rows)
                .map_err(|e| Error::format(FMT, e.to_string()))?;
        }
        Ok(store)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(FMT, "truncated input"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
