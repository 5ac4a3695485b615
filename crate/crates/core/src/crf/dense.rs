//! Reader and writer for `CNCE` per-token embedding files.
//!
//! Layout, all integers u32 little-endian, no padding:
//!
//! ```text
//! "CNCE" | version = 1 | dim
//! repeated: id_len | id (UTF-8) | token_count | token_count * dim f32 LE
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::CrfError;

pub const CNCE_MAGIC: &[u8; 4] = b"CNCE";
pub const CNCE_VERSION: u32 = 1;

/// Per-token vectors keyed by sentence id, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseStore {
    dim: usize,
    ids: Vec<String>,
    records: HashMap<String, Vec<f32>>,
}

impl DenseStore {
    pub fn new(dim: usize) -> Self {
        DenseStore {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Adds one sentence; `values` holds `token_count * dim` floats row-major.
    pub fn insert(&mut self, id: impl Into<String>, values: Vec<f32>) -> Result<(), CrfError> {
        let id = id.into();
        if self.dim == 0 || !values.len().is_multiple_of(self.dim) {
            return Err(CrfError::DimensionMismatch {
                expected: self.dim,
                got: values.len(),
            });
        }
        if self.records.contains_key(&id) {
            return Err(CrfError::Format(format!(
                "duplicate embedding record `{id}`"
            )));
        }
        self.ids.push(id.clone());
        self.records.insert(id, values);
        Ok(())
    }

    pub fn token_count(&self, id: &str) -> Option<usize> {
        self.records.get(id).map(|v| v.len() / self.dim.max(1))
    }

    pub fn vectors(&self, id: &str) -> Option<Vec<&[f32]>> {
        self.records.get(id).map(|v| v.chunks(self.dim).collect())
    }

    /// Vector of token `position` in sentence `id`, checked against the
    /// caller's token count.
    pub fn vector(
        &self,
        id: &str,
        position: usize,
        token_count: usize,
    ) -> Result<Vec<f64>, CrfError> {
        let values = self
            .records
            .get(id)
            .ok_or_else(|| CrfError::MissingEmbeddings(id.to_string()))?;
        let stored = values.len() / self.dim;
        if stored != token_count {
            return Err(CrfError::DimensionMismatch {
                expected: token_count,
                got: stored,
            });
        }
        Ok(values[position * self.dim..(position + 1) * self.dim]
            .iter()
            .map(|&x| x as f64)
            .collect())
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CrfError> {
        if self.buf.len() - self.pos < n {
            return Err(CrfError::TruncatedFile);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CrfError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_dense_store<R: Read>(mut reader: R) -> Result<DenseStore, CrfError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != CNCE_MAGIC {
        return Err(CrfError::Format("bad magic, expected CNCE".into()));
    }
    let version = cur.u32()?;
    if version != CNCE_VERSION {
        return Err(CrfError::Format(format!(
            "unsupported CNCE version {version}"
        )));
    }
    let dim = cur.u32()? as usize;
    if dim == 0 {
        return Err(CrfError::Format("embedding dimension is zero".into()));
    }
    let mut store = DenseStore::new(dim);
    while cur.pos < buf.len() {
        let id_len = cur.u32()? as usize;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|e| CrfError::Format(format!("record id is not UTF-8: {e}")))?
            .to_string();
        let tokens = cur.u32()? as usize;
        let n = tokens.checked_mul(dim).ok_or(CrfError::TruncatedFile)?;
        let bytes = cur.take(n.checked_mul(4).ok_or(CrfError::TruncatedFile)?)?;
        let values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        store.insert(id, values)?;
    }
    Ok(store)
}

pub fn load_dense_store(path: impl AsRef<Path>) -> Result<DenseStore, CrfError> {
    read_dense_store(std::fs::File::open(path)?)
}

pub fn write_dense_store<W: Write>(mut writer: W, store: &DenseStore) -> Result<(), CrfError> {
    writer.write_all(CNCE_MAGIC)?;
    writer.write_all(&CNCE_VERSION.to_le_bytes())?;
    writer.write_all(&(store.dim as u32).to_le_bytes())?;
    for id in &store.ids {
        let values = &store.records[id];
        writer.write_all(&(id.len() as u32).to_le_bytes())?;
        writer.write_all(id.as_bytes())?;
        writer.write_all(&((values.len() / store.dim) as u32).to_le_bytes())?;
        for v in values {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}
