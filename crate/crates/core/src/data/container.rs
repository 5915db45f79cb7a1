use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Leading bytes of every embedding container.
pub const MAGIC: &[u8; 8] = b"REPRB1\0\0";

/// N×D matrix of f32 embeddings with one stable identifier per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    sample_ids: Vec<String>,
    dim: usize,
    vectors: Vec<f32>,
    source_tag: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    source_tag: String,
    n: usize,
    d: usize,
    sample_ids: Vec<String>,
}

impl EmbeddingSet {
    /// Validates and builds a set. `vectors` is row-major with `dim` columns.
    pub fn new(
        sample_ids: Vec<String>,
        dim: usize,
        vectors: Vec<f32>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(BenchError::Validation("embedding dimension must be ≥ 1".into()));
        }
        if sample_ids.is_empty() {
            return Err(BenchError::Validation("embedding set must hold at least one sample".into()));
        }
        if vectors.len() != sample_ids.len() * dim {
            return Err(BenchError::Validation(format!(
                "{} ids × {} dims does not match {} values",
                sample_ids.len(),
                dim,
                vectors.len()
            )));
        }
        let mut seen = HashSet::with_capacity(sample_ids.len());
        for id in &sample_ids {
            if id.is_empty() {
                return Err(BenchError::Validation("empty sample id".into()));
            }
            if !seen.insert(id.as_str()) {
                return Err(BenchError::Validation(format!("duplicate sample id {id:?}")));
            }
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(BenchError::Validation(format!(
                "non-finite value in row {} ({:?})",
                pos / dim,
                sample_ids[pos / dim]
            )));
        }
        Ok(EmbeddingSet {
            sample_ids,
            dim,
            vectors,
            source_tag: source_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Subset of rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let ids = rows.iter().map(|&i| self.sample_ids[i].clone()).collect();
        let mut vectors = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            vectors.extend_from_slice(self.row(i));
        }
        EmbeddingSet::new(ids, self.dim, vectors, self.source_tag.clone())
    }
}

/// Serializes a set to container bytes.
pub fn encode_embeddings(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let header = Header {
        source_tag: set.source_tag.clone(),
        n: set.len(),
        d: set.dim,
        sample_ids: set.sample_ids.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(json.len())
        .map_err(|_| BenchError::Format("container header exceeds 4 GiB".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + set.vectors.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in &set.vectors {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses container bytes.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingSet> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(BenchError::Format("missing REPRB1 magic".into()));
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 4 {
        return Err(BenchError::Format("missing header length".into()));
    }
    let header_len = u32::from_le_bytes([rest[0], rest[1], rest[2], rest[3]]) as usize;
    let rest = &rest[4..];
    if rest.len() < header_len {
        return Err(BenchError::Format(format!(
            "header declares {header_len} bytes, only {} present",
            rest.len()
        )));
    }
    let header: Header = serde_json::from_slice(&rest[..header_len])
        .map_err(|e| BenchError::Format(format!("bad container header: {e}")))?;
    if header.n == 0 || header.d == 0 {
        return Err(BenchError::Validation(format!(
            "container requires n ≥ 1 and d ≥ 1 (n={}, d={})",
            header.n, header.d
        )));
    }
    if header.sample_ids.len() != header.n {
        return Err(BenchError::Validation(format!(
            "header lists {} ids for n={}",
            header.sample_ids.len(),
            header.n
        )));
    }
    let payload = &rest[header_len..];
    let expected = header
        .n
        .checked_mul(header.d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| BenchError::Format("n·d overflows".into()))?;
    if payload.len() != expected {
        return Err(BenchError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let vectors = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingSet::new(header.sample_ids, header.d, vectors, header.source_tag)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    decode_embeddings(&bytes)
}

pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embeddings(set)?;
    fs::write(path, bytes).map_err(|e| BenchError::io(path, e))
}
