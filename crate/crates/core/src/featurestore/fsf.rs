//! FSF v1 container: a little-endian header, an f32 row-major payload, optional
//! i32 labels and a trailing JSON metadata object.
//!
//! ```text
//! 0..4    magic "FSF1"
//! 4..8    u32 rows
//! 8..12   u32 dim
//! 12      u8 flags (bit0 has_labels, bit1 normalized)
//! ...     rows*dim f32
//! ...     rows i32 labels (if has_labels)
//! ...     u32 json_len, json_len bytes of UTF-8 JSON
//! ```

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FSF1";
pub const FLAG_HAS_LABELS: u8 = 0b01;
pub const FLAG_NORMALIZED: u8 = 0b10;
pub const HEADER_LEN: usize = 13;

/// Undecorated contents of one FSF file.
#[derive(Debug, Clone, PartialEq)]
pub struct FsfBlock {
    pub rows: usize,
    pub dim: usize,
    pub normalized: bool,
    pub data: Vec<f32>,
    pub labels: Option<Vec<i32>>,
    pub metadata: Map<String, Value>,
}

impl FsfBlock {
    pub fn encoded_len(&self) -> usize {
        let labels = self.labels.as_ref().map_or(0, |l| l.len() * 4);
        HEADER_LEN + self.data.len() * 4 + labels + 4 + self.metadata_json().len()
    }

    fn metadata_json(&self) -> String {
        Value::Object(self.metadata.clone()).to_string()
    }

    pub fn encode(&self) -> Vec<u8> {
        debug_assert_eq!(self.data.len(), self.rows * self.dim);
        let json = self.metadata_json();
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        let mut flags = 0u8;
        if self.labels.is_some() {
            flags |= FLAG_HAS_LABELS;
        }
        if self.normalized {
            flags |= FLAG_NORMALIZED;
        }
        out.push(flags);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(labels) = &self.labels {
            for l in labels {
                out.extend_from_slice(&l.to_le_bytes());
            }
        }
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(json.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            let found = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
            return Err(Error::BadMagic { expected: "FSF1", found });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::dims(format!("header truncated at {} bytes", bytes.len())));
        }
        let rows = u32_at(bytes, 4) as usize;
        let dim = u32_at(bytes, 8) as usize;
        let flags = bytes[12];
        let has_labels = flags & FLAG_HAS_LABELS != 0;

        let floats = rows
            .checked_mul(dim)
            .ok_or_else(|| Error::dims("rows*dim overflows"))?;
        let label_bytes = if has_labels { rows * 4 } else { 0 };
        let fixed = HEADER_LEN + floats * 4 + label_bytes;
        if bytes.len() < fixed + 4 {
            return Err(Error::dims(format!(
                "declared {rows}x{dim} needs at least {} bytes, file has {}",
                fixed + 4,
                bytes.len()
            )));
        }
        let json_len = u32_at(bytes, fixed) as usize;
        if bytes.len() != fixed + 4 + json_len {
            return Err(Error::dims(format!(
                "declared {rows}x{dim} with {json_len}-byte metadata needs {} bytes, file has {}",
                fixed + 4 + json_len,
                bytes.len()
            )));
        }

        let mut data = Vec::with_capacity(floats);
        for (k, chunk) in bytes[HEADER_LEN..HEADER_LEN + floats * 4].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite { row: k / dim, col: k % dim });
            }
            data.push(v);
        }
        let labels = has_labels.then(|| {
            bytes[HEADER_LEN + floats * 4..fixed]
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        });

        let json = std::str::from_utf8(&bytes[fixed + 4..])
            .map_err(|e| Error::Metadata(format!("metadata is not UTF-8: {e}")))?;
        let metadata = match serde_json::from_str::<Value>(json) {
            Ok(Value::Object(map)) => map,
            Ok(_) => return Err(Error::Metadata("metadata must be a JSON object".into())),
            Err(e) => return Err(Error::Metadata(e.to_string())),
        };
        match metadata.get("num_classes") {
            Some(v) if v.as_u64().is_some() => {}
            _ => return Err(Error::Metadata("missing integer key \"num_classes\"".into())),
        }

        Ok(FsfBlock {
            rows,
            dim,
            normalized: flags & FLAG_NORMALIZED != 0,
            data,
            labels,
            metadata,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.metadata["num_classes"].as_u64().unwrap_or(0) as usize
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}
