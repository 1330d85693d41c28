//! PKM1 model container.
//!
//! ```text
//! 0..4    magic "PKM1"
//! 4       u8 kind (0 kernel model, 1 prototype model)
//! 5..9    u32 json_len, then the JSON header
//! ...     u32 block_count
//! ...     per block: u64 byte length, then one FSF v1 file
//! ```
//!
//! Kernel models hold blocks `support`, `gamma`, `text` and, for targets that
//! are not one-hot labels, `targets`. Prototype models hold `prototypes` and
//! `text`; the Fourier map is rebuilt from its parameters and checked against
//! the stored checksum.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use super::ProKeRModel;
use crate::error::{Error, Result};
use crate::featurestore::{row_major_f32, FsfBlock, TextClassifier};
use crate::kernels::{KernelSpec, OutputKernel};
use crate::spectral::{FourierMap, FourierMapParams, PrototypeModel};

pub const PKM_MAGIC: &[u8; 4] = b"PKM1";

const KIND_KERNEL: u8 = 0;
const KIND_PROTOTYPE: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Kernel(ProKeRModel),
    Prototype(PrototypeModel),
}

#[derive(Serialize, Deserialize)]
struct KernelHeader {
    kernel: KernelSpec,
    lambda: f64,
    jitter: f64,
    logit_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_kernel: Option<OutputKernel>,
    num_classes: usize,
}

#[derive(Serialize, Deserialize)]
struct PrototypeHeader {
    map: FourierMapParams,
    checksum: String,
    lambda: f64,
    logit_scale: f64,
    num_classes: usize,
}

fn matrix_block(m: &DMatrix<f64>, name: &str, labels: Option<Vec<i32>>, n: usize) -> FsfBlock {
    let mut metadata = Map::new();
    metadata.insert("num_classes".into(), json!(n));
    metadata.insert("block".into(), json!(name));
    FsfBlock {
        rows: m.nrows(),
        dim: m.ncols(),
        normalized: false,
        data: row_major_f32(m),
        labels,
        metadata,
    }
}

fn block_matrix(b: &FsfBlock) -> DMatrix<f64> {
    DMatrix::from_row_iterator(b.rows, b.dim, b.data.iter().map(|&v| v as f64))
}

/// Labels if `targets` is exactly one-hot.
fn one_hot_labels_of(targets: &DMatrix<f64>) -> Option<Vec<i32>> {
    targets
        .row_iter()
        .map(|r| {
            let ones: Vec<usize> = r
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(j, _)| j)
                .collect();
            let zeros = r.iter().filter(|&&v| v == 0.0).count();
            (ones.len() == 1 && zeros + 1 == r.len()).then(|| ones[0] as i32)
        })
        .collect()
}

impl ModelFile {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelFile::Kernel(_) => "kernel",
            ModelFile::Prototype(_) => "prototype",
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let (kind, header, blocks) = match self {
            ModelFile::Kernel(m) => {
                let n = m.num_classes();
                let header = serde_json::to_string(&KernelHeader {
                    kernel: m.kernel.clone(),
                    lambda: m.lambda,
                    jitter: m.jitter,
                    logit_scale: m.logit_scale,
                    output_kernel: m.output_kernel.clone(),
                    num_classes: n,
                })?;
                let labels = one_hot_labels_of(&m.targets);
                let dense = labels.is_none();
                let mut blocks = vec![
                    matrix_block(&m.support, "support", labels, n),
                    matrix_block(&m.gamma, "gamma", None, n),
                    m.text.to_block(),
                ];
                if dense {
                    blocks.push(matrix_block(&m.targets, "targets", None, n));
                }
                (KIND_KERNEL, header, blocks)
            }
            ModelFile::Prototype(p) => {
                let n = p.num_classes();
                let header = serde_json::to_string(&PrototypeHeader {
                    map: p.map.params().clone(),
                    checksum: p.map.checksum(),
                    lambda: p.lambda,
                    logit_scale: p.logit_scale,
                    num_classes: n,
                })?;
                let blocks = vec![
                    matrix_block(&p.prototypes, "prototypes", None, n),
                    p.text.to_block(),
                ];
                (KIND_PROTOTYPE, header, blocks)
            }
        };
        let mut out = Vec::new();
        out.extend_from_slice(PKM_MAGIC);
        out.push(kind);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for b in &blocks {
            let bytes = b.encode();
            out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != PKM_MAGIC {
            return Err(Error::BadMagic {
                expected: "PKM1",
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let kind = cur.take(1)?[0];
        let json_len = cur.u32()? as usize;
        let header = cur.take(json_len)?;
        let count = cur.u32()? as usize;
        let mut blocks = Vec::with_capacity(count.min(16));
        for _ in 0..count {
            let len = usize::try_from(cur.u64()?)
                .map_err(|_| Error::CorruptModel("block length overflows".into()))?;
            blocks.push(FsfBlock::decode(cur.take(len)?)?);
        }
        if cur.pos != bytes.len() {
            return Err(Error::CorruptModel(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        let find = |name: &str| -> Result<&FsfBlock> {
            blocks
                .iter()
                .find(|b| b.metadata.get("block").and_then(|v| v.as_str()) == Some(name))
                .ok_or_else(|| Error::CorruptModel(format!("missing block \"{name}\"")))
        };
        let text_block = blocks
            .iter()
            .find(|b| b.metadata.get("kind").and_then(|v| v.as_str()) == Some(TextClassifier::KIND))
            .ok_or_else(|| Error::CorruptModel("missing text classifier block".into()))?;
        let text = TextClassifier::from_block(text_block.clone())?;
        match kind {
            KIND_KERNEL => {
                let h: KernelHeader = serde_json::from_slice(header)?;
                let support_block = find("support")?;
                let support = block_matrix(support_block);
                let targets = match &support_block.labels {
                    Some(labels) => {
                        let mut t = DMatrix::zeros(labels.len(), h.num_classes);
                        for (i, &l) in labels.iter().enumerate() {
                            if l < 0 || l as usize >= h.num_classes {
                                return Err(Error::CorruptLabel {
                                    row: i,
                                    label: l as i64,
                                    num_classes: h.num_classes,
                                });
                            }
                            t[(i, l as usize)] = 1.0;
                        }
                        t
                    }
                    None => block_matrix(find("targets")?),
                };
                let gamma = block_matrix(find("gamma")?);
                if gamma.shape() != targets.shape() || targets.nrows() != support.nrows() {
                    return Err(Error::CorruptModel(format!(
                        "support {:?}, targets {:?}, gamma {:?} disagree",
                        support.shape(),
                        targets.shape(),
                        gamma.shape()
                    )));
                }
                h.kernel.validate()?;
                Ok(ModelFile::Kernel(ProKeRModel {
                    support,
                    targets,
                    gamma,
                    kernel: h.kernel,
                    text,
                    lambda: h.lambda,
                    jitter: h.jitter,
                    logit_scale: h.logit_scale,
                    output_kernel: h.output_kernel,
                }))
            }
            KIND_PROTOTYPE => {
                let h: PrototypeHeader = serde_json::from_slice(header)?;
                let map = FourierMap::from_params(&h.map)?;
                if map.checksum() != h.checksum {
                    return Err(Error::CorruptModel(
                        "fourier map checksum mismatch; file written by an incompatible build"
                            .into(),
                    ));
                }
                let prototypes = block_matrix(find("prototypes")?);
                if prototypes.shape() != (map.count(), h.num_classes) {
                    return Err(Error::CorruptModel(format!(
                        "prototypes {:?}, expected ({}, {})",
                        prototypes.shape(),
                        map.count(),
                        h.num_classes
                    )));
                }
                Ok(ModelFile::Prototype(PrototypeModel {
                    prototypes,
                    map,
                    text,
                    lambda: h.lambda,
                    logit_scale: h.logit_scale,
                }))
            }
            k => Err(Error::CorruptModel(format!("unknown model kind {k}"))),
        }
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
            .ok_or_else(|| Error::CorruptModel(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Header and block layout of a PKM1 file, for display.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub kind: &'static str,
    pub header: serde_json::Value,
    /// `(name, rows, dim, encoded bytes)` per block.
    pub blocks: Vec<(String, usize, usize, usize)>,
    pub total_bytes: usize,
}

pub fn inspect_model(bytes: &[u8]) -> Result<ModelSummary> {
    let model = ModelFile::decode(bytes)?;
    let mut cur = Cursor { bytes, pos: 5 };
    let json_len = cur.u32()? as usize;
    let header = serde_json::from_slice(cur.take(json_len)?)?;
    let count = cur.u32()? as usize;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let len = cur.u64()? as usize;
        let b = FsfBlock::decode(cur.take(len)?)?;
        let name = b
            .metadata
            .get("block")
            .or_else(|| b.metadata.get("kind"))
            .and_then(|v| v.as_str())
            .unwrap_or("unnamed")
            .to_owned();
        blocks.push((name, b.rows, b.dim, len));
    }
    Ok(ModelSummary {
        kind: model.kind_name(),
        header,
        blocks,
        total_bytes: bytes.len(),
    })
}

/// Write `model`, returning the number of bytes written.
pub fn save_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<usize> {
    let bytes = model.encode()?;
    fs::write(path, &bytes)?;
    Ok(bytes.len())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    ModelFile::decode(&fs::read(path)?)
}
