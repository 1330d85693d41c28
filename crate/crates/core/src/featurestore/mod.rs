//! Feature files, normalization, label encoding and few-shot task sampling.

mod fsf;
mod sampling;

use std::path::Path;

use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

pub use fsf::{FsfBlock, FLAG_HAS_LABELS, FLAG_NORMALIZED, HEADER_LEN, MAGIC as FSF_MAGIC};
pub use sampling::{sample_task, sample_task_with_validation, FewShotTask};

const UNIT_NORM_TOL: f64 = 1e-5;
const ZERO_NORM: f64 = 1e-12;

/// Round to the nearest f32, the on-disk precision.
#[inline]
pub(crate) fn to_f32_precision(v: f64) -> f64 {
    v as f32 as f64
}

/// Labelled feature vectors, one sample per row.
///
/// Values are held in f64 but always rounded to f32 precision, so a set
/// survives a save/load cycle unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    data: DMatrix<f64>,
    labels: Vec<u32>,
    num_classes: usize,
    normalized: bool,
    metadata: Map<String, Value>,
}

impl FeatureSet {
    pub fn new(mut data: DMatrix<f64>, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::dims(format!(
                "feature set must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if labels.len() != data.nrows() {
            return Err(Error::dims(format!(
                "{} labels for {} rows",
                labels.len(),
                data.nrows()
            )));
        }
        check_labels(labels.iter().map(|&l| l as i64), num_classes)?;
        for (col, column) in data.column_iter().enumerate() {
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
        }
        data.apply(|v| *v = to_f32_precision(*v));
        let normalized = data
            .row_iter()
            .all(|r| (r.norm() - 1.0).abs() <= UNIT_NORM_TOL);
        Ok(FeatureSet {
            data,
            labels,
            num_classes,
            normalized,
            metadata: Map::new(),
        })
    }

    /// Build from row vectors; convenient in tests and generators.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::dims("ragged rows"));
        }
        let data = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Self::new(data, labels, num_classes)
    }

    pub fn from_block(block: FsfBlock) -> Result<Self> {
        let num_classes = block.num_classes();
        let labels = block.labels.ok_or(Error::MissingLabels)?;
        if block.rows == 0 || block.dim == 0 {
            return Err(Error::dims(format!("empty feature set {}x{}", block.rows, block.dim)));
        }
        check_labels(labels.iter().map(|&l| l as i64), num_classes)?;
        let data = DMatrix::from_row_iterator(
            block.rows,
            block.dim,
            block.data.iter().map(|&v| v as f64),
        );
        if block.normalized {
            if let Some((row, n)) = data
                .row_iter()
                .map(|r| r.norm())
                .enumerate()
                .find(|(_, n)| (n - 1.0).abs() > UNIT_NORM_TOL)
            {
                return Err(Error::Metadata(format!(
                    "normalized flag set but row {row} has norm {n}"
                )));
            }
        }
        let mut metadata = block.metadata;
        metadata.remove("num_classes");
        Ok(FeatureSet {
            data,
            labels: labels.into_iter().map(|l| l as u32).collect(),
            num_classes,
            normalized: block.normalized,
            metadata,
        })
    }

    pub fn to_block(&self) -> FsfBlock {
        let mut metadata = self.metadata.clone();
        metadata.insert("num_classes".into(), json!(self.num_classes));
        FsfBlock {
            rows: self.rows(),
            dim: self.dim(),
            normalized: self.normalized,
            data: row_major_f32(&self.data),
            labels: Some(self.labels.iter().map(|&l| l as i32).collect()),
            metadata,
        }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Sample matrix, rows are samples.
    pub fn features(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn metadata(&self) -> &Map<String, Value> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: &str, value: Value) {
        if key != "num_classes" {
            self.metadata.insert(key.to_owned(), value);
        }
    }

    pub fn class_names(&self) -> Option<Vec<String>> {
        class_names_from(&self.metadata)
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::dims("cannot select zero rows"));
        }
        let data = self.data.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(FeatureSet {
            data,
            labels,
            num_classes: self.num_classes,
            normalized: self.normalized,
            metadata: self.metadata.clone(),
        })
    }

    /// Row indices grouped by class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l as usize].push(i);
        }
        by_class
    }
}

/// Frozen linear base predictor `x -> x W`, `W` is `dim x num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextClassifier {
    weights: DMatrix<f64>,
    class_names: Option<Vec<String>>,
}

impl TextClassifier {
    pub const KIND: &'static str = "text_classifier";

    pub fn new(mut weights: DMatrix<f64>, class_names: Option<Vec<String>>) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::dims("text classifier must be non-empty"));
        }
        if let Some(names) = &class_names {
            if names.len() != weights.ncols() {
                return Err(Error::dims(format!(
                    "{} class names for {} columns",
                    names.len(),
                    weights.ncols()
                )));
            }
        }
        for (col, column) in weights.column_iter().enumerate() {
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
        }
        weights.apply(|v| *v = to_f32_precision(*v));
        Ok(TextClassifier { weights, class_names })
    }

    pub fn from_block(block: FsfBlock) -> Result<Self> {
        match block.metadata.get("kind").and_then(Value::as_str) {
            Some(Self::KIND) => {}
            other => {
                return Err(Error::Metadata(format!(
                    "expected kind \"{}\", found {other:?}",
                    Self::KIND
                )))
            }
        }
        if block.num_classes() != block.dim {
            return Err(Error::dims(format!(
                "text classifier has {} columns but num_classes is {}",
                block.dim,
                block.num_classes()
            )));
        }
        let weights =
            DMatrix::from_row_iterator(block.rows, block.dim, block.data.iter().map(|&v| v as f64));
        Self::new(weights, class_names_from(&block.metadata))
    }

    pub fn to_block(&self) -> FsfBlock {
        let mut metadata = Map::new();
        metadata.insert("kind".into(), json!(Self::KIND));
        metadata.insert("num_classes".into(), json!(self.num_classes()));
        metadata.insert("column_norms".into(), json!(self.column_norms()));
        if let Some(names) = &self.class_names {
            metadata.insert("class_names".into(), json!(names));
        }
        FsfBlock {
            rows: self.dim(),
            dim: self.num_classes(),
            normalized: false,
            data: row_major_f32(&self.weights),
            labels: None,
            metadata,
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// L2 norm of each class prototype column. Files are kept as written;
    /// this is how callers find out whether the prototypes are unit-norm.
    pub fn column_norms(&self) -> Vec<f64> {
        self.weights.column_iter().map(|c| c.norm()).collect()
    }

    /// Base logits `queries * W`.
    pub fn logits(&self, queries: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if queries.ncols() != self.dim() {
            return Err(Error::dims(format!(
                "queries have dim {}, text classifier expects {}",
                queries.ncols(),
                self.dim()
            )));
        }
        Ok(queries * &self.weights)
    }
}

/// One-hot encoding of class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotLabels {
    pub matrix: DMatrix<f64>,
}

pub fn one_hot(fs: &FeatureSet) -> OneHotLabels {
    one_hot_labels(fs.labels(), fs.num_classes())
}

pub fn one_hot_labels(labels: &[u32], num_classes: usize) -> OneHotLabels {
    let mut matrix = DMatrix::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        matrix[(i, l as usize)] = 1.0;
    }
    OneHotLabels { matrix }
}

pub fn l2_normalize(fs: &FeatureSet) -> Result<FeatureSet> {
    let mut out = fs.clone();
    for (i, mut row) in out.data.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm < ZERO_NORM {
            return Err(Error::ZeroNormRow(i));
        }
        row.apply(|v| *v = to_f32_precision(*v / norm));
    }
    out.normalized = true;
    Ok(out)
}

pub fn load_featureset(path: impl AsRef<Path>) -> Result<FeatureSet> {
    FeatureSet::from_block(FsfBlock::read(path)?)
}

pub fn save_featureset(fs: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    fs.to_block().write(path)
}

pub fn load_text_classifier(path: impl AsRef<Path>) -> Result<TextClassifier> {
    TextClassifier::from_block(FsfBlock::read(path)?)
}

pub fn save_text_classifier(text: &TextClassifier, path: impl AsRef<Path>) -> Result<()> {
    text.to_block().write(path)
}

/// Load a feature file for use as support or query data: unnormalized files
/// are L2-normalized on the way in.
pub fn load_task_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let fs = load_featureset(path)?;
    if fs.is_normalized() {
        Ok(fs)
    } else {
        l2_normalize(&fs)
    }
}

fn check_labels(labels: impl Iterator<Item = i64>, num_classes: usize) -> Result<()> {
    for (row, label) in labels.enumerate() {
        if label < 0 || label as usize >= num_classes {
            return Err(Error::CorruptLabel { row, label, num_classes });
        }
    }
    Ok(())
}

fn class_names_from(metadata: &Map<String, Value>) -> Option<Vec<String>> {
    metadata.get("class_names")?.as_array().map(|names| {
        names
            .iter()
            .map(|n| n.as_str().unwrap_or_default().to_owned())
            .collect()
    })
}

pub(crate) fn row_major_f32(m: &DMatrix<f64>) -> Vec<f32> {
    let mut out = Vec::with_capacity(m.len());
    for row in m.row_iter() {
        out.extend(row.iter().map(|&v| v as f32));
    }
    out
}
