//! Labeled embedding datasets and their on-disk representation.
//!
//! An [`EmbeddingDataset`] is immutable once constructed: every constructor
//! goes through [`EmbeddingDataset::new`], which checks all invariants, so a
//! value of this type is always valid and can be shared freely between
//! episode workers.

mod format;
mod manifest;

pub use format::{
    decode, encode, export_csv, load, read_dataset, save, write_dataset, FORMAT_VERSION, MAGIC,
};
pub use manifest::{ClassCount, DatasetManifest};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::LabelMapping;

pub const DEFAULT_IMAGE_SIZE: u32 = 128;

/// Settings recorded by the extractor that produced the vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionInfo {
    pub image_size: u32,
    /// Preprocessing recipe identifier.
    pub preprocess: String,
}

impl Default for ExtractionInfo {
    fn default() -> Self {
        Self {
            image_size: DEFAULT_IMAGE_SIZE,
            preprocess: "resize-only".to_string(),
        }
    }
}

/// Per-image pooled feature vectors with class labels.
///
/// Vectors are stored row-major as `f32`, one row of length `dim` per record,
/// in extraction order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    dataset_name: String,
    backbone_name: String,
    dim: usize,
    class_names: Vec<String>,
    labels: Vec<u32>,
    vectors: Vec<f32>,
    extraction: ExtractionInfo,
}

impl EmbeddingDataset {
    pub fn new(
        dataset_name: impl Into<String>,
        backbone_name: impl Into<String>,
        dim: usize,
        class_names: Vec<String>,
        labels: Vec<u32>,
        vectors: Vec<f32>,
        extraction: ExtractionInfo,
    ) -> Result<Self> {
        let ds = Self {
            dataset_name: dataset_name.into(),
            backbone_name: backbone_name.into(),
            dim,
            class_names,
            labels,
            vectors,
            extraction,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("dim must be at least 1".into()));
        }
        if self.labels.is_empty() {
            return Err(Error::Validation(
                "dataset must hold at least one record".into(),
            ));
        }
        let expected = self
            .labels
            .len()
            .checked_mul(self.dim)
            .ok_or_else(|| Error::Validation("count * dim overflows".into()))?;
        if self.vectors.len() != expected {
            return Err(Error::Validation(format!(
                "vector buffer holds {} values, expected {} rows x {} dims = {}",
                self.vectors.len(),
                self.labels.len(),
                self.dim,
                expected
            )));
        }
        if self.class_names.is_empty() {
            return Err(Error::Validation("class list is empty".into()));
        }
        let mut seen = HashSet::new();
        for name in &self.class_names {
            if name.trim().is_empty() {
                return Err(Error::Validation("class names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Validation(format!("duplicate class name {name:?}")));
            }
        }
        let n_classes = self.class_names.len();
        if let Some((i, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= n_classes)
        {
            return Err(Error::Validation(format!(
                "record {i} has label {l}, but only {n_classes} classes are declared"
            )));
        }
        if let Some(pos) = self.vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value in record {} (component {})",
                pos / self.dim,
                pos % self.dim
            )));
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> &str {
        &self.dataset_name
    }

    pub fn backbone_name(&self) -> &str {
        &self.backbone_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index] as usize
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn extraction(&self) -> &ExtractionInfo {
        &self.extraction
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    /// Row widened to `f64` for evaluation arithmetic.
    pub fn row_f64(&self, index: usize) -> Vec<f64> {
        self.row(index).iter().map(|&v| v as f64).collect()
    }

    /// Record indices per class, each list in ascending (extraction) order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            dataset: self.dataset_name.clone(),
            classes: self
                .class_names
                .iter()
                .zip(self.class_counts())
                .map(|(name, count)| ClassCount {
                    name: name.clone(),
                    count,
                })
                .collect(),
            image_size: self.extraction.image_size,
            preprocess: self.extraction.preprocess.clone(),
        }
    }

    /// Keeps records whose class maps to an evaluation class and renumbers
    /// labels against `mapping`'s evaluation class list.
    ///
    /// Retained records keep their relative order and their vectors bitwise.
    pub fn remap_labels(&self, mapping: &LabelMapping) -> Result<EmbeddingDataset> {
        let targets = mapping.resolve(&self.dataset_name, &self.class_names)?;
        let mut labels = Vec::new();
        let mut vectors = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if let Some(target) = targets[l as usize] {
                labels.push(target as u32);
                vectors.extend_from_slice(self.row(i));
            }
        }
        if labels.is_empty() {
            return Err(Error::EmptyResult(format!(
                "no records of {:?} survive the label mapping",
                self.dataset_name
            )));
        }
        EmbeddingDataset::new(
            self.dataset_name.clone(),
            self.backbone_name.clone(),
            self.dim,
            mapping.eval_classes().to_vec(),
            labels,
            vectors,
            self.extraction.clone(),
        )
    }
}
