//! Pooling, embedding transforms and distances.
//!
//! All arithmetic is `f64`; stored `f32` embeddings are widened on the way in.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One image's final convolutional feature maps, `channels x height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Validation(format!(
                "feature map shape {channels}x{height}x{width} has an empty axis"
            )));
        }
        let expected = channels * height * width;
        if values.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Global average pooling: one spatial mean per channel.
pub fn adaptive_avg_pool(fm: &FeatureMap) -> Result<Vec<f64>> {
    if let Some(pos) = fm.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "non-finite feature value in channel {}",
            pos / (fm.height * fm.width)
        )));
    }
    let cells = (fm.height * fm.width) as f64;
    Ok(fm
        .values
        .chunks_exact(fm.height * fm.width)
        .map(|plane| plane.iter().sum::<f64>() / cells)
        .collect())
}

/// Embedding transform applied before prototype matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformMode {
    /// Raw embeddings.
    Un,
    /// Unit-length rows.
    L2n,
    /// Subtract a center, then unit-length rows.
    Cl2n,
}

impl TransformMode {
    pub const ALL: [TransformMode; 3] =
        [TransformMode::Un, TransformMode::L2n, TransformMode::Cl2n];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformMode::Un => "un",
            TransformMode::L2n => "l2n",
            TransformMode::Cl2n => "cl2n",
        }
    }
}

impl fmt::Display for TransformMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "un" => Ok(TransformMode::Un),
            "l2n" => Ok(TransformMode::L2n),
            "cl2n" => Ok(TransformMode::Cl2n),
            other => Err(Error::Domain(format!(
                "unknown transform {other:?}, expected un, l2n or cl2n"
            ))),
        }
    }
}

pub fn l2_norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Applies `mode` to a single row; `row` is only used in error messages.
pub fn transform_row(
    v: ArrayView1<f64>,
    mode: TransformMode,
    center: Option<ArrayView1<f64>>,
    row: usize,
) -> Result<Array1<f64>> {
    let shifted = match mode {
        TransformMode::Un => return Ok(v.to_owned()),
        TransformMode::L2n => v.to_owned(),
        TransformMode::Cl2n => {
            let c = center
                .ok_or_else(|| Error::Protocol("CL2N transform requires a center vector".into()))?;
            if c.len() != v.len() {
                return Err(Error::Dimension {
                    expected: v.len(),
                    actual: c.len(),
                });
            }
            &v - &c
        }
    };
    let norm = l2_norm(shifted.view());
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateVector { row });
    }
    Ok(shifted / norm)
}

/// Row-wise transform of a matrix. The input is never modified.
pub fn transform(
    vectors: ArrayView2<f64>,
    mode: TransformMode,
    center: Option<ArrayView1<f64>>,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(vectors.raw_dim());
    for (i, (src, mut dst)) in vectors
        .axis_iter(Axis(0))
        .zip(out.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        dst.assign(&transform_row(src, mode, center, i)?);
    }
    Ok(out)
}

pub fn euclidean_distance_sq(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum())
}
