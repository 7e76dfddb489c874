//! Nearest-centroid classification over transformed embeddings.
//!
//! Prototypes are the arithmetic means of transformed support vectors. For
//! CL2N the center is the mean of all raw support vectors of the episode;
//! queries never contribute to it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{euclidean_distance_sq, transform, transform_row, TransformMode};

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    class_ids: Vec<usize>,
    prototypes: Array2<f64>,
    mode: TransformMode,
    center: Option<Array1<f64>>,
}

impl PrototypeSet {
    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn prototypes(&self) -> ArrayView2<'_, f64> {
        self.prototypes.view()
    }

    pub fn mode(&self) -> TransformMode {
        self.mode
    }

    pub fn center(&self) -> Option<ArrayView1<'_, f64>> {
        self.center.as_ref().map(|c| c.view())
    }

    pub fn dim(&self) -> usize {
        self.prototypes.ncols()
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub query_index: usize,
    pub predicted: usize,
    /// Squared distances, aligned with [`PrototypeSet::class_ids`].
    pub distances_sq: Vec<f64>,
}

impl Prediction {
    /// Euclidean distance to the winning prototype.
    pub fn distance(&self, protos: &PrototypeSet) -> f64 {
        let k = protos
            .class_ids
            .iter()
            .position(|&c| c == self.predicted)
            .expect("prediction belongs to this prototype set");
        self.distances_sq[k].sqrt()
    }
}

/// Builds one prototype per class from `support[k]`, the raw support rows of
/// `class_ids[k]`.
pub fn compute_prototypes(
    class_ids: &[usize],
    support: &[Array2<f64>],
    mode: TransformMode,
) -> Result<PrototypeSet> {
    if class_ids.is_empty() || class_ids.len() != support.len() {
        return Err(Error::Protocol(format!(
            "{} class ids for {} support matrices",
            class_ids.len(),
            support.len()
        )));
    }
    let mut sorted = class_ids.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Protocol("duplicate class id in support set".into()));
    }
    let dim = support[0].ncols();
    for (k, m) in support.iter().enumerate() {
        if m.nrows() == 0 {
            return Err(Error::Protocol(format!(
                "class {} has no support vectors",
                class_ids[k]
            )));
        }
        if m.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: m.ncols(),
            });
        }
    }

    let center = match mode {
        TransformMode::Cl2n => {
            let mut sum = Array1::<f64>::zeros(dim);
            let mut rows = 0usize;
            for m in support {
                for r in m.axis_iter(Axis(0)) {
                    sum += &r;
                    rows += 1;
                }
            }
            Some(sum / rows as f64)
        }
        _ => None,
    };

    let mut prototypes = Array2::zeros((class_ids.len(), dim));
    let mut offset = 0;
    for (k, m) in support.iter().enumerate() {
        let transformed =
            transform(m.view(), mode, center.as_ref().map(|c| c.view())).map_err(|e| match e {
                Error::DegenerateVector { row } => Error::DegenerateVector { row: offset + row },
                other => other,
            })?;
        let mut acc = Array1::<f64>::zeros(dim);
        for r in transformed.axis_iter(Axis(0)) {
            acc += &r;
        }
        prototypes.row_mut(k).assign(&(acc / m.nrows() as f64));
        offset += m.nrows();
    }

    Ok(PrototypeSet {
        class_ids: class_ids.to_vec(),
        prototypes,
        mode,
        center,
    })
}

fn classify_row(
    query: ArrayView1<f64>,
    protos: &PrototypeSet,
    mode: TransformMode,
    query_index: usize,
) -> Result<Prediction> {
    if mode != protos.mode {
        return Err(Error::Protocol(format!(
            "query transform {mode} does not match prototype transform {}",
            protos.mode
        )));
    }
    if query.len() != protos.dim() {
        return Err(Error::Dimension {
            expected: protos.dim(),
            actual: query.len(),
        });
    }
    let q = transform_row(query, mode, protos.center(), query_index)?;
    let mut distances_sq = Vec::with_capacity(protos.len());
    let mut best: Option<(f64, usize)> = None;
    for (p, &class_id) in protos.prototypes.axis_iter(Axis(0)).zip(&protos.class_ids) {
        let d = euclidean_distance_sq(q.view(), p)?;
        distances_sq.push(d);
        best = match best {
            Some((bd, bc)) if bd < d || (bd == d && bc < class_id) => Some((bd, bc)),
            _ => Some((d, class_id)),
        };
    }
    let (_, predicted) = best.expect("prototype set is non-empty");
    Ok(Prediction {
        query_index,
        predicted,
        distances_sq,
    })
}

/// Assigns `query` to the nearest prototype; ties go to the smallest class id.
pub fn classify(
    query: ArrayView1<f64>,
    protos: &PrototypeSet,
    mode: TransformMode,
) -> Result<Prediction> {
    classify_row(query, protos, mode, 0)
}

/// [`classify`] over every row of `queries`; `query_index` is the row number.
pub fn classify_batch(
    queries: ArrayView2<f64>,
    protos: &PrototypeSet,
    mode: TransformMode,
) -> Result<Vec<Prediction>> {
    queries
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(i, q)| classify_row(q, protos, mode, i))
        .collect()
}
