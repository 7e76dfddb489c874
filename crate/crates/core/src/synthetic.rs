//! Gaussian class clusters for tests and smoke runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::store::{DatasetManifest, EmbeddingDataset, ExtractionInfo};

/// Placement of the class means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Means at `±(separation·σ/2)` per coordinate along Hadamard rows, so
    /// any two classes differ by `separation·σ` on every coordinate where
    /// their signs differ (all coordinates for two classes).
    Separable,
    /// Mean of class `c` is `(separation·σ/√2)·e_c`: every pair of means is
    /// exactly `separation·σ` apart.
    Simplex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClusters {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub sigma: f64,
    pub separation: f64,
    pub layout: Layout,
    pub seed: u64,
}

impl GaussianClusters {
    pub fn new(classes: usize, per_class: usize, dim: usize, layout: Layout) -> Self {
        Self {
            classes,
            per_class,
            dim,
            sigma: 1.0,
            separation: 3.0,
            layout,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_separation(mut self, separation: f64) -> Self {
        self.separation = separation;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn means(&self) -> Result<Vec<Vec<f64>>> {
        if self.classes == 0 || self.dim == 0 {
            return Err(Error::Domain(
                "need at least one class and one dimension".into(),
            ));
        }
        match self.layout {
            Layout::Separable => {
                let half = 0.5 * self.separation * self.sigma;
                if self.classes == 2 {
                    return Ok(vec![vec![-half; self.dim], vec![half; self.dim]]);
                }
                if !self.dim.is_power_of_two() || self.classes > self.dim {
                    return Err(Error::Domain(format!(
                        "separable layout with {} classes needs a power-of-two dim >= classes, got {}",
                        self.classes, self.dim
                    )));
                }
                Ok((0..self.classes)
                    .map(|c| {
                        (0..self.dim)
                            .map(|d| {
                                if (c & d).count_ones() % 2 == 0 {
                                    half
                                } else {
                                    -half
                                }
                            })
                            .collect()
                    })
                    .collect())
            }
            Layout::Simplex => {
                if self.classes > self.dim {
                    return Err(Error::Domain(format!(
                        "simplex layout needs dim >= classes ({} > {})",
                        self.classes, self.dim
                    )));
                }
                let scale = self.separation * self.sigma / 2f64.sqrt();
                Ok((0..self.classes)
                    .map(|c| {
                        (0..self.dim)
                            .map(|d| if d == c { scale } else { 0.0 })
                            .collect()
                    })
                    .collect())
            }
        }
    }

    /// Records are grouped by class, `per_class` each.
    pub fn generate(&self) -> Result<EmbeddingDataset> {
        let names = (0..self.classes).map(|c| format!("class{c}")).collect();
        let counts = vec![self.per_class; self.classes];
        self.sample(
            format!("synthetic-{}", self.classes),
            "gaussian",
            names,
            &counts,
        )
    }

    fn sample(
        &self,
        dataset: String,
        backbone: &str,
        names: Vec<String>,
        counts: &[usize],
    ) -> Result<EmbeddingDataset> {
        let means = self.means()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let total: usize = counts.iter().sum();
        let mut labels = Vec::with_capacity(total);
        let mut vectors = Vec::with_capacity(total * self.dim);
        for (c, (mean, &n)) in means.iter().zip(counts).enumerate() {
            for _ in 0..n {
                labels.push(c as u32);
                for &mu in mean {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    vectors.push((mu + self.sigma * z) as f32);
                }
            }
        }
        EmbeddingDataset::new(
            dataset,
            backbone,
            self.dim,
            names,
            labels,
            vectors,
            ExtractionInfo::default(),
        )
    }
}

/// A stand-in with the class names and per-class counts of `manifest`,
/// drawn from this cluster family (`classes` and `per_class` are ignored).
pub fn shaped_like(
    manifest: &DatasetManifest,
    backbone: &str,
    clusters: &GaussianClusters,
) -> Result<EmbeddingDataset> {
    let shape = GaussianClusters {
        classes: manifest.classes.len(),
        ..clusters.clone()
    };
    shape.sample(
        manifest.dataset.clone(),
        backbone,
        manifest.class_names(),
        &manifest.counts(),
    )
}
