//! Episode grids, accuracy intervals, per-class accuracy and confusion.

use std::time::{Duration, Instant};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{
    sample_cross_episode, sample_episode, Episode, EpisodeSpec, DEFAULT_QUERY_COUNT,
};
use crate::simpleshot::{classify_batch, compute_prototypes};
use crate::stats::{mean_confidence_interval, ConfidenceInterval, DEFAULT_LEVEL};
use crate::store::EmbeddingDataset;
use crate::tensor::TransformMode;

pub const DEFAULT_EPISODES: usize = 100;
pub const DEFAULT_MODE: TransformMode = TransformMode::L2n;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub correct: u64,
    pub total: u64,
}

/// Outcome of one episode. Rows of `confusion` are true classes, columns are
/// predictions, both indexed like `class_ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_index: u64,
    pub accuracy: f64,
    pub class_ids: Vec<usize>,
    pub per_class: Vec<ClassTally>,
    pub confusion: Vec<Vec<u64>>,
}

impl EpisodeResult {
    pub fn query_count(&self) -> u64 {
        self.per_class.iter().map(|t| t.total).sum()
    }

    /// Re-indexes onto class ids `0..num_classes`.
    pub fn lift(&self, num_classes: usize) -> Result<EpisodeResult> {
        if let Some(&c) = self.class_ids.iter().find(|&&c| c >= num_classes) {
            return Err(Error::Protocol(format!(
                "class id {c} outside {num_classes} classes"
            )));
        }
        let mut per_class = vec![ClassTally::default(); num_classes];
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for (i, &ci) in self.class_ids.iter().enumerate() {
            per_class[ci] = self.per_class[i];
            for (j, &cj) in self.class_ids.iter().enumerate() {
                confusion[ci][cj] = self.confusion[i][j];
            }
        }
        Ok(EpisodeResult {
            episode_index: self.episode_index,
            accuracy: self.accuracy,
            class_ids: (0..num_classes).collect(),
            per_class,
            confusion,
        })
    }
}

fn gather(ds: &EmbeddingDataset, indices: impl ExactSizeIterator<Item = usize>) -> Array2<f64> {
    let dim = ds.dim();
    let rows = indices.len();
    let mut out = Array2::zeros((rows, dim));
    for (r, i) in indices.enumerate() {
        for (dst, &src) in out.row_mut(r).iter_mut().zip(ds.row(i)) {
            *dst = src as f64;
        }
    }
    out
}

/// Classifies the queries of `episode` against prototypes built from its
/// support. For in-domain episodes pass the same dataset twice.
pub fn evaluate_episode(
    episode: &Episode,
    support_ds: &EmbeddingDataset,
    query_ds: &EmbeddingDataset,
    mode: TransformMode,
) -> Result<EpisodeResult> {
    if support_ds.dim() != query_ds.dim() {
        return Err(Error::Dimension {
            expected: support_ds.dim(),
            actual: query_ds.dim(),
        });
    }
    let support: Vec<Array2<f64>> = episode
        .support
        .iter()
        .map(|idx| gather(support_ds, idx.iter().copied()))
        .collect();
    let protos = compute_prototypes(&episode.class_ids, &support, mode)?;
    let queries = gather(query_ds, episode.queries.iter().map(|q| q.index));
    let predictions = classify_batch(queries.view(), &protos, mode)?;

    let n = episode.n_way();
    let mut per_class = vec![ClassTally::default(); n];
    let mut confusion = vec![vec![0u64; n]; n];
    let mut correct = 0u64;
    for (q, pred) in episode.queries.iter().zip(&predictions) {
        let truth = episode.position(q.label).ok_or_else(|| {
            Error::Protocol(format!("query label {} is not an episode class", q.label))
        })?;
        let guess = episode
            .position(pred.predicted)
            .expect("predictions come from the episode's prototypes");
        confusion[truth][guess] += 1;
        per_class[truth].total += 1;
        if truth == guess {
            per_class[truth].correct += 1;
            correct += 1;
        }
    }
    Ok(EpisodeResult {
        episode_index: episode.spec.episode_index,
        accuracy: correct as f64 / episode.queries.len() as f64,
        class_ids: episode.class_ids.clone(),
        per_class,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class_id: usize,
    /// Episodes in which the class received at least one query.
    pub observed: usize,
    pub mean: Option<f64>,
    pub interval: Option<ConfidenceInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub class_ids: Vec<usize>,
    pub pooled: Vec<Vec<u64>>,
    pub per_class: Vec<ClassAccuracy>,
}

/// Sums confusion matrices and summarizes per-class accuracy. A class's
/// accuracy only counts episodes where it drew queries.
pub fn aggregate_confusion(results: &[EpisodeResult], level: f64) -> Result<ConfusionSummary> {
    let first = results
        .first()
        .ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    let class_ids = first.class_ids.clone();
    let n = class_ids.len();
    let mut pooled = vec![vec![0u64; n]; n];
    let mut observations: Vec<Vec<f64>> = vec![Vec::new(); n];
    for r in results {
        if r.class_ids != class_ids {
            return Err(Error::Protocol(format!(
                "episode {} has class ids {:?}, expected {:?}",
                r.episode_index, r.class_ids, class_ids
            )));
        }
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                pooled[i][j] += v;
            }
        }
        for (k, t) in r.per_class.iter().enumerate() {
            if t.total > 0 {
                observations[k].push(t.correct as f64 / t.total as f64);
            }
        }
    }
    let per_class = class_ids
        .iter()
        .zip(&observations)
        .map(|(&class_id, obs)| {
            let mean = (!obs.is_empty()).then(|| obs.iter().sum::<f64>() / obs.len() as f64);
            let interval = if obs.len() >= 2 {
                Some(mean_confidence_interval(obs, level)?)
            } else {
                None
            };
            Ok(ClassAccuracy {
                class_id,
                observed: obs.len(),
                mean,
                interval,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfusionSummary {
        class_ids,
        pooled,
        per_class,
    })
}

/// One grid cell: which data, which episode shape, which transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    #[serde(default)]
    pub protocol: Option<String>,
    pub support_dataset: String,
    pub query_dataset: String,
    pub backbone: String,
    pub n_way: usize,
    pub m_shot: usize,
    pub query_count: usize,
    pub episodes: usize,
    pub mode: TransformMode,
    pub base_seed: u64,
    pub level: f64,
    #[serde(default)]
    pub stratified_queries: bool,
    #[serde(default)]
    pub allow_query_absent_classes: bool,
}

impl CellSpec {
    /// In-domain cell with the default query count, episode count, mode and
    /// level.
    pub fn in_domain(dataset: &str, backbone: &str, n_way: usize, m_shot: usize) -> Self {
        Self {
            protocol: None,
            support_dataset: dataset.to_string(),
            query_dataset: dataset.to_string(),
            backbone: backbone.to_string(),
            n_way,
            m_shot,
            query_count: DEFAULT_QUERY_COUNT,
            episodes: DEFAULT_EPISODES,
            mode: DEFAULT_MODE,
            base_seed: 0,
            level: DEFAULT_LEVEL,
            stratified_queries: false,
            allow_query_absent_classes: false,
        }
    }

    pub fn episode_spec(&self, episode_index: u64) -> EpisodeSpec {
        EpisodeSpec {
            n_way: self.n_way,
            m_shot: self.m_shot,
            query_count: self.query_count,
            episode_index,
            base_seed: self.base_seed,
            stratified_queries: self.stratified_queries,
            allow_query_absent_classes: self.allow_query_absent_classes,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CellData<'a> {
    InDomain(&'a EmbeddingDataset),
    Cross {
        support: &'a EmbeddingDataset,
        query: &'a EmbeddingDataset,
    },
}

impl<'a> CellData<'a> {
    pub fn support(&self) -> &'a EmbeddingDataset {
        match *self {
            CellData::InDomain(ds) => ds,
            CellData::Cross { support, .. } => support,
        }
    }

    pub fn query(&self) -> &'a EmbeddingDataset {
        match *self {
            CellData::InDomain(ds) => ds,
            CellData::Cross { query, .. } => query,
        }
    }

    pub fn sample(&self, spec: &EpisodeSpec) -> Result<Episode> {
        match *self {
            CellData::InDomain(ds) => sample_episode(ds, spec),
            CellData::Cross { support, query } => sample_cross_episode(support, query, spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub cell: CellSpec,
    pub class_names: Vec<String>,
    pub mean_accuracy: f64,
    /// `None` for single-episode cells.
    pub interval: Option<ConfidenceInterval>,
    pub episode_accuracies: Vec<f64>,
    pub confusion: ConfusionSummary,
    /// Wall-clock time; kept out of serialized output so reruns compare equal.
    #[serde(skip)]
    pub duration: Duration,
}

impl RunSummary {
    /// `0.624±0.006`, or the bare mean when no interval exists.
    pub fn display(&self) -> String {
        match &self.interval {
            Some(ci) => ci.display(),
            None => format!("{:.3}", self.mean_accuracy),
        }
    }
}

pub fn run_episode(
    data: CellData<'_>,
    cell: &CellSpec,
    episode_index: u64,
) -> Result<EpisodeResult> {
    let episode = data.sample(&cell.episode_spec(episode_index))?;
    evaluate_episode(&episode, data.support(), data.query(), cell.mode)
}

/// Runs `cell.episodes` episodes (indices `0..episodes`) and aggregates them.
///
/// Episodes run in parallel but are folded in index order; the first failing
/// episode index is attached to the error.
pub fn run_cell(data: CellData<'_>, cell: &CellSpec) -> Result<RunSummary> {
    if cell.episodes == 0 {
        return Err(Error::InfeasibleSpec("episodes must be at least 1".into()));
    }
    let started = Instant::now();
    let num_classes = data.support().num_classes();
    let outcomes: Vec<Result<EpisodeResult>> = (0..cell.episodes as u64)
        .into_par_iter()
        .map(|i| run_episode(data, cell, i).and_then(|r| r.lift(num_classes)))
        .collect();
    let mut results = Vec::with_capacity(outcomes.len());
    for (i, outcome) in outcomes.into_iter().enumerate() {
        results.push(outcome.map_err(|e| Error::Episode {
            index: i,
            source: Box::new(e),
        })?);
    }

    let episode_accuracies: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let mean_accuracy = episode_accuracies.iter().sum::<f64>() / episode_accuracies.len() as f64;
    let interval = if episode_accuracies.len() >= 2 {
        Some(mean_confidence_interval(&episode_accuracies, cell.level)?)
    } else {
        None
    };
    let confusion = aggregate_confusion(&results, cell.level)?;
    Ok(RunSummary {
        cell: cell.clone(),
        class_names: data.support().class_names().to_vec(),
        mean_accuracy,
        interval,
        episode_accuracies,
        confusion,
        duration: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::ExtractionInfo;

    fn two_point_dataset() -> EmbeddingDataset {
        // class 0 near (-10, -10), class 1 near (10, 10)
        let mut labels = Vec::new();
        let mut vectors = Vec::new();
        for i in 0..20 {
            let c = i % 2;
            let sign = if c == 0 { -10.0 } else { 10.0 };
            labels.push(c as u32);
            vectors.extend([sign + 0.01 * i as f32, sign - 0.01 * i as f32]);
        }
        EmbeddingDataset::new(
            "toy",
            "none",
            2,
            vec!["a".into(), "b".into()],
            labels,
            vectors,
            ExtractionInfo::default(),
        )
        .unwrap()
    }

    fn cell(n: usize, m: usize, q: usize, episodes: usize, mode: TransformMode) -> CellSpec {
        let mut c = CellSpec::in_domain("toy", "none", n, m);
        c.query_count = q;
        c.episodes = episodes;
        c.mode = mode;
        c
    }

    #[test]
    fn separable_clusters_are_perfect() {
        let ds = two_point_dataset();
        for mode in TransformMode::ALL {
            let s = run_cell(CellData::InDomain(&ds), &cell(2, 3, 10, 20, mode)).unwrap();
            assert_eq!(s.mean_accuracy, 1.0);
            assert_eq!(s.interval.unwrap().half_width, 0.0);
            for pc in &s.confusion.per_class {
                assert_eq!(pc.mean, Some(1.0));
            }
            let pooled = &s.confusion.pooled;
            assert_eq!(pooled[0][1] + pooled[1][0], 0);
            assert_eq!(pooled[0][0] + pooled[1][1], 200);
        }
    }

    #[test]
    fn swapped_prototypes_score_zero() {
        let ds = two_point_dataset();
        let episode = sample_episode(&ds, &EpisodeSpec::new(2, 2).with_queries(8)).unwrap();
        let mut adversarial = episode.clone();
        adversarial.support.swap(0, 1);
        let r = evaluate_episode(&adversarial, &ds, &ds, TransformMode::Un).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.confusion[0][0] + r.confusion[1][1], 0);
    }

    #[test]
    fn result_invariants() {
        let ds = two_point_dataset();
        let r = run_episode(
            CellData::InDomain(&ds),
            &cell(2, 1, 12, 1, TransformMode::L2n),
            0,
        )
        .unwrap();
        let trace: u64 = (0..2).map(|k| r.confusion[k][k]).sum();
        let total: u64 = r.confusion.iter().flatten().sum();
        assert_eq!(r.accuracy, trace as f64 / total as f64);
        assert_eq!(r.query_count(), 12);
    }

    #[test]
    fn aggregate_is_additive() {
        let a = EpisodeResult {
            episode_index: 0,
            accuracy: 0.5,
            class_ids: vec![0, 1],
            per_class: vec![
                ClassTally {
                    correct: 1,
                    total: 2,
                },
                ClassTally {
                    correct: 1,
                    total: 2,
                },
            ],
            confusion: vec![vec![1, 1], vec![1, 1]],
        };
        let b = EpisodeResult {
            episode_index: 1,
            accuracy: 1.0,
            class_ids: vec![0, 1],
            per_class: vec![
                ClassTally {
                    correct: 3,
                    total: 3,
                },
                ClassTally {
                    correct: 0,
                    total: 0,
                },
            ],
            confusion: vec![vec![3, 0], vec![0, 0]],
        };
        let one = aggregate_confusion(std::slice::from_ref(&a), 0.95).unwrap();
        assert_eq!(one.pooled, a.confusion);
        let both = aggregate_confusion(&[a.clone(), b.clone()], 0.95).unwrap();
        assert_eq!(both.pooled, vec![vec![4, 1], vec![1, 1]]);
        assert_eq!(both.per_class[0].observed, 2);
        assert_eq!(both.per_class[0].mean, Some(0.75));
        // class 1 drew no queries in episode 1: missing, not zero
        assert_eq!(both.per_class[1].observed, 1);
        assert_eq!(both.per_class[1].mean, Some(0.5));
        assert!(both.per_class[1].interval.is_none());

        let mut c = b;
        c.class_ids = vec![0, 2];
        assert!(matches!(
            aggregate_confusion(&[a, c], 0.95),
            Err(Error::Protocol(_))
        ));
        assert!(aggregate_confusion(&[], 0.95).is_err());
    }

    #[test]
    fn lift_places_rows_by_class_id() {
        let r = EpisodeResult {
            episode_index: 0,
            accuracy: 0.5,
            class_ids: vec![1, 3],
            per_class: vec![
                ClassTally {
                    correct: 1,
                    total: 1,
                },
                ClassTally {
                    correct: 0,
                    total: 1,
                },
            ],
            confusion: vec![vec![1, 0], vec![1, 0]],
        };
        let l = r.lift(4).unwrap();
        assert_eq!(l.confusion[1][1], 1);
        assert_eq!(l.confusion[3][1], 1);
        assert_eq!(l.per_class[0].total, 0);
        assert!(r.lift(3).is_err());
    }

    #[test]
    fn failing_episode_reports_index() {
        let ds = two_point_dataset();
        let err = run_cell(
            CellData::InDomain(&ds),
            &cell(2, 5, 100, 3, TransformMode::Un),
        )
        .unwrap_err();
        match err {
            Error::Episode { index, source } => {
                assert_eq!(index, 0usize);
                assert!(matches!(*source, Error::InfeasibleQuery { .. }));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn single_episode_has_no_interval() {
        let ds = two_point_dataset();
        let s = run_cell(
            CellData::InDomain(&ds),
            &cell(2, 1, 4, 1, TransformMode::L2n),
        )
        .unwrap();
        assert!(s.interval.is_none());
        assert_eq!(s.display(), "1.000");
    }
}
