//! N-way / M-shot episode sampling.
//!
//! Draw order inside one episode, all from the episode's [`Xoshiro256`]
//! stream seeded with [`derive_seed`]:
//!
//! 1. eligible class ids (ascending) are partially shuffled and the first N
//!    kept; the kept ids are then sorted ascending;
//! 2. for each kept class in ascending order, that class's record indices
//!    (ascending) are partially shuffled and the first M become support;
//! 3. the query pool (ascending record indices) is partially shuffled and the
//!    first Q become queries. Stratified mode does the same per class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Xoshiro256};
use crate::store::EmbeddingDataset;

pub const DEFAULT_QUERY_COUNT: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub m_shot: usize,
    pub query_count: usize,
    pub episode_index: u64,
    pub base_seed: u64,
    /// Split the query budget evenly over the chosen classes instead of
    /// drawing from the pooled remainder.
    #[serde(default)]
    pub stratified_queries: bool,
    /// Cross-dataset only: classes with no query-side records stay
    /// selectable, so their prototypes compete without receiving queries.
    #[serde(default)]
    pub allow_query_absent_classes: bool,
}

impl EpisodeSpec {
    pub fn new(n_way: usize, m_shot: usize) -> Self {
        Self {
            n_way,
            m_shot,
            query_count: DEFAULT_QUERY_COUNT,
            episode_index: 0,
            base_seed: 0,
            stratified_queries: false,
            allow_query_absent_classes: false,
        }
    }

    pub fn with_queries(mut self, query_count: usize) -> Self {
        self.query_count = query_count;
        self
    }

    pub fn with_seed(mut self, base_seed: u64) -> Self {
        self.base_seed = base_seed;
        self
    }

    pub fn with_index(mut self, episode_index: u64) -> Self {
        self.episode_index = episode_index;
        self
    }

    fn check_shape(&self) -> Result<()> {
        if self.n_way < 2 {
            return Err(Error::InfeasibleSpec(format!(
                "n_way must be at least 2, got {}",
                self.n_way
            )));
        }
        if self.m_shot == 0 {
            return Err(Error::InfeasibleSpec("m_shot must be at least 1".into()));
        }
        if self.query_count == 0 {
            return Err(Error::InfeasibleSpec(
                "query_count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub index: usize,
    pub label: usize,
}

/// One sampled task. `support[k]` belongs to `class_ids[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub class_ids: Vec<usize>,
    pub support: Vec<Vec<usize>>,
    pub queries: Vec<Query>,
    pub spec: EpisodeSpec,
    pub seed: u64,
    /// Support and query indices refer to different datasets.
    pub cross: bool,
}

impl Episode {
    pub fn n_way(&self) -> usize {
        self.class_ids.len()
    }

    /// Position of `class_id` within [`Episode::class_ids`].
    pub fn position(&self, class_id: usize) -> Option<usize> {
        self.class_ids.binary_search(&class_id).ok()
    }
}

fn choose_classes(rng: &mut Xoshiro256, mut eligible: Vec<usize>, n_way: usize) -> Vec<usize> {
    rng.partial_shuffle(&mut eligible, n_way);
    eligible.truncate(n_way);
    eligible.sort_unstable();
    eligible
}

fn draw_support(
    rng: &mut Xoshiro256,
    by_class: &[Vec<usize>],
    classes: &[usize],
    m_shot: usize,
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut support = Vec::with_capacity(classes.len());
    let mut rest = Vec::with_capacity(classes.len());
    for &c in classes {
        let mut idx = by_class[c].clone();
        rng.partial_shuffle(&mut idx, m_shot);
        let mut remainder = idx.split_off(m_shot);
        remainder.sort_unstable();
        support.push(idx);
        rest.push(remainder);
    }
    (support, rest)
}

/// Query budget per class for stratified sampling; remainder goes to the
/// lowest class positions first. Classes with an empty pool get nothing.
fn stratified_shares(pools: &[Vec<usize>], total: usize) -> Vec<usize> {
    let active: Vec<usize> = (0..pools.len()).filter(|&k| !pools[k].is_empty()).collect();
    let mut shares = vec![0; pools.len()];
    if active.is_empty() {
        return shares;
    }
    let base = total / active.len();
    let extra = total % active.len();
    for (rank, &k) in active.iter().enumerate() {
        shares[k] = base + usize::from(rank < extra);
    }
    shares
}

fn stratified_fits(pools: &[Vec<usize>], total: usize) -> bool {
    stratified_shares(pools, total)
        .iter()
        .zip(pools)
        .all(|(&s, p)| s <= p.len())
        && pools.iter().any(|p| !p.is_empty())
}

fn draw_queries(
    rng: &mut Xoshiro256,
    pools: Vec<Vec<usize>>,
    labels: &[usize],
    spec: &EpisodeSpec,
    dataset_labels: &[u32],
) -> Result<Vec<Query>> {
    let q = spec.query_count;
    let to_query = |index: usize| Query {
        index,
        label: dataset_labels[index] as usize,
    };
    if spec.stratified_queries {
        if !stratified_fits(&pools, q) {
            let max_feasible = (0..q)
                .rev()
                .find(|&t| stratified_fits(&pools, t))
                .unwrap_or(0);
            return Err(Error::InfeasibleQuery {
                requested: q,
                max_feasible,
            });
        }
        let shares = stratified_shares(&pools, q);
        let mut out = Vec::with_capacity(q);
        for (mut pool, share) in pools.into_iter().zip(shares) {
            rng.partial_shuffle(&mut pool, share);
            out.extend(pool[..share].iter().map(|&i| to_query(i)));
        }
        debug_assert!(out.iter().all(|qr| labels.contains(&qr.label)));
        return Ok(out);
    }
    let mut pool: Vec<usize> = pools.into_iter().flatten().collect();
    pool.sort_unstable();
    if pool.len() < q {
        return Err(Error::InfeasibleQuery {
            requested: q,
            max_feasible: pool.len(),
        });
    }
    rng.partial_shuffle(&mut pool, q);
    Ok(pool[..q].iter().map(|&i| to_query(i)).collect())
}

/// Samples an in-domain episode: supports and queries come from `ds` and
/// never overlap.
pub fn sample_episode(ds: &EmbeddingDataset, spec: &EpisodeSpec) -> Result<Episode> {
    spec.check_shape()?;
    let by_class = ds.indices_by_class();
    let eligible: Vec<usize> = (0..ds.num_classes())
        .filter(|&c| by_class[c].len() > spec.m_shot)
        .collect();
    if eligible.len() < spec.n_way {
        return Err(Error::InfeasibleSpec(format!(
            "{}-way {}-shot needs {} classes with at least {} samples in {:?}; only {} qualify",
            spec.n_way,
            spec.m_shot,
            spec.n_way,
            spec.m_shot + 1,
            ds.dataset_name(),
            eligible.len()
        )));
    }

    let seed = derive_seed(spec.base_seed, spec.episode_index);
    let mut rng = Xoshiro256::from_seed(seed);
    let class_ids = choose_classes(&mut rng, eligible, spec.n_way);
    let (support, rest) = draw_support(&mut rng, &by_class, &class_ids, spec.m_shot);
    let queries = draw_queries(&mut rng, rest, &class_ids, spec, ds.labels())?;

    Ok(Episode {
        class_ids,
        support,
        queries,
        spec: spec.clone(),
        seed,
        cross: false,
    })
}

/// Samples prototypes from `support_ds` and queries from `query_ds`.
///
/// Both datasets must carry the same evaluation class list, as produced by
/// remapping them with one label mapping.
pub fn sample_cross_episode(
    support_ds: &EmbeddingDataset,
    query_ds: &EmbeddingDataset,
    spec: &EpisodeSpec,
) -> Result<Episode> {
    spec.check_shape()?;
    if support_ds.class_names() != query_ds.class_names() {
        let only_support: Vec<&String> = support_ds
            .class_names()
            .iter()
            .filter(|n| !query_ds.class_names().contains(n))
            .collect();
        let only_query: Vec<&String> = query_ds
            .class_names()
            .iter()
            .filter(|n| !support_ds.class_names().contains(n))
            .collect();
        return Err(Error::Protocol(format!(
            "support and query class lists differ (support only: {only_support:?}, query only: {only_query:?}, or order differs)"
        )));
    }
    let support_by_class = support_ds.indices_by_class();
    let query_by_class = query_ds.indices_by_class();
    let eligible: Vec<usize> = (0..support_ds.num_classes())
        .filter(|&c| support_by_class[c].len() >= spec.m_shot)
        .filter(|&c| spec.allow_query_absent_classes || !query_by_class[c].is_empty())
        .collect();
    if eligible.len() < spec.n_way {
        return Err(Error::InfeasibleSpec(format!(
            "{}-way {}-shot cross episode needs {} classes with {} support samples{}; only {} qualify",
            spec.n_way,
            spec.m_shot,
            spec.n_way,
            spec.m_shot,
            if spec.allow_query_absent_classes {
                ""
            } else {
                " and query coverage"
            },
            eligible.len()
        )));
    }

    let seed = derive_seed(spec.base_seed, spec.episode_index);
    let mut rng = Xoshiro256::from_seed(seed);
    let class_ids = choose_classes(&mut rng, eligible, spec.n_way);
    let (support, _) = draw_support(&mut rng, &support_by_class, &class_ids, spec.m_shot);
    let pools: Vec<Vec<usize>> = class_ids
        .iter()
        .map(|&c| query_by_class[c].clone())
        .collect();
    let queries = draw_queries(&mut rng, pools, &class_ids, spec, query_ds.labels())?;

    Ok(Episode {
        class_ids,
        support,
        queries,
        spec: spec.clone(),
        seed,
        cross: true,
    })
}
