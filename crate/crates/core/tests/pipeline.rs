use fsbench_core::evaluation::{evaluate_episode, run_cell, CellData, CellSpec};
use fsbench_core::sampler::{sample_cross_episode, sample_episode, Episode, EpisodeSpec};
use fsbench_core::simpleshot::{classify_batch, compute_prototypes};
use fsbench_core::store::ExtractionInfo;
use fsbench_core::synthetic::{GaussianClusters, Layout};
use fsbench_core::{EmbeddingDataset, TransformMode};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-line reimplementation of prototype matching on plain vectors.
fn naive_predictions(ds: &EmbeddingDataset, ep: &Episode, mode: TransformMode) -> Vec<usize> {
    let widen = |i: usize| -> Vec<f64> { ds.row(i).iter().map(|&v| v as f64).collect() };
    let dim = ds.dim();
    let mut center = vec![0.0; dim];
    let mut support_rows = 0.0;
    for idx in &ep.support {
        for &i in idx {
            for (c, v) in center.iter_mut().zip(widen(i)) {
                *c += v;
            }
            support_rows += 1.0;
        }
    }
    for c in center.iter_mut() {
        *c /= support_rows;
    }
    let prep = |v: Vec<f64>| -> Vec<f64> {
        let v: Vec<f64> = match mode {
            TransformMode::Cl2n => v.iter().zip(&center).map(|(a, b)| a - b).collect(),
            _ => v,
        };
        if mode == TransformMode::Un {
            return v;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    };
    let protos: Vec<Vec<f64>> = ep
        .support
        .iter()
        .map(|idx| {
            let mut p = vec![0.0; dim];
            for &i in idx {
                for (a, b) in p.iter_mut().zip(prep(widen(i))) {
                    *a += b;
                }
            }
            p.iter().map(|x| x / idx.len() as f64).collect()
        })
        .collect();
    ep.queries
        .iter()
        .map(|q| {
            let v = prep(widen(q.index));
            let mut best = (f64::INFINITY, usize::MAX);
            for (k, p) in protos.iter().enumerate() {
                let d: f64 = v.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, ep.class_ids[k]);
                }
            }
            best.1
        })
        .collect()
}

fn matrix(ds: &EmbeddingDataset, idx: impl Iterator<Item = usize>) -> Array2<f64> {
    let rows: Vec<f64> = idx.flat_map(|i| ds.row_f64(i)).collect();
    Array2::from_shape_vec((rows.len() / ds.dim(), ds.dim()), rows).unwrap()
}

fn library_predictions(ds: &EmbeddingDataset, ep: &Episode, mode: TransformMode) -> Vec<usize> {
    let support: Vec<Array2<f64>> = ep
        .support
        .iter()
        .map(|idx| matrix(ds, idx.iter().copied()))
        .collect();
    let protos = compute_prototypes(&ep.class_ids, &support, mode).unwrap();
    let queries = matrix(ds, ep.queries.iter().map(|q| q.index));
    classify_batch(queries.view(), &protos, mode)
        .unwrap()
        .into_iter()
        .map(|p| p.predicted)
        .collect()
}

fn random_dataset(
    rng: &mut ChaCha8Rng,
    classes: usize,
    per_class: usize,
    dim: usize,
) -> EmbeddingDataset {
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    for c in 0..classes {
        for _ in 0..per_class {
            labels.push(c as u32);
            vectors.extend((0..dim).map(|_| rng.random_range(-1.0f32..1.0) + c as f32 * 0.1));
        }
    }
    EmbeddingDataset::new(
        "random",
        "none",
        dim,
        (0..classes).map(|c| format!("c{c}")).collect(),
        labels,
        vectors,
        ExtractionInfo::default(),
    )
    .unwrap()
}

#[test]
fn predictions_match_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let mut mismatches = 0;
    for e in 0..300u64 {
        let n_way = rng.random_range(2..=8);
        let m_shot = rng.random_range(1..=10);
        let dim = rng.random_range(1..=16);
        let ds = random_dataset(&mut rng, n_way + 1, m_shot + 8, dim);
        let q = rng.random_range(1..=(n_way * 8).min(50));
        let spec = EpisodeSpec::new(n_way, m_shot)
            .with_queries(q)
            .with_seed(e)
            .with_index(e);
        let ep = sample_episode(&ds, &spec).unwrap();
        let mode = TransformMode::ALL[e as usize % 3];
        let naive = naive_predictions(&ds, &ep, mode);
        let library = library_predictions(&ds, &ep, mode);
        mismatches += naive.iter().zip(&library).filter(|(a, b)| a != b).count();

        let result = evaluate_episode(&ep, &ds, &ds, mode).unwrap();
        let correct = ep
            .queries
            .iter()
            .zip(&naive)
            .filter(|(q, &p)| q.label == p)
            .count();
        assert_eq!(correct as f64 / q as f64, result.accuracy);
    }
    assert_eq!(mismatches, 0);
}

fn mean_accuracy(ds: &EmbeddingDataset, n: usize, m: usize, seed: u64) -> f64 {
    let mut cell = CellSpec::in_domain(ds.dataset_name(), "gaussian", n, m);
    cell.base_seed = seed;
    run_cell(CellData::InDomain(ds), &cell)
        .unwrap()
        .mean_accuracy
}

#[test]
fn separable_two_way_five_shot_is_near_perfect() {
    let ds = GaussianClusters::new(2, 100, 16, Layout::Separable)
        .with_seed(1)
        .generate()
        .unwrap();
    assert!(mean_accuracy(&ds, 2, 5, 7) >= 0.99);
}

#[test]
fn more_shots_never_hurt_on_simplex_clusters() {
    let ds = GaussianClusters::new(6, 60, 16, Layout::Simplex)
        .with_seed(2)
        .generate()
        .unwrap();
    for n in [2, 6] {
        let accs: Vec<f64> = [1, 5, 10]
            .iter()
            .map(|&m| mean_accuracy(&ds, n, m, 11))
            .collect();
        assert!(
            accs[0] <= accs[1] && accs[1] <= accs[2],
            "{n}-way: {accs:?}"
        );
    }
}

#[test]
fn more_ways_hurt_on_simplex_clusters() {
    let ds = GaussianClusters::new(6, 60, 16, Layout::Simplex)
        .with_seed(3)
        .generate()
        .unwrap();
    for m in [1, 5, 10] {
        assert!(mean_accuracy(&ds, 6, m, 5) <= mean_accuracy(&ds, 2, m, 5));
    }
}

#[test]
fn run_summary_serialization_is_reproducible() {
    let ds = GaussianClusters::new(4, 30, 8, Layout::Simplex)
        .with_seed(4)
        .generate()
        .unwrap();
    let mut cell = CellSpec::in_domain("s", "g", 3, 5);
    cell.base_seed = 42;
    cell.mode = TransformMode::Cl2n;
    let a = serde_json::to_vec(&run_cell(CellData::InDomain(&ds), &cell).unwrap()).unwrap();
    let b = serde_json::to_vec(&run_cell(CellData::InDomain(&ds), &cell).unwrap()).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let c = pool.install(|| {
        serde_json::to_vec(&run_cell(CellData::InDomain(&ds), &cell).unwrap()).unwrap()
    });
    assert_eq!(a, c);
}

#[test]
fn query_absent_prototypes_can_steal_predictions() {
    // support has six classes; queries only come from classes 0 and 1.
    // Class 2's prototype sits exactly on class 0's queries.
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    for c in 0..6u32 {
        for i in 0..12 {
            labels.push(c);
            let x = match c {
                0 => 4.0 + 0.01 * i as f32,
                1 => -5.0,
                2 => 5.0,
                _ => 50.0 * c as f32,
            };
            vectors.extend([x, 1.0]);
        }
    }
    let names: Vec<String> = (0..6).map(|c| format!("c{c}")).collect();
    let support = EmbeddingDataset::new(
        "s",
        "g",
        2,
        names.clone(),
        labels,
        vectors,
        ExtractionInfo::default(),
    )
    .unwrap();
    let q_labels: Vec<u32> = (0..20).map(|i| (i % 2) as u32).collect();
    let q_vectors: Vec<f32> = (0..20)
        .flat_map(|i| if i % 2 == 0 { [5.0, 1.0] } else { [-5.0, 1.0] })
        .collect();
    let query = EmbeddingDataset::new(
        "q",
        "g",
        2,
        names,
        q_labels,
        q_vectors,
        ExtractionInfo::default(),
    )
    .unwrap();

    let mut spec = EpisodeSpec::new(6, 10).with_queries(20);
    spec.allow_query_absent_classes = true;
    let ep = sample_cross_episode(&support, &query, &spec).unwrap();
    let r = evaluate_episode(&ep, &support, &query, TransformMode::Un).unwrap();
    assert_eq!(
        r.per_class[1],
        fsbench_core::evaluation::ClassTally {
            correct: 10,
            total: 10
        }
    );
    assert_eq!(r.confusion[0][2], 10);
    assert_eq!(r.accuracy, 0.5);
    assert_eq!(r.per_class[2].total, 0);
}
