//! Library entry points behind each subcommand.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fsbench_core::protocols::{
    builtin_protocol, canonical_dataset_name, same_dataset, validate_mapping, ClassInventory,
    ProtocolGrid, ProtocolKind,
};
use fsbench_core::report::{
    cell_file_stem, cells_csv, table1_csv, table3_csv, CellReport, Provenance, Table3Row,
};
use fsbench_core::stats::DEFAULT_LEVEL;
use fsbench_core::store::{export_csv, load, save, DatasetManifest};
use fsbench_core::synthetic::{shaped_like, GaussianClusters, Layout};
use fsbench_core::{
    run_cell, CellData, CellSpec, EmbeddingDataset, Error, RunSummary, TransformMode,
};

use crate::config::{config_hash, load_embeddings, LoadedSet, RunConfig, DEFAULT_SHOTS};
use crate::error::{CliError, CliResult};
use crate::output::{remove_stale, write_atomic};

pub const CELLS_DIR: &str = "cells";

/// Files written by a command, in write order.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub written: Vec<PathBuf>,
    pub config_hash: String,
    pub base_seed: u64,
}

impl Outcome {
    fn write(&mut self, path: PathBuf, contents: &[u8]) -> CliResult<()> {
        write_atomic(&path, contents)?;
        self.written.push(path);
        Ok(())
    }
}

/// Contents of a `.failed` marker.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedCell {
    pub provenance: Provenance,
    pub cell: CellSpec,
    pub error: String,
}

struct RowLabel {
    setting: String,
    support: String,
    query: String,
}

struct PlannedCell<'a> {
    spec: CellSpec,
    data: CellData<'a>,
    row: Option<RowLabel>,
}

fn apply_grid(spec: &mut CellSpec, config: &RunConfig, mode: TransformMode, base_seed: u64) {
    let g = &config.grid;
    if let Some(q) = g.queries {
        spec.query_count = q;
    }
    if let Some(e) = g.episodes {
        spec.episodes = e;
    }
    spec.level = g.level.unwrap_or(DEFAULT_LEVEL);
    spec.stratified_queries = g.stratified_queries;
    spec.mode = mode;
    spec.base_seed = base_seed;
}

fn execute(
    cells: &[PlannedCell<'_>],
    jobs: Option<usize>,
) -> CliResult<Vec<fsbench_core::Result<RunSummary>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| {
            CliError::Config(format!(
                "cannot start {} worker threads: {e}",
                jobs.unwrap_or(0)
            ))
        })?;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|c| run_cell(c.data, &c.spec))
            .collect()
    }))
}

struct Written {
    reports: Vec<Option<CellReport>>,
    failures: Vec<(String, Error)>,
}

/// Writes one report (or `.failed` marker) per cell, in plan order.
fn write_cells(
    outcome: &mut Outcome,
    planned: &[PlannedCell<'_>],
    results: Vec<fsbench_core::Result<RunSummary>>,
    provenance: &Provenance,
) -> CliResult<Written> {
    let dir = outcome.out_dir.join(CELLS_DIR);
    let mut seen = std::collections::HashSet::new();
    let mut reports = Vec::with_capacity(planned.len());
    let mut failures = Vec::new();
    for (cell, result) in planned.iter().zip(results) {
        let stem = cell_file_stem(&cell.spec);
        if !seen.insert(stem.clone()) {
            return Err(CliError::Config(format!(
                "two grid cells map to the same report {stem}"
            )));
        }
        let json_path = dir.join(format!("{stem}.json"));
        let failed_path = dir.join(format!("{stem}.failed"));
        match result {
            Ok(summary) => {
                log::info!("{stem}: {} in {:.1?}", summary.display(), summary.duration);
                let report = CellReport::from_summary(&summary, provenance);
                outcome.write(json_path, report.to_json()?.as_bytes())?;
                remove_stale(&failed_path)?;
                reports.push(Some(report));
            }
            Err(e) => {
                log::error!("{stem}: {e}");
                let marker = FailedCell {
                    provenance: provenance.clone(),
                    cell: cell.spec.clone(),
                    error: e.to_string(),
                };
                let text = serde_json::to_string_pretty(&marker).expect("marker serializes") + "\n";
                outcome.write(failed_path, text.as_bytes())?;
                remove_stale(&json_path)?;
                reports.push(None);
                failures.push((stem, e));
            }
        }
    }
    Ok(Written { reports, failures })
}

fn finish(outcome: Outcome, total: usize, failures: Vec<(String, Error)>) -> CliResult<Outcome> {
    let failed = failures.len();
    match failures.into_iter().next() {
        None => Ok(outcome),
        Some((stem, first)) => Err(CliError::CellsFailed {
            failed,
            total,
            stem,
            first: Box::new(first),
        }),
    }
}

fn start(config: &RunConfig, command: &str) -> CliResult<(Vec<LoadedSet>, Outcome, Provenance)> {
    let sets = load_embeddings(&config.embeddings)?;
    let base_seed = config.base_seed_from_env()?;
    let hash = config_hash(config, &sets, base_seed, command);
    let provenance = Provenance::new(hash.clone(), base_seed);
    let outcome = Outcome {
        out_dir: config.out_dir(),
        written: Vec::new(),
        config_hash: hash,
        base_seed,
    };
    Ok((sets, outcome, provenance))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// In-domain grid over every loaded file: a report per cell, `cells.csv`,
/// and one backbone-by-column table per transform mode.
pub fn cmd_eval(config: &RunConfig) -> CliResult<Outcome> {
    let (sets, mut outcome, provenance) = start(config, "eval")?;
    let modes = config.modes();
    let shots = if config.grid.shots.is_empty() {
        DEFAULT_SHOTS.to_vec()
    } else {
        config.grid.shots.clone()
    };
    let mut planned = Vec::new();
    for &mode in &modes {
        for set in &sets {
            let ways = if config.grid.n_way.is_empty() {
                vec![set.data.num_classes()]
            } else {
                config.grid.n_way.clone()
            };
            for &n in &ways {
                for &m in &shots {
                    let mut spec =
                        CellSpec::in_domain(set.data.dataset_name(), set.backbone(), n, m);
                    apply_grid(&mut spec, config, mode, outcome.base_seed);
                    planned.push(PlannedCell {
                        spec,
                        data: CellData::InDomain(&set.data),
                        row: None,
                    });
                }
            }
        }
    }

    let results = execute(&planned, config.jobs)?;
    let written = write_cells(&mut outcome, &planned, results, &provenance)?;
    let ok: Vec<CellReport> = written.reports.iter().flatten().cloned().collect();
    let out = outcome.out_dir.clone();
    outcome.write(out.join("cells.csv"), cells_csv(&ok)?.as_bytes())?;
    for mode in modes {
        let of_mode: Vec<CellReport> = ok.iter().filter(|r| r.cell.mode == mode).cloned().collect();
        outcome.write(
            out.join(format!("table1_{mode}.csv")),
            table1_csv(&of_mode, &provenance)?.as_bytes(),
        )?;
    }
    finish(outcome, planned.len(), written.failures)
}

/// The grids `cross` runs: configured ones, else the named builtin.
pub fn selected_protocols(config: &RunConfig) -> CliResult<Vec<ProtocolGrid>> {
    let grids = if config.protocols.is_empty() {
        builtin_protocol(config.protocol.as_deref().unwrap_or("all"))?
    } else {
        config.protocols.clone()
    };
    let grids: Vec<ProtocolGrid> = grids
        .into_iter()
        .map(|g| {
            // the mismatch row is directional: its support side must carry every eval class
            if config.swap && g.is_cross() && g.kind != ProtocolKind::Mismatch {
                g.swapped()
            } else {
                g
            }
        })
        .collect();
    for g in &grids {
        g.check()?;
    }
    Ok(grids)
}

struct Prepared<'a> {
    grid: &'a ProtocolGrid,
    backbone: String,
    support: EmbeddingDataset,
    query: Option<EmbeddingDataset>,
    shots: Vec<usize>,
}

fn prepare<'a>(
    grid: &'a ProtocolGrid,
    sets: &[LoadedSet],
    config: &RunConfig,
) -> CliResult<Vec<Prepared<'a>>> {
    let supports: Vec<&LoadedSet> = sets
        .iter()
        .filter(|s| same_dataset(&s.key, &grid.support_dataset))
        .collect();
    let queries: Vec<&LoadedSet> = sets
        .iter()
        .filter(|s| same_dataset(&s.key, &grid.query_dataset))
        .collect();
    for (role, name, found) in [
        ("support", &grid.support_dataset, supports.is_empty()),
        ("query", &grid.query_dataset, queries.is_empty()),
    ] {
        if found {
            return Err(CliError::Config(format!(
                "protocol {:?} needs {role} embeddings for dataset {name} (use --embeddings {name}=PATH)",
                grid.name
            )));
        }
    }
    let shots = if config.grid.shots.is_empty() {
        grid.cells.iter().map(|c| c.m_shot).collect::<Vec<_>>()
    } else {
        config.grid.shots.clone()
    };
    let max_shot = shots.iter().copied().max().unwrap_or(0);

    let mut out = Vec::new();
    for s in supports {
        let Some(q) = queries.iter().find(|q| q.backbone() == s.backbone()) else {
            log::warn!(
                "protocol {:?}: no {} embeddings from backbone {}, skipped",
                grid.name,
                grid.query_dataset,
                s.backbone()
            );
            continue;
        };
        let mut inventories = vec![ClassInventory::from(&s.data)];
        if grid.is_cross() {
            inventories.push(ClassInventory::from(&q.data));
        }
        validate_mapping(&grid.mapping, &inventories, max_shot)?;
        let support = s.data.remap_labels(&grid.mapping)?;
        let query = if grid.is_cross() {
            Some(q.data.remap_labels(&grid.mapping)?)
        } else {
            None
        };
        out.push(Prepared {
            grid,
            backbone: s.backbone().to_string(),
            support,
            query,
            shots: shots.clone(),
        });
    }
    if out.is_empty() {
        return Err(CliError::Config(format!(
            "protocol {:?}: no backbone has embeddings for both {} and {}",
            grid.name, grid.support_dataset, grid.query_dataset
        )));
    }
    Ok(out)
}

fn present_classes(ds: &EmbeddingDataset) -> usize {
    ds.class_counts().iter().filter(|&&c| c > 0).count()
}

/// Protocol rows (in-domain baselines and cross-dataset transfers): a report
/// per cell and one table per backbone and mode.
pub fn cmd_cross(config: &RunConfig) -> CliResult<Outcome> {
    let grids = selected_protocols(config)?;
    let (sets, mut outcome, provenance) = start(config, "cross")?;
    if !config.grid.n_way.is_empty() {
        log::warn!("--n-way is ignored by protocol runs; ways come from each protocol");
    }
    let mut prepared = Vec::new();
    for g in &grids {
        prepared.extend(prepare(g, &sets, config)?);
    }

    let modes = config.modes();
    let mut planned = Vec::new();
    for &mode in &modes {
        for p in &prepared {
            let grid = p.grid;
            let data = match &p.query {
                Some(q) => CellData::Cross {
                    support: &p.support,
                    query: q,
                },
                None => CellData::InDomain(&p.support),
            };
            let query_ds = p.query.as_ref().unwrap_or(&p.support);
            let mut ways: Vec<usize> = grid.cells.iter().map(|c| c.n_way).collect();
            ways.dedup();
            for &n in &ways {
                for &m in &p.shots {
                    let mut spec = CellSpec::in_domain(p.support.dataset_name(), &p.backbone, n, m);
                    spec.protocol = Some(grid.name.clone());
                    spec.query_dataset = query_ds.dataset_name().to_string();
                    spec.query_count = grid.query_count;
                    spec.episodes = grid.episodes;
                    spec.allow_query_absent_classes = grid.allows_query_absent_classes();
                    apply_grid(&mut spec, config, mode, outcome.base_seed);
                    let setting = match grid.kind {
                        ProtocolKind::Custom => grid.name.clone(),
                        kind => kind.to_string(),
                    };
                    let query_ways = if p.query.is_some() {
                        present_classes(query_ds)
                    } else {
                        n
                    };
                    planned.push(PlannedCell {
                        row: Some(RowLabel {
                            setting,
                            support: format!("{} ({n}-way)", p.support.dataset_name()),
                            query: format!("{} ({query_ways}-way)", query_ds.dataset_name()),
                        }),
                        spec,
                        data,
                    });
                }
            }
        }
    }

    let results = execute(&planned, config.jobs)?;
    let written = write_cells(&mut outcome, &planned, results, &provenance)?;
    let ok: Vec<CellReport> = written.reports.iter().flatten().cloned().collect();
    let out = outcome.out_dir.clone();
    outcome.write(out.join("cross_cells.csv"), cells_csv(&ok)?.as_bytes())?;

    let mut backbones: Vec<&str> = Vec::new();
    for p in &prepared {
        if !backbones.contains(&p.backbone.as_str()) {
            backbones.push(&p.backbone);
        }
    }
    for &mode in &modes {
        for &b in &backbones {
            let rows: Vec<Table3Row<'_>> = planned
                .iter()
                .zip(&written.reports)
                .filter(|(c, _)| c.spec.mode == mode && c.spec.backbone == b)
                .map(|(c, r)| {
                    let label = c.row.as_ref().expect("protocol cells carry row labels");
                    Table3Row {
                        setting: label.setting.clone(),
                        support: label.support.clone(),
                        query: label.query.clone(),
                        backbone: b.to_string(),
                        mode,
                        report: r.as_ref(),
                    }
                })
                .collect();
            outcome.write(
                out.join(format!("table3_{}_{mode}.csv", sanitize(b))),
                table3_csv(&rows, &provenance)?.as_bytes(),
            )?;
        }
    }
    finish(outcome, planned.len(), written.failures)
}

/// Human-readable dump of one embedding file.
pub fn cmd_inspect(path: &Path) -> CliResult<String> {
    let ds = load(path)?;
    let mut s = String::new();
    let _ = writeln!(s, "file:       {}", path.display());
    let _ = writeln!(s, "dataset:    {}", ds.dataset_name());
    let _ = writeln!(s, "backbone:   {}", ds.backbone_name());
    let _ = writeln!(s, "dim:        {}", ds.dim());
    let _ = writeln!(s, "count:      {}", ds.count());
    let _ = writeln!(s, "image size: {}", ds.extraction().image_size);
    let _ = writeln!(s, "preprocess: {}", ds.extraction().preprocess);
    let _ = writeln!(s, "classes:    {}", ds.num_classes());
    let width = ds
        .class_names()
        .iter()
        .map(|n| n.chars().count())
        .max()
        .unwrap_or(0);
    for (i, (name, n)) in ds.class_names().iter().zip(ds.class_counts()).enumerate() {
        let _ = writeln!(s, "  {i:>3}  {name:<width$}  {n}");
    }
    let norms: Vec<f64> = (0..ds.count())
        .map(|i| {
            ds.row(i)
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    if norms.is_empty() {
        let _ = writeln!(s, "norm:       n/a");
    } else {
        let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
        let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        let _ = writeln!(s, "norm:       min {min:.6}  mean {mean:.6}  max {max:.6}");
    }
    Ok(s)
}

/// Writes the records of an embedding file as CSV.
pub fn cmd_export_csv(path: &Path, out: &Path) -> CliResult<()> {
    let ds = load(path)?;
    let mut buf = Vec::new();
    export_csv(&ds, &mut buf)?;
    write_atomic(out, &buf)?;
    Ok(())
}

/// Writes a Gaussian stand-in shaped like a known dataset.
pub fn cmd_synth(
    like: &str,
    backbone: &str,
    dim: usize,
    separation: f64,
    seed: u64,
    out: &Path,
) -> CliResult<u64> {
    let manifest = match canonical_dataset_name(like).as_str() {
        "msldv1" => DatasetManifest::msld_v1(),
        "msid" => DatasetManifest::msid(),
        "msldv2" => DatasetManifest::msld_v2(),
        _ => {
            return Err(CliError::Config(format!(
                "unknown dataset {like:?}; expected msldv1, msid or msldv2"
            )))
        }
    };
    let clusters = GaussianClusters::new(0, 0, dim, Layout::Simplex)
        .with_separation(separation)
        .with_seed(seed);
    let ds = shaped_like(&manifest, backbone, &clusters)?;
    Ok(save(&ds, out)?)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct SeriesKey {
    protocol: String,
    support: String,
    query: String,
    backbone: String,
    mode: TransformMode,
    n_way: usize,
}

impl SeriesKey {
    fn of(cell: &CellSpec) -> Self {
        Self {
            protocol: cell.protocol.clone().unwrap_or_default(),
            support: cell.support_dataset.clone(),
            query: cell.query_dataset.clone(),
            backbone: cell.backbone.clone(),
            mode: cell.mode,
            n_way: cell.n_way,
        }
    }

    fn fields(&self) -> [String; 6] {
        [
            self.protocol.clone(),
            self.support.clone(),
            self.query.clone(),
            self.backbone.clone(),
            self.mode.to_string(),
            self.n_way.to_string(),
        ]
    }
}

enum Point {
    Done(CellReport),
    Failed(FailedCell),
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Core(Error::Format(format!("csv: {e}")));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Core(Error::Format(format!("csv: {e}"))))
}

/// Reads every report under `report_dir` and writes `shot_scaling.csv` and
/// `classwise.csv` into `out` (default `report_dir/plots`).
pub fn cmd_plotdata(report_dir: &Path, out: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    if !report_dir.is_dir() {
        return Err(CliError::Config(format!(
            "report directory {} not found",
            report_dir.display()
        )));
    }
    let cells_dir = report_dir.join(CELLS_DIR);
    let dir = if cells_dir.is_dir() {
        cells_dir
    } else {
        report_dir.to_path_buf()
    };
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(Error::from)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json" || e == "failed"))
        .collect();
    entries.sort();

    let mut series: BTreeMap<SeriesKey, BTreeMap<usize, Point>> = BTreeMap::new();
    for path in &entries {
        let text = std::fs::read_to_string(path).map_err(Error::from)?;
        let bad = |e: String| CliError::Core(Error::Format(format!("{}: {e}", path.display())));
        let point = if path.extension().is_some_and(|e| e == "failed") {
            Point::Failed(serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?)
        } else {
            Point::Done(CellReport::from_json(&text).map_err(|e| bad(e.to_string()))?)
        };
        let cell = match &point {
            Point::Done(r) => &r.cell,
            Point::Failed(f) => &f.cell,
        };
        series
            .entry(SeriesKey::of(cell))
            .or_default()
            .insert(cell.m_shot, point);
    }
    if series.is_empty() {
        return Err(CliError::Config(format!(
            "no reports found in {}",
            dir.display()
        )));
    }

    let mut shots: Vec<usize> = series.values().flat_map(|s| s.keys().copied()).collect();
    shots.sort_unstable();
    shots.dedup();

    let mut scaling = Vec::new();
    let mut classwise = Vec::new();
    for (key, points) in &series {
        for &m in &shots {
            let mut row: Vec<String> = key.fields().to_vec();
            row.push(m.to_string());
            match points.get(&m) {
                Some(Point::Done(r)) => {
                    row.push(format!("{:.6}", r.accuracy.mean.0));
                    row.push(
                        r.accuracy
                            .half_width
                            .map(|h| format!("{:.6}", h.0))
                            .unwrap_or_default(),
                    );
                    row.push("ok".into());
                    row.extend(provenance_fields(&r.provenance));
                    for c in &r.per_class {
                        let mut crow: Vec<String> = key.fields().to_vec();
                        crow.push(m.to_string());
                        crow.push(c.class.clone());
                        crow.push(c.observed.to_string());
                        crow.push(c.mean.map(|v| format!("{:.6}", v.0)).unwrap_or_default());
                        crow.push(
                            c.half_width
                                .map(|v| format!("{:.6}", v.0))
                                .unwrap_or_default(),
                        );
                        crow.extend(provenance_fields(&r.provenance));
                        classwise.push(crow);
                    }
                }
                Some(Point::Failed(f)) => {
                    row.extend([String::new(), String::new(), "failed".into()]);
                    row.extend(provenance_fields(&f.provenance));
                }
                None => {
                    row.extend([String::new(), String::new(), "missing".into()]);
                    row.extend([String::new(), String::new(), String::new()]);
                }
            }
            scaling.push(row);
        }
    }

    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| report_dir.join("plots"));
    let series_cols = [
        "protocol",
        "support_dataset",
        "query_dataset",
        "backbone",
        "mode",
        "n_way",
    ];
    let prov_cols = ["base_seed", "config_hash", "version"];
    let scaling_header: Vec<&str> = series_cols
        .iter()
        .chain(&["shot", "mean", "yerr", "status"])
        .chain(&prov_cols)
        .copied()
        .collect();
    let class_header: Vec<&str> = series_cols
        .iter()
        .chain(&["shot", "class", "observed", "mean", "yerr"])
        .chain(&prov_cols)
        .copied()
        .collect();
    let scaling_path = out.join("shot_scaling.csv");
    let class_path = out.join("classwise.csv");
    write_atomic(&scaling_path, &csv_bytes(&scaling_header, scaling)?)?;
    write_atomic(&class_path, &csv_bytes(&class_header, classwise)?)?;
    Ok(vec![scaling_path, class_path])
}

fn provenance_fields(p: &Provenance) -> [String; 3] {
    [
        p.base_seed.to_string(),
        p.config_hash.clone(),
        p.version.clone(),
    ]
}
