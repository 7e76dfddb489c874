//! Run configuration: file contents merged with command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fsbench_core::protocols::{same_dataset, ProtocolGrid};
use fsbench_core::{EmbeddingDataset, TransformMode};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "FSB_SEED";
pub const DEFAULT_SHOTS: [usize; 3] = [10, 5, 1];
pub const DEFAULT_OUT: &str = "fsbench-out";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSource {
    pub dataset: String,
    pub path: PathBuf,
}

impl std::str::FromStr for EmbeddingSource {
    type Err = CliError;

    /// `DATASET=PATH`.
    fn from_str(s: &str) -> CliResult<Self> {
        let (dataset, path) = s
            .split_once('=')
            .filter(|(d, p)| !d.trim().is_empty() && !p.is_empty())
            .ok_or_else(|| CliError::Config(format!("expected DATASET=PATH, got {s:?}")))?;
        Ok(Self {
            dataset: dataset.trim().to_string(),
            path: PathBuf::from(path),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridOverrides {
    pub n_way: Vec<usize>,
    pub shots: Vec<usize>,
    pub queries: Option<usize>,
    pub episodes: Option<usize>,
    pub modes: Vec<TransformMode>,
    pub level: Option<f64>,
    pub stratified_queries: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub embeddings: Vec<EmbeddingSource>,
    /// Builtin protocol name for `cross`; `all` when unset.
    pub protocol: Option<String>,
    /// Custom protocol grids; take precedence over `protocol`.
    pub protocols: Vec<ProtocolGrid>,
    pub grid: GridOverrides,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    /// Exchange support and query datasets of cross-dataset protocols.
    pub swap: bool,
}

impl RunConfig {
    /// Reads a `.toml` or `.json` file.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }

    /// Applies flag values on top of `self`; set flags always win.
    /// Embedding flags replace the configured list as a whole.
    pub fn override_with(mut self, flags: RunConfig) -> Self {
        if !flags.embeddings.is_empty() {
            self.embeddings = flags.embeddings;
        }
        if flags.protocol.is_some() {
            self.protocol = flags.protocol;
            self.protocols.clear();
        }
        if !flags.protocols.is_empty() {
            self.protocols = flags.protocols;
        }
        let g = flags.grid;
        if !g.n_way.is_empty() {
            self.grid.n_way = g.n_way;
        }
        if !g.shots.is_empty() {
            self.grid.shots = g.shots;
        }
        if !g.modes.is_empty() {
            self.grid.modes = g.modes;
        }
        self.grid.queries = g.queries.or(self.grid.queries);
        self.grid.episodes = g.episodes.or(self.grid.episodes);
        self.grid.level = g.level.or(self.grid.level);
        self.grid.stratified_queries |= g.stratified_queries;
        self.seed = flags.seed.or(self.seed);
        self.jobs = flags.jobs.or(self.jobs);
        self.out = flags.out.or(self.out);
        self.swap |= flags.swap;
        self
    }

    /// Flag or config seed, else `FSB_SEED`, else 0.
    pub fn base_seed(&self, env_seed: Option<&str>) -> CliResult<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match env_seed {
            Some(v) => v.trim().parse().map_err(|_| {
                CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            }),
            None => Ok(0),
        }
    }

    pub fn base_seed_from_env(&self) -> CliResult<u64> {
        self.base_seed(std::env::var(SEED_ENV).ok().as_deref())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn modes(&self) -> Vec<TransformMode> {
        if self.grid.modes.is_empty() {
            TransformMode::ALL.to_vec()
        } else {
            self.grid.modes.clone()
        }
    }
}

/// One embedding file after loading and validation.
#[derive(Debug, Clone)]
pub struct LoadedSet {
    pub key: String,
    pub path: PathBuf,
    pub sha256: String,
    pub data: EmbeddingDataset,
}

impl LoadedSet {
    pub fn backbone(&self) -> &str {
        self.data.backbone_name()
    }
}

pub fn load_embeddings(sources: &[EmbeddingSource]) -> CliResult<Vec<LoadedSet>> {
    if sources.is_empty() {
        return Err(CliError::Config(
            "no embedding files given (use --embeddings DATASET=PATH)".into(),
        ));
    }
    let mut sets: Vec<LoadedSet> = Vec::with_capacity(sources.len());
    for src in sources {
        if !src.path.is_file() {
            return Err(CliError::Config(format!(
                "embedding file for {} not found: {}",
                src.dataset,
                src.path.display()
            )));
        }
        let bytes = std::fs::read(&src.path).map_err(fsbench_core::Error::from)?;
        let data = fsbench_core::store::decode(&bytes)?;
        if !same_dataset(&src.dataset, data.dataset_name()) {
            return Err(CliError::Config(format!(
                "{} holds dataset {:?}, not {:?}",
                src.path.display(),
                data.dataset_name(),
                src.dataset
            )));
        }
        if let Some(dup) = sets
            .iter()
            .find(|s| same_dataset(&s.key, &src.dataset) && s.backbone() == data.backbone_name())
        {
            return Err(CliError::Config(format!(
                "{} and {} both hold {} / {}",
                dup.path.display(),
                src.path.display(),
                src.dataset,
                data.backbone_name()
            )));
        }
        sets.push(LoadedSet {
            key: src.dataset.clone(),
            path: src.path.clone(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            data,
        });
    }
    Ok(sets)
}

#[derive(Serialize)]
struct HashedInput<'a> {
    embeddings: Vec<(&'a str, &'a str, &'a str)>,
    protocol: &'a Option<String>,
    protocols: &'a [ProtocolGrid],
    grid: &'a GridOverrides,
    modes: Vec<TransformMode>,
    base_seed: u64,
    swap: bool,
    command: &'a str,
}

/// SHA-256 over everything that can change results: file contents, grid,
/// protocols, seed. Paths, output directory and job count are excluded.
pub fn config_hash(
    config: &RunConfig,
    sets: &[LoadedSet],
    base_seed: u64,
    command: &str,
) -> String {
    let input = HashedInput {
        embeddings: sets
            .iter()
            .map(|s| (s.key.as_str(), s.backbone(), s.sha256.as_str()))
            .collect(),
        protocol: &config.protocol,
        protocols: &config.protocols,
        grid: &config.grid,
        modes: config.modes(),
        base_seed,
        swap: config.swap,
        command,
    };
    let json = serde_json::to_vec(&input).expect("config serializes");
    hex::encode(Sha256::digest(json))
}
