//! Named evaluation protocols and the label mappings behind them.
//!
//! A [`LabelMapping`] turns each participating dataset's own class list into
//! one shared list of evaluation classes. Class names are compared after
//! trimming and lowercasing, with a small fixed alias table; nothing fuzzier.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_EPISODES;
use crate::sampler::DEFAULT_QUERY_COUNT;
use crate::store::{ClassCount, DatasetManifest, EmbeddingDataset};

const CLASS_ALIASES: &[(&str, &str)] =
    &[("hfmd", "hand-foot-mouth disease"), ("mpox", "monkeypox")];

const DATASET_ALIASES: &[(&str, &str)] = &[("msldv10", "msldv1"), ("msldv20", "msldv2")];

pub fn canonical_class_name(name: &str) -> String {
    let lowered = name.trim().to_lowercase();
    CLASS_ALIASES
        .iter()
        .find(|(alias, _)| *alias == lowered)
        .map(|(_, canonical)| canonical.to_string())
        .unwrap_or(lowered)
}

/// Dataset identity ignoring case, spacing and punctuation
/// (`MSLD v2.0` and `msldv2` compare equal).
pub fn canonical_dataset_name(name: &str) -> String {
    let compact: String = name
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    DATASET_ALIASES
        .iter()
        .find(|(alias, _)| *alias == compact)
        .map(|(_, canonical)| canonical.to_string())
        .unwrap_or(compact)
}

pub fn same_dataset(a: &str, b: &str) -> bool {
    canonical_dataset_name(a) == canonical_dataset_name(b)
}

/// Where one source class goes. Serialized as the class name, or `DROP`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Target {
    Class(String),
    Drop,
}

impl From<String> for Target {
    fn from(s: String) -> Self {
        if s == "DROP" {
            Target::Drop
        } else {
            Target::Class(s)
        }
    }
}

impl From<Target> for String {
    fn from(t: Target) -> Self {
        match t {
            Target::Class(s) => s,
            Target::Drop => "DROP".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub source: String,
    pub target: Target,
}

/// Explicit per-dataset table. Every source class must appear exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTable {
    pub dataset: String,
    pub entries: Vec<TableEntry>,
}

/// Rule for datasets without an explicit table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefaultRule {
    /// Source classes whose name matches an evaluation class map to it; the
    /// rest are dropped.
    #[default]
    ByName,
    /// `positive` maps to `positive_target`, every other class to `rest_target`.
    OneVsRest {
        positive: String,
        positive_target: String,
        rest_target: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    eval_classes: Vec<String>,
    #[serde(default)]
    tables: Vec<SourceTable>,
    #[serde(default)]
    rule: DefaultRule,
    /// Datasets allowed to leave some evaluation classes empty (query side of
    /// the 6-way to 4-way mismatch protocol).
    #[serde(default)]
    partial_coverage: Vec<String>,
}

impl LabelMapping {
    pub fn new(eval_classes: Vec<String>, rule: DefaultRule) -> Self {
        Self {
            eval_classes,
            tables: Vec::new(),
            rule,
            partial_coverage: Vec::new(),
        }
    }

    /// Keeps every class of `class_names`, in order.
    pub fn identity(class_names: &[String]) -> Self {
        Self::new(class_names.to_vec(), DefaultRule::ByName)
    }

    pub fn with_table(mut self, table: SourceTable) -> Self {
        self.tables.push(table);
        self
    }

    pub fn with_partial_coverage(mut self, dataset: impl Into<String>) -> Self {
        self.partial_coverage.push(dataset.into());
        self
    }

    pub fn eval_classes(&self) -> &[String] {
        &self.eval_classes
    }

    pub fn rule(&self) -> &DefaultRule {
        &self.rule
    }

    pub fn allows_partial(&self, dataset: &str) -> bool {
        self.partial_coverage
            .iter()
            .any(|d| same_dataset(d, dataset))
    }

    fn eval_index(&self, name: &str) -> Result<usize> {
        let key = canonical_class_name(name);
        self.eval_classes
            .iter()
            .position(|c| canonical_class_name(c) == key)
            .ok_or_else(|| {
                Error::Mapping(format!(
                    "{name:?} is not an evaluation class (have {:?})",
                    self.eval_classes
                ))
            })
    }

    /// For each source class of `dataset`, the evaluation class index it maps
    /// to, or `None` when dropped.
    pub fn resolve(&self, dataset: &str, class_names: &[String]) -> Result<Vec<Option<usize>>> {
        check_unique_names(&self.eval_classes, "evaluation classes")?;
        check_unique_names(class_names, dataset)?;
        let source_keys: Vec<String> = class_names
            .iter()
            .map(|c| canonical_class_name(c))
            .collect();

        if let Some(table) = self
            .tables
            .iter()
            .find(|t| same_dataset(&t.dataset, dataset))
        {
            let mut out: Vec<Option<Option<usize>>> = vec![None; class_names.len()];
            for entry in &table.entries {
                let key = canonical_class_name(&entry.source);
                let src = source_keys.iter().position(|k| *k == key).ok_or_else(|| {
                    Error::Mapping(format!(
                        "table for {dataset:?} references unknown source class {:?}",
                        entry.source
                    ))
                })?;
                if out[src].is_some() {
                    return Err(Error::Mapping(format!(
                        "ambiguous source name: {:?} appears twice in the table for {dataset:?}",
                        entry.source
                    )));
                }
                out[src] = Some(match &entry.target {
                    Target::Class(name) => Some(self.eval_index(name)?),
                    Target::Drop => None,
                });
            }
            return out
                .into_iter()
                .enumerate()
                .map(|(i, t)| {
                    t.ok_or_else(|| {
                        Error::Mapping(format!(
                            "source class {:?} of {dataset:?} is neither mapped nor dropped",
                            class_names[i]
                        ))
                    })
                })
                .collect();
        }

        match &self.rule {
            DefaultRule::ByName => Ok(source_keys
                .iter()
                .map(|k| {
                    self.eval_classes
                        .iter()
                        .position(|c| canonical_class_name(c) == *k)
                })
                .collect()),
            DefaultRule::OneVsRest {
                positive,
                positive_target,
                rest_target,
            } => {
                let pos = self.eval_index(positive_target)?;
                let rest = self.eval_index(rest_target)?;
                let positive = canonical_class_name(positive);
                Ok(source_keys
                    .iter()
                    .map(|k| Some(if *k == positive { pos } else { rest }))
                    .collect())
            }
        }
    }
}

fn check_unique_names(names: &[String], context: &str) -> Result<()> {
    let mut seen = BTreeMap::new();
    for name in names {
        if let Some(prev) = seen.insert(canonical_class_name(name), name) {
            return Err(Error::Mapping(format!(
                "ambiguous source name in {context:?}: {prev:?} and {name:?} denote the same class"
            )));
        }
    }
    Ok(())
}

/// Class names and sizes of one dataset, from a loaded file or a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassInventory {
    pub dataset: String,
    pub class_names: Vec<String>,
    pub counts: Vec<usize>,
}

impl From<&EmbeddingDataset> for ClassInventory {
    fn from(ds: &EmbeddingDataset) -> Self {
        Self {
            dataset: ds.dataset_name().to_string(),
            class_names: ds.class_names().to_vec(),
            counts: ds.class_counts(),
        }
    }
}

impl From<&DatasetManifest> for ClassInventory {
    fn from(m: &DatasetManifest) -> Self {
        Self {
            dataset: m.dataset.clone(),
            class_names: m.class_names(),
            counts: m.counts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetCoverage {
    pub dataset: String,
    pub classes: Vec<ClassCount>,
}

impl DatasetCoverage {
    pub fn count(&self, class: &str) -> Option<usize> {
        self.classes
            .iter()
            .find(|c| c.name == class)
            .map(|c| c.count)
    }

    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckedMapping {
    pub mapping: LabelMapping,
    pub coverage: Vec<DatasetCoverage>,
}

/// Confirms every dataset gives every evaluation class at least
/// `max_shot + 1` samples (or none, for partial-coverage datasets).
pub fn validate_mapping(
    mapping: &LabelMapping,
    datasets: &[ClassInventory],
    max_shot: usize,
) -> Result<CheckedMapping> {
    let mut coverage = Vec::with_capacity(datasets.len());
    for inv in datasets {
        let targets = mapping.resolve(&inv.dataset, &inv.class_names)?;
        let mut counts = vec![0usize; mapping.eval_classes.len()];
        for (target, &n) in targets.iter().zip(&inv.counts) {
            if let Some(t) = target {
                counts[*t] += n;
            }
        }
        let partial = mapping.allows_partial(&inv.dataset);
        for (class, &n) in mapping.eval_classes.iter().zip(&counts) {
            if partial && n == 0 {
                continue;
            }
            if n < max_shot + 1 {
                return Err(Error::Mapping(format!(
                    "dataset {:?} does not cover evaluation class {class:?}: {n} samples, need at least {}",
                    inv.dataset,
                    max_shot + 1
                )));
            }
        }
        coverage.push(DatasetCoverage {
            dataset: inv.dataset.clone(),
            classes: mapping
                .eval_classes
                .iter()
                .zip(counts)
                .map(|(name, count)| ClassCount {
                    name: name.clone(),
                    count,
                })
                .collect(),
        });
    }
    Ok(CheckedMapping {
        mapping: mapping.clone(),
        coverage,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    InDomain,
    Mismatch,
    Overlap,
    Binary,
    Custom,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::InDomain => "In-domain (baseline)",
            ProtocolKind::Mismatch => "Cross-dataset (mismatch)",
            ProtocolKind::Overlap => "Cross-dataset (4-class overlap)",
            ProtocolKind::Binary => "Cross-dataset (binary Mpox vs Others)",
            ProtocolKind::Custom => "Custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub n_way: usize,
    pub m_shot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolGrid {
    pub name: String,
    pub kind: ProtocolKind,
    pub support_dataset: String,
    pub query_dataset: String,
    pub mapping: LabelMapping,
    pub cells: Vec<GridCell>,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_queries")]
    pub query_count: usize,
}

fn default_episodes() -> usize {
    DEFAULT_EPISODES
}

fn default_queries() -> usize {
    DEFAULT_QUERY_COUNT
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProtocolFile {
    pub protocols: Vec<ProtocolGrid>,
}

impl ProtocolGrid {
    pub fn is_cross(&self) -> bool {
        !same_dataset(&self.support_dataset, &self.query_dataset)
    }

    /// Prototypes for classes absent from the query dataset stay candidates.
    pub fn allows_query_absent_classes(&self) -> bool {
        self.mapping.allows_partial(&self.query_dataset)
    }

    pub fn max_shot(&self) -> usize {
        self.cells.iter().map(|c| c.m_shot).max().unwrap_or(0)
    }

    /// Same protocol with support and query roles exchanged.
    pub fn swapped(&self) -> Self {
        let mut out = self.clone();
        std::mem::swap(&mut out.support_dataset, &mut out.query_dataset);
        out
    }

    pub fn check(&self) -> Result<()> {
        let k = self.mapping.eval_classes.len();
        if self.cells.is_empty() {
            return Err(Error::Protocol(format!(
                "protocol {:?} has no grid cells",
                self.name
            )));
        }
        for cell in &self.cells {
            let ok = match self.kind {
                ProtocolKind::Overlap | ProtocolKind::Binary | ProtocolKind::Mismatch => {
                    cell.n_way == k
                }
                ProtocolKind::InDomain | ProtocolKind::Custom => cell.n_way <= k,
            };
            if !ok || cell.n_way < 2 || cell.m_shot == 0 {
                return Err(Error::Protocol(format!(
                    "protocol {:?}: cell {}-way {}-shot does not fit {k} evaluation classes",
                    self.name, cell.n_way, cell.m_shot
                )));
            }
        }
        if self.episodes == 0 || self.query_count == 0 {
            return Err(Error::Protocol(format!(
                "protocol {:?} needs positive episode and query counts",
                self.name
            )));
        }
        Ok(())
    }
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

const OVERLAP_CLASSES: [&str; 4] = ["Monkeypox", "Chickenpox", "Measles", "Healthy"];

fn binary_mapping() -> LabelMapping {
    LabelMapping::new(
        strings(&["Mpox", "Others"]),
        DefaultRule::OneVsRest {
            positive: "Monkeypox".into(),
            positive_target: "Mpox".into(),
            rest_target: "Others".into(),
        },
    )
}

fn grid(
    name: &str,
    kind: ProtocolKind,
    support: &str,
    query: &str,
    mapping: LabelMapping,
    n_way: usize,
) -> ProtocolGrid {
    ProtocolGrid {
        name: name.to_string(),
        kind,
        support_dataset: support.to_string(),
        query_dataset: query.to_string(),
        mapping,
        cells: vec![GridCell { n_way, m_shot: 10 }],
        episodes: DEFAULT_EPISODES,
        query_count: DEFAULT_QUERY_COUNT,
    }
}

/// The seven cross-dataset comparison rows: two in-domain baselines, the
/// 6-way to 4-way mismatch, and both directions of the 4-class overlap and
/// binary protocols. All at 10-shot.
pub fn builtin_protocols() -> Vec<ProtocolGrid> {
    let v2 = DatasetManifest::msld_v2();
    let msid = DatasetManifest::msid();
    let v2_classes = v2.class_names();
    let overlap = LabelMapping::new(strings(&OVERLAP_CLASSES), DefaultRule::ByName);
    vec![
        grid(
            "msldv2-indomain",
            ProtocolKind::InDomain,
            "MSLDv2",
            "MSLDv2",
            LabelMapping::identity(&v2_classes),
            6,
        ),
        grid(
            "msid-indomain",
            ProtocolKind::InDomain,
            "MSID",
            "MSID",
            LabelMapping::identity(&msid.class_names()),
            4,
        ),
        grid(
            "cross-mismatch",
            ProtocolKind::Mismatch,
            "MSLDv2",
            "MSID",
            LabelMapping::identity(&v2_classes).with_partial_coverage("MSID"),
            6,
        ),
        grid(
            "cross-overlap4",
            ProtocolKind::Overlap,
            "MSLDv2",
            "MSID",
            overlap.clone(),
            4,
        ),
        grid(
            "cross-overlap4",
            ProtocolKind::Overlap,
            "MSID",
            "MSLDv2",
            overlap,
            4,
        ),
        grid(
            "cross-binary",
            ProtocolKind::Binary,
            "MSLDv2",
            "MSID",
            binary_mapping(),
            2,
        ),
        grid(
            "cross-binary",
            ProtocolKind::Binary,
            "MSID",
            "MSLDv2",
            binary_mapping(),
            2,
        ),
    ]
}

pub const BUILTIN_NAMES: [&str; 5] = [
    "msldv2-indomain",
    "msid-indomain",
    "cross-mismatch",
    "cross-overlap4",
    "cross-binary",
];

/// Builtin grids by name; `all` selects every row.
pub fn builtin_protocol(name: &str) -> Result<Vec<ProtocolGrid>> {
    let key = name.trim().to_lowercase();
    let all = builtin_protocols();
    if key == "all" {
        return Ok(all);
    }
    let picked: Vec<_> = all.into_iter().filter(|g| g.name == key).collect();
    if picked.is_empty() {
        return Err(Error::Domain(format!(
            "unknown protocol {name:?}; builtins are all, {}",
            BUILTIN_NAMES.join(", ")
        )));
    }
    Ok(picked)
}
