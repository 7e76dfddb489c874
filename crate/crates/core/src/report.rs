//! Canonical JSON and CSV renderings of run summaries.
//!
//! JSON keys follow struct field order and accuracies are printed with six
//! decimals; full-precision values sit next to them as `*_exact`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::evaluation::{CellSpec, RunSummary};
use crate::tensor::TransformMode;

pub const ARTIFACT: &str = "fsbench";
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact: String,
    pub version: String,
    pub config_hash: String,
    pub base_seed: u64,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, base_seed: u64) -> Self {
        Self {
            artifact: ARTIFACT.to_string(),
            version: ARTIFACT_VERSION.to_string(),
            config_hash: config_hash.into(),
            base_seed,
        }
    }
}

/// A number written with exactly six decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed6(pub f64);

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom("non-finite accuracy"));
        }
        let raw =
            RawValue::from_string(format!("{:.6}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Fixed6 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(deserializer).map(Fixed6)
    }
}

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub mean: Fixed6,
    pub half_width: Option<Fixed6>,
    pub display: String,
    pub level: f64,
    pub episodes: usize,
    pub std_dev: Option<f64>,
    pub mean_exact: f64,
    pub half_width_exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub class_id: usize,
    pub observed: usize,
    pub mean: Option<Fixed6>,
    pub half_width: Option<Fixed6>,
    pub display: Option<String>,
    pub mean_exact: Option<f64>,
    pub half_width_exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub provenance: Provenance,
    pub cell: CellSpec,
    pub class_names: Vec<String>,
    pub accuracy: AccuracyReport,
    pub per_class: Vec<ClassReport>,
    /// Rows are true classes, columns predictions, over `class_names`.
    pub confusion: Vec<Vec<u64>>,
    pub episode_accuracies: Vec<Fixed6>,
}

impl CellReport {
    pub fn from_summary(summary: &RunSummary, provenance: &Provenance) -> Self {
        let ci = summary.interval.as_ref();
        let accuracy = AccuracyReport {
            mean: Fixed6(summary.mean_accuracy),
            half_width: ci.map(|c| Fixed6(c.half_width)),
            display: summary.display(),
            level: summary.cell.level,
            episodes: summary.episode_accuracies.len(),
            std_dev: ci.map(|c| c.std_dev),
            mean_exact: summary.mean_accuracy,
            half_width_exact: ci.map(|c| c.half_width),
        };
        let per_class = summary
            .confusion
            .per_class
            .iter()
            .map(|pc| ClassReport {
                class: summary.class_names[pc.class_id].clone(),
                class_id: pc.class_id,
                observed: pc.observed,
                mean: pc.mean.map(Fixed6),
                half_width: pc.interval.map(|c| Fixed6(c.half_width)),
                display: match (pc.interval, pc.mean) {
                    (Some(c), _) => Some(c.display()),
                    (None, Some(m)) => Some(format!("{m:.3}")),
                    _ => None,
                },
                mean_exact: pc.mean,
                half_width_exact: pc.interval.map(|c| c.half_width),
            })
            .collect();
        Self {
            provenance: provenance.clone(),
            cell: summary.cell.clone(),
            class_names: summary.class_names.clone(),
            accuracy,
            per_class,
            confusion: summary.confusion.pooled.clone(),
            episode_accuracies: summary
                .episode_accuracies
                .iter()
                .map(|&a| Fixed6(a))
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("cannot serialize report: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("unreadable report: {e}")))
    }
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

/// File stem unique per cell within one run.
pub fn cell_file_stem(cell: &CellSpec) -> String {
    let data = if cell.support_dataset == cell.query_dataset {
        sanitize(&cell.support_dataset)
    } else {
        format!(
            "{}-to-{}",
            sanitize(&cell.support_dataset),
            sanitize(&cell.query_dataset)
        )
    };
    format!(
        "{}_{}_{}_{}way_{}shot_{}",
        sanitize(cell.protocol.as_deref().unwrap_or("grid")),
        data,
        sanitize(&cell.backbone),
        cell.n_way,
        cell.m_shot,
        cell.mode
    )
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(format!("csv: {e}")))
}

/// One row per cell.
pub fn cells_csv(reports: &[CellReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "protocol",
        "support_dataset",
        "query_dataset",
        "backbone",
        "n_way",
        "m_shot",
        "query_count",
        "episodes",
        "mode",
        "mean",
        "half_width",
        "display",
        "base_seed",
        "config_hash",
        "version",
    ])
    .map_err(csv_err)?;
    for r in reports {
        let c = &r.cell;
        w.write_record([
            c.protocol.clone().unwrap_or_default(),
            c.support_dataset.clone(),
            c.query_dataset.clone(),
            c.backbone.clone(),
            c.n_way.to_string(),
            c.m_shot.to_string(),
            c.query_count.to_string(),
            c.episodes.to_string(),
            c.mode.to_string(),
            fixed(r.accuracy.mean.0),
            r.accuracy
                .half_width
                .map(|h| fixed(h.0))
                .unwrap_or_default(),
            r.accuracy.display.clone(),
            r.provenance.base_seed.to_string(),
            r.provenance.config_hash.clone(),
            r.provenance.version.clone(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, item: T) {
    if !v.contains(&item) {
        v.push(item);
    }
}

/// Backbones as rows, `dataset N-way M-shot` as columns. Datasets, ways and
/// backbones keep first-appearance order; shots run from largest to
/// smallest. Missing cells are left empty.
pub fn table1_csv(reports: &[CellReport], provenance: &Provenance) -> Result<String> {
    let mut backbones: Vec<&str> = Vec::new();
    let mut groups: Vec<(&str, usize)> = Vec::new();
    for r in reports {
        push_unique(&mut backbones, r.cell.backbone.as_str());
        push_unique(&mut groups, (r.cell.support_dataset.as_str(), r.cell.n_way));
    }
    let mut columns: Vec<(&str, usize, usize)> = Vec::new();
    for &(ds, n) in &groups {
        let mut shots: Vec<usize> = reports
            .iter()
            .filter(|r| r.cell.support_dataset == ds && r.cell.n_way == n)
            .map(|r| r.cell.m_shot)
            .collect();
        shots.sort_unstable_by(|a, b| b.cmp(a));
        shots.dedup();
        columns.extend(shots.into_iter().map(|m| (ds, n, m)));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["backbone".to_string()];
    header.extend(
        columns
            .iter()
            .map(|(ds, n, m)| format!("{ds} {n}-way {m}-shot")),
    );
    header.extend(["base_seed", "config_hash", "version"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for b in backbones {
        let mut row = vec![b.to_string()];
        for &(ds, n, m) in &columns {
            let cell = reports.iter().find(|r| {
                r.cell.backbone == b
                    && r.cell.support_dataset == ds
                    && r.cell.n_way == n
                    && r.cell.m_shot == m
            });
            row.push(cell.map(|r| r.accuracy.display.clone()).unwrap_or_default());
        }
        row.push(provenance.base_seed.to_string());
        row.push(provenance.config_hash.clone());
        row.push(provenance.version.clone());
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

#[derive(Debug, Clone)]
pub struct Table3Row<'a> {
    pub setting: String,
    pub support: String,
    pub query: String,
    pub backbone: String,
    pub mode: TransformMode,
    /// `None` marks a failed cell.
    pub report: Option<&'a CellReport>,
}

pub fn table3_csv(rows: &[Table3Row<'_>], provenance: &Provenance) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "setting",
        "support",
        "query",
        "accuracy",
        "mean",
        "half_width",
        "backbone",
        "mode",
        "base_seed",
        "config_hash",
        "version",
    ])
    .map_err(csv_err)?;
    for row in rows {
        let (accuracy, mean, half_width) = match row.report {
            Some(r) => (
                r.accuracy.display.clone(),
                fixed(r.accuracy.mean.0),
                r.accuracy
                    .half_width
                    .map(|h| fixed(h.0))
                    .unwrap_or_default(),
            ),
            None => ("FAILED".to_string(), String::new(), String::new()),
        };
        w.write_record([
            row.setting.clone(),
            row.support.clone(),
            row.query.clone(),
            accuracy,
            mean,
            half_width,
            row.backbone.clone(),
            row.mode.to_string(),
            provenance.base_seed.to_string(),
            provenance.config_hash.clone(),
            provenance.version.clone(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{ClassAccuracy, ConfusionSummary};
    use crate::stats::ConfidenceInterval;
    use std::time::Duration;

    fn summary(backbone: &str, dataset: &str, n: usize, m: usize, mean: f64) -> RunSummary {
        let mut cell = CellSpec::in_domain(dataset, backbone, n, m);
        cell.episodes = 2;
        RunSummary {
            cell,
            class_names: (0..n).map(|c| format!("c{c}")).collect(),
            mean_accuracy: mean,
            interval: Some(ConfidenceInterval {
                mean,
                half_width: 0.0061,
                level: 0.95,
                n: 2,
                std_dev: 0.1,
            }),
            episode_accuracies: vec![mean - 0.01, mean + 0.01],
            confusion: ConfusionSummary {
                class_ids: (0..n).collect(),
                pooled: vec![vec![0; n]; n],
                per_class: (0..n)
                    .map(|class_id| ClassAccuracy {
                        class_id,
                        observed: 0,
                        mean: None,
                        interval: None,
                    })
                    .collect(),
            },
            duration: Duration::from_millis(3),
        }
    }

    #[test]
    fn six_decimals_in_json() {
        let prov = Provenance::new("abc", 7);
        let r = CellReport::from_summary(&summary("mobilenetv2", "MSLDv2", 6, 10, 0.624), &prov);
        let json = r.to_json().unwrap();
        assert!(json.contains("\"mean\": 0.624000"), "{json}");
        assert!(json.contains("\"half_width\": 0.006100"));
        assert!(json.contains("0.614000"));
        assert!(json.contains("\"display\": \"0.624\u{00B1}0.006\""));
        let back = CellReport::from_json(&json).unwrap();
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn table1_layout() {
        let prov = Provenance::new("h", 1);
        let mut reports = Vec::new();
        for b in ["b1", "b2"] {
            for (ds, n) in [("MSLDv2", 6), ("MSID", 4), ("MSLDv1", 2)] {
                for m in [1, 5, 10] {
                    reports.push(CellReport::from_summary(&summary(b, ds, n, m, 0.5), &prov));
                }
            }
        }
        let csv = table1_csv(&reports, &prov).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("backbone,MSLDv2 6-way 10-shot,MSLDv2 6-way 5-shot,MSLDv2 6-way 1-shot,MSID 4-way 10-shot"));
        assert_eq!(lines[1].split(',').count(), 1 + 9 + 3);
        assert!(lines[1].starts_with("b1,0.500\u{00B1}0.006"));
    }

    #[test]
    fn file_stems_are_distinct() {
        let a = CellSpec::in_domain("MSLD v2.0", "resnet50", 6, 10);
        let mut b = a.clone();
        b.query_dataset = "MSID".into();
        assert_eq!(
            cell_file_stem(&a),
            "grid_MSLD_v2_0_resnet50_6way_10shot_l2n"
        );
        assert_eq!(
            cell_file_stem(&b),
            "grid_MSLD_v2_0-to-MSID_resnet50_6way_10shot_l2n"
        );
    }
}
