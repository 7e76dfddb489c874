use serde::{Deserialize, Serialize};

use super::DEFAULT_IMAGE_SIZE;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub name: String,
    pub count: usize,
}

/// Class inventory of a dataset together with its extraction settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset: String,
    pub classes: Vec<ClassCount>,
    pub image_size: u32,
    pub preprocess: String,
}

impl DatasetManifest {
    fn published(dataset: &str, classes: &[(&str, usize)]) -> Self {
        Self {
            dataset: dataset.to_string(),
            classes: classes
                .iter()
                .map(|&(name, count)| ClassCount {
                    name: name.to_string(),
                    count,
                })
                .collect(),
            image_size: DEFAULT_IMAGE_SIZE,
            preprocess: "resize-only".to_string(),
        }
    }

    /// MSLD v1.0: Monkeypox against a pre-merged Others class.
    pub fn msld_v1() -> Self {
        Self::published("MSLDv1", &[("Monkeypox", 102), ("Others", 126)])
    }

    /// MSID, four classes.
    pub fn msid() -> Self {
        Self::published(
            "MSID",
            &[
                ("Monkeypox", 279),
                ("Chickenpox", 107),
                ("Measles", 91),
                ("Healthy", 293),
            ],
        )
    }

    /// MSLD v2.0, six classes.
    pub fn msld_v2() -> Self {
        Self::published(
            "MSLDv2",
            &[
                ("Monkeypox", 284),
                ("Chickenpox", 75),
                ("Measles", 55),
                ("Cowpox", 66),
                ("HFMD", 161),
                ("Healthy", 114),
            ],
        )
    }

    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.count).collect()
    }
}
