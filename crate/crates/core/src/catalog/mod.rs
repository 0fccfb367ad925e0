//! Dataset data model: weekly usage histories plus catalogue metadata.
//!
//! Week numbers are 1-based everywhere they are reported (week 1 is the
//! oldest); histories are stored as plain 0-based vectors.

mod io;
mod synth;

pub use io::{parse_catalog, parse_catalog_weeks, read_catalog, write_catalog, CatalogFormat};
pub use synth::{generate_synthetic_corpus, generate_synthetic_corpus_with, PopularMixConfig};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of a usage history: two years of weekly counters.
pub const DEFAULT_TOTAL_WEEKS: usize = 104;

/// Relative tolerance for `total_disk_gb == replica_size_gb * replicas_on_disk`.
pub const DISK_TOTAL_RTOL: f64 = 1e-6;

/// Weekly usage counters of one dataset.
///
/// A count is the number of files accessed by jobs during the week divided by
/// the number of files in the dataset, so it is real-valued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UsageHistory {
    counts: Vec<f64>,
}

impl UsageHistory {
    /// Builds a history, rejecting negative or non-finite counts.
    pub fn new(counts: Vec<f64>) -> std::result::Result<Self, String> {
        if let Some((i, c)) = counts
            .iter()
            .enumerate()
            .find(|(_, c)| !c.is_finite() || **c < 0.0)
        {
            return Err(format!("week {} has invalid count {c}", i + 1));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Counts for weeks `first..=last` (1-based, inclusive).
    pub fn weeks(&self, first: usize, last: usize) -> &[f64] {
        &self.counts[first - 1..last]
    }

    /// 1-based week of the first nonzero count.
    pub fn first_used_week(&self) -> Option<usize> {
        self.counts.iter().position(|&c| c > 0.0).map(|i| i + 1)
    }

    /// 1-based week of the last nonzero count.
    pub fn last_used_week(&self) -> Option<usize> {
        self.counts.iter().rposition(|&c| c > 0.0).map(|i| i + 1)
    }
}

impl TryFrom<Vec<f64>> for UsageHistory {
    type Error = String;

    fn try_from(counts: Vec<f64>) -> std::result::Result<Self, String> {
        Self::new(counts)
    }
}

impl From<UsageHistory> for Vec<f64> {
    fn from(h: UsageHistory) -> Self {
        h.counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Real,
    Mc,
}

impl DataType {
    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Real => "real",
            DataType::Mc => "mc",
        }
    }
}

impl std::str::FromStr for DataType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "real" => Ok(DataType::Real),
            "mc" => Ok(DataType::Mc),
            other => Err(format!("expected `real` or `mc`, got `{other}`")),
        }
    }
}

/// Catalogue metadata of one dataset. Categorical fields are open
/// vocabularies; they are encoded later by the features module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub dataset_id: String,
    pub origin: String,
    pub configuration: String,
    pub file_type: String,
    pub data_type: DataType,
    pub event_type: String,
    pub creation_week: i32,
    /// `None` when the dataset has never been used.
    pub first_usage_week: Option<i32>,
    pub last_usage_week: Option<i32>,
    /// Size of a single replica, GB.
    pub replica_size_gb: f64,
    pub replicas_on_disk: u32,
}

impl DatasetMetadata {
    /// Disk space occupied by all replicas, GB.
    pub fn total_disk_gb(&self) -> f64 {
        self.replica_size_gb * f64::from(self.replicas_on_disk)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Error::Invariant {
            dataset: self.dataset_id.clone(),
            field: field.to_string(),
            message,
        };
        if self.dataset_id.is_empty() {
            return Err(bad("dataset_id", "must not be empty".into()));
        }
        if !(self.replica_size_gb.is_finite() && self.replica_size_gb > 0.0) {
            return Err(bad(
                "replica_size_gb",
                format!("must be positive, got {}", self.replica_size_gb),
            ));
        }
        if self.replicas_on_disk < 1 {
            return Err(bad("replicas_on_disk", "must be at least 1".into()));
        }
        match (self.first_usage_week, self.last_usage_week) {
            (Some(first), Some(last)) => {
                if self.creation_week > first {
                    return Err(bad(
                        "first_usage_week",
                        format!("{first} precedes creation_week {}", self.creation_week),
                    ));
                }
                if first > last {
                    return Err(bad(
                        "last_usage_week",
                        format!("{last} precedes first_usage_week {first}"),
                    ));
                }
            }
            (None, None) => {}
            _ => {
                return Err(bad(
                    "last_usage_week",
                    "first_usage_week and last_usage_week must both be set or both be empty".into(),
                ))
            }
        }
        Ok(())
    }

    /// Checks a catalogue-supplied `total_disk_gb` against the replica size
    /// and count.
    pub fn check_total_disk(&self, total_disk_gb: f64) -> Result<()> {
        let expected = self.total_disk_gb();
        if (total_disk_gb - expected).abs() > DISK_TOTAL_RTOL * expected.abs() {
            return Err(Error::Invariant {
                dataset: self.dataset_id.clone(),
                field: "total_disk_gb".into(),
                message: format!(
                    "{total_disk_gb} != replica_size_gb * replicas_on_disk = {expected}"
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub metadata: DatasetMetadata,
    pub history: UsageHistory,
}

impl DatasetRecord {
    pub fn id(&self) -> &str {
        &self.metadata.dataset_id
    }
}

/// How a history is divided into the decision-time observation window and the
/// trailing window that supplies ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub observation_weeks: usize,
    pub label_weeks: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            observation_weeks: 78,
            label_weeks: 26,
        }
    }
}

impl SplitConfig {
    pub fn total_weeks(&self) -> usize {
        self.observation_weeks + self.label_weeks
    }

    pub fn validate(&self) -> Result<()> {
        if self.observation_weeks < 1 || self.label_weeks < 1 {
            return Err(Error::Config(format!(
                "observation_weeks ({}) and label_weeks ({}) must both be at least 1",
                self.observation_weeks, self.label_weeks
            )));
        }
        Ok(())
    }

    /// Observation-window counts (weeks `1..=observation_weeks`).
    pub fn observed<'a>(&self, history: &'a UsageHistory) -> &'a [f64] {
        history.weeks(1, self.observation_weeks)
    }

    /// Label-window counts (weeks `observation_weeks+1..=total_weeks`).
    pub fn held_out<'a>(&self, history: &'a UsageHistory) -> &'a [f64] {
        history.weeks(self.observation_weeks + 1, self.total_weeks())
    }
}

/// Validates every record and the uniqueness of dataset ids.
pub fn validate_corpus(records: &[DatasetRecord], split: &SplitConfig) -> Result<()> {
    split.validate()?;
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        r.metadata.validate()?;
        if r.history.len() != split.total_weeks() {
            return Err(Error::Invariant {
                dataset: r.id().to_string(),
                field: "weeks".into(),
                message: format!(
                    "expected {} weekly counts, found {}",
                    split.total_weeks(),
                    r.history.len()
                ),
            });
        }
        if !seen.insert(r.id()) {
            return Err(Error::DuplicateId(r.id().to_string()));
        }
    }
    Ok(())
}
