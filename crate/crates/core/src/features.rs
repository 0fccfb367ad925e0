//! Popularity labels and usage-shape features.
//!
//! Everything except the label is computed from the observation window only;
//! the label comes from the trailing label window.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::{DatasetMetadata, DatasetRecord, SplitConfig, UsageHistory};
use crate::error::Result;
use crate::hashing::{fnv1a, unit_interval};

/// Ground-truth class of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    /// Used at least once in the label window (value 0).
    Popular,
    /// Unused throughout the label window (value 1).
    Unpopular,
}

impl Label {
    pub fn value(self) -> u8 {
        match self {
            Label::Popular => 0,
            Label::Unpopular => 1,
        }
    }

    pub fn is_unpopular(self) -> bool {
        self == Label::Unpopular
    }
}

/// 1 iff every count in weeks `observation_weeks+1..=total_weeks` is zero.
pub fn compute_label(history: &UsageHistory, split: &SplitConfig) -> Label {
    if split.held_out(history).iter().all(|&c| c == 0.0) {
        Label::Unpopular
    } else {
        Label::Popular
    }
}

/// Shape descriptors of a sparse weekly usage series.
///
/// Weeks are 1-based. With `U` the weeks with nonzero usage and `y_t` their
/// counts: the `inter_*` features describe the gaps between consecutive
/// elements of `U`, and the moment features are
/// `mass_center = Σt·y/Σy`, `mass_center_sqrt = Σt·√y/Σ√y`,
/// `mass_moment = Σt²·y/Σy` and `r_moment = Σt·y²/Σy²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeFeatures {
    pub nb_peaks: u32,
    pub last_zeros: u32,
    pub inter_max: f64,
    pub inter_mean: f64,
    pub inter_std: f64,
    pub inter_rel: f64,
    pub mass_center: f64,
    pub mass_center_sqrt: f64,
    pub mass_moment: f64,
    pub r_moment: f64,
}

impl ShapeFeatures {
    pub const NAMES: [&'static str; 10] = [
        "nb_peaks",
        "last_zeros",
        "inter_max",
        "inter_mean",
        "inter_std",
        "inter_rel",
        "mass_center",
        "mass_center_sqrt",
        "mass_moment",
        "r_moment",
    ];

    /// Computes the features of `window`, whose first element is week 1.
    ///
    /// An unused window gives `last_zeros = window.len()` and zeros elsewhere;
    /// a single use gives zero gap features.
    pub fn of(window: &[f64]) -> Self {
        let used: Vec<usize> = window
            .iter()
            .enumerate()
            .filter(|(_, &y)| y > 0.0)
            .map(|(i, _)| i + 1)
            .collect();
        let len = window.len() as u32;
        let Some(&last) = used.last() else {
            return Self {
                nb_peaks: 0,
                last_zeros: len,
                inter_max: 0.0,
                inter_mean: 0.0,
                inter_std: 0.0,
                inter_rel: 0.0,
                mass_center: 0.0,
                mass_center_sqrt: 0.0,
                mass_moment: 0.0,
                r_moment: 0.0,
            };
        };

        let gaps: Vec<f64> = used.windows(2).map(|p| (p[1] - p[0]) as f64).collect();
        let (inter_max, inter_mean, inter_std) = if gaps.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            let n = gaps.len() as f64;
            let mean = gaps.iter().sum::<f64>() / n;
            let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
            (gaps.iter().copied().fold(0.0, f64::max), mean, var.sqrt())
        };
        let inter_rel = if inter_mean > 0.0 {
            inter_std / inter_mean
        } else {
            0.0
        };

        let weighted = |coord: fn(f64) -> f64, mass: fn(f64) -> f64| {
            let (num, den) = used.iter().fold((0.0, 0.0), |(num, den), &t| {
                let m = mass(window[t - 1]);
                (num + coord(t as f64) * m, den + m)
            });
            num / den
        };

        Self {
            nb_peaks: used.len() as u32,
            last_zeros: len - last as u32,
            inter_max,
            inter_mean,
            inter_std,
            inter_rel,
            mass_center: weighted(|t| t, |y| y),
            mass_center_sqrt: weighted(|t| t, f64::sqrt),
            mass_moment: weighted(|t| t * t, |y| y),
            r_moment: weighted(|t| t, |y| y * y),
        }
    }

    pub fn values(&self) -> [f64; 10] {
        [
            f64::from(self.nb_peaks),
            f64::from(self.last_zeros),
            self.inter_max,
            self.inter_mean,
            self.inter_std,
            self.inter_rel,
            self.mass_center,
            self.mass_center_sqrt,
            self.mass_moment,
            self.r_moment,
        ]
    }
}

/// Seed of the categorical hash. Changing it changes every encoded model input.
pub const CATEGORY_HASH_SEED: u64 = 0x00d1_5c0b_a11a_57ed;

/// Names of the encoded metadata columns, in [`encode_metadata`] order.
pub const METADATA_FEATURE_NAMES: [&str; 9] = [
    "creation_week",
    "replica_size_gb",
    "replicas_on_disk",
    "total_disk_gb",
    "origin",
    "configuration",
    "file_type",
    "data_type",
    "event_type",
];

/// Ordinal code in `[0, 1)` of a categorical value.
pub fn encode_category(value: &str) -> f64 {
    unit_interval(fnv1a(CATEGORY_HASH_SEED, value.as_bytes()))
}

/// Numeric metadata passes through; categorical fields are hash-encoded.
///
/// First/last usage weeks are not encoded: a catalogue snapshot taken after
/// the label window would reveal the label through them.
pub fn encode_metadata(m: &DatasetMetadata) -> Vec<f64> {
    vec![
        f64::from(m.creation_week),
        m.replica_size_gb,
        f64::from(m.replicas_on_disk),
        m.total_disk_gb(),
        encode_category(&m.origin),
        encode_category(&m.configuration),
        encode_category(&m.file_type),
        encode_category(m.data_type.as_str()),
        encode_category(&m.event_type),
    ]
}

/// Model input for one dataset plus its ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub shape: ShapeFeatures,
    pub encoded_metadata: Vec<f64>,
    pub label: Label,
}

impl FeatureVector {
    /// Shape features followed by the encoded metadata.
    pub fn values(&self) -> Vec<f64> {
        let mut v = self.shape.values().to_vec();
        v.extend_from_slice(&self.encoded_metadata);
        v
    }

    /// Column names matching [`FeatureVector::values`].
    pub fn names() -> Vec<String> {
        ShapeFeatures::NAMES
            .iter()
            .chain(METADATA_FEATURE_NAMES.iter())
            .map(|s| s.to_string())
            .collect()
    }
}

pub fn extract_features(
    history: &UsageHistory,
    metadata: &DatasetMetadata,
    split: &SplitConfig,
) -> FeatureVector {
    FeatureVector {
        shape: ShapeFeatures::of(split.observed(history)),
        encoded_metadata: encode_metadata(metadata),
        label: compute_label(history, split),
    }
}

/// Features for a whole corpus, in record order.
pub fn extract_corpus(records: &[DatasetRecord], split: &SplitConfig) -> Vec<FeatureVector> {
    use rayon::prelude::*;
    records
        .par_iter()
        .map(|r| extract_features(&r.history, &r.metadata, split))
        .collect()
}

/// Writes a feature dump: `dataset_id`, every feature column, then `label`.
pub fn write_feature_dump<W: Write>(
    records: &[DatasetRecord],
    features: &[FeatureVector],
    out: W,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = vec!["dataset_id".to_string()];
    header.extend(FeatureVector::names());
    header.push("label".into());
    w.write_record(&header)?;
    for (r, fv) in records.iter().zip(features) {
        let mut row = vec![r.id().to_string()];
        row.extend(fv.values().iter().map(f64::to_string));
        row.push(fv.label.value().to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
