//! End-to-end scoring: features, out-of-fold popularity, intensity forecasts.
//!
//! Everything here is independent of the cost parameters, so one
//! [`ScoredCorpus`] serves any number of placement runs.

use serde::{Deserialize, Serialize};

use crate::catalog::{validate_corpus, DatasetRecord, SplitConfig};
use crate::error::Result;
use crate::features::{extract_corpus, FeatureVector, Label};
use crate::hashing::derive_seed;
use crate::intensity::{default_bandwidth_grid, forecast_corpus, IntensityForecast};
use crate::placement::{optimize_plan, CostParams, PlacementInputs, PlacementPlan};
use crate::popularity::{
    calibrate_folds, cross_predict, CalibrationMap, CrossPrediction, GbdtConfig, PopularityScore,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub split: SplitConfig,
    pub gbdt: GbdtConfig,
    pub bandwidth_grid: Vec<f64>,
    /// Root seed; the fold partition uses `derive_seed(seed, "split")`.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            split: SplitConfig::default(),
            gbdt: GbdtConfig::default(),
            bandwidth_grid: default_bandwidth_grid(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoredCorpus {
    pub ids: Vec<String>,
    pub features: Vec<FeatureVector>,
    pub cross: CrossPrediction,
    pub scores: Vec<PopularityScore>,
    pub calibration: (CalibrationMap, CalibrationMap),
    pub forecasts: Vec<IntensityForecast>,
    pub sizes: Vec<f64>,
    popularity: Vec<f64>,
    intensity: Vec<f64>,
    labels: Vec<Label>,
}

impl ScoredCorpus {
    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn inputs(&self) -> PlacementInputs<'_> {
        PlacementInputs {
            ids: &self.ids,
            popularity: &self.popularity,
            intensity: &self.intensity,
            size_gb: &self.sizes,
            labels: &self.labels,
        }
    }

    pub fn optimize(&self, costs: &CostParams) -> Result<PlacementPlan> {
        optimize_plan(&self.inputs(), costs)
    }
}

pub fn score_corpus(records: &[DatasetRecord], config: &PipelineConfig) -> Result<ScoredCorpus> {
    validate_corpus(records, &config.split)?;
    config.gbdt.validate()?;
    let features = extract_corpus(records, &config.split);
    let gbdt = GbdtConfig {
        seed: derive_seed(config.seed, "gbdt"),
        ..config.gbdt.clone()
    };
    let cross = cross_predict(records, &features, derive_seed(config.seed, "split"), &gbdt)?;
    let (scores, map_a, map_b) = calibrate_folds(&cross, &features)?;
    let forecasts = forecast_corpus(records, &features, &config.split, &config.bandwidth_grid)?;
    Ok(ScoredCorpus {
        ids: records.iter().map(|r| r.id().to_string()).collect(),
        popularity: scores.iter().map(|s| s.popularity).collect(),
        intensity: forecasts.iter().map(|f| f.predicted_intensity).collect(),
        labels: features.iter().map(|f| f.label).collect(),
        sizes: records.iter().map(|r| r.metadata.replica_size_gb).collect(),
        features,
        cross,
        scores,
        calibration: (map_a, map_b),
        forecasts,
    })
}
