//! Popularity estimation: a boosted-tree classifier for "unused in the label
//! window", scored out-of-fold and rank-calibrated.

pub mod calibration;
pub mod gbdt;

pub use calibration::{fit_calibration, CalibrationMap};
pub use gbdt::{GbdtConfig, GbdtModel, TreeNode};

use serde::{Deserialize, Serialize};

use crate::catalog::DatasetRecord;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::hashing::fnv1a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopularityScore {
    /// Classifier P(label = 1).
    pub probability: f64,
    /// Calibrated score in `[0, 1]`; near 1 means likely unused.
    pub popularity: f64,
}

/// Splits record indices into two halves by a seeded hash of `dataset_id`.
///
/// Half sizes differ by at most one (the first half gets the extra record);
/// both halves list indices in ascending order.
pub fn split_halves(records: &[DatasetRecord], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut keyed: Vec<(u64, &str, usize)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (fnv1a(seed, r.id().as_bytes()), r.id(), i))
        .collect();
    keyed.sort_unstable();
    let cut = records.len().div_ceil(2);
    let mut a: Vec<usize> = keyed[..cut].iter().map(|k| k.2).collect();
    let mut b: Vec<usize> = keyed[cut..].iter().map(|k| k.2).collect();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

fn training_set(train: &[FeatureVector]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows = train.iter().map(FeatureVector::values).collect();
    let targets = train.iter().map(|f| f64::from(f.label.value())).collect();
    (rows, targets)
}

pub fn train_gbdt(train: &[FeatureVector], config: &GbdtConfig) -> Result<GbdtModel> {
    train_gbdt_with_log(train, config).map(|(m, _)| m)
}

/// Trains and also returns the mean training log-loss after every round.
pub fn train_gbdt_with_log(
    train: &[FeatureVector],
    config: &GbdtConfig,
) -> Result<(GbdtModel, Vec<f64>)> {
    let (rows, targets) = training_set(train);
    gbdt::train_with_log(
        &gbdt::TrainingSet {
            rows: &rows,
            targets: &targets,
            feature_names: FeatureVector::names(),
        },
        config,
    )
}

pub fn predict_probability(model: &GbdtModel, fv: &FeatureVector) -> Result<f64> {
    model.predict_proba(&fv.values())
}

/// Which half a dataset belongs to; its score comes from the other half's model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fold {
    A,
    B,
}

#[derive(Debug, Clone)]
pub struct CrossPrediction {
    /// Out-of-fold P(label = 1) per record, in record order.
    pub probability: Vec<f64>,
    pub fold: Vec<Fold>,
    /// Model trained on half A (scores half B).
    pub model_a: GbdtModel,
    /// Model trained on half B (scores half A).
    pub model_b: GbdtModel,
}

/// Two-fold cross prediction: each half is scored by the model trained on
/// the other half, so no dataset is scored by a model that saw it.
pub fn cross_predict(
    records: &[DatasetRecord],
    features: &[FeatureVector],
    fold_seed: u64,
    config: &GbdtConfig,
) -> Result<CrossPrediction> {
    if records.len() != features.len() {
        return Err(Error::Misaligned(format!(
            "{} records but {} feature vectors",
            records.len(),
            features.len()
        )));
    }
    if records.len() < 2 {
        return Err(Error::DegenerateTraining(
            "cross prediction needs at least two datasets".into(),
        ));
    }
    let (half_a, half_b) = split_halves(records, fold_seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| features[i].clone()).collect::<Vec<_>>();
    let (train_a, train_b) = (pick(&half_a), pick(&half_b));

    let (model_a, model_b) = rayon::join(
        || train_gbdt(&train_a, config),
        || train_gbdt(&train_b, config),
    );
    let describe = |e: Error, half: &str| match e {
        Error::DegenerateTraining(m) => Error::DegenerateTraining(format!("half {half}: {m}")),
        other => other,
    };
    let model_a = model_a.map_err(|e| describe(e, "A"))?;
    let model_b = model_b.map_err(|e| describe(e, "B"))?;

    let mut probability = vec![0.0; records.len()];
    let mut fold = vec![Fold::A; records.len()];
    for &i in &half_a {
        probability[i] = predict_probability(&model_b, &features[i])?;
    }
    for &i in &half_b {
        probability[i] = predict_probability(&model_a, &features[i])?;
        fold[i] = Fold::B;
    }
    Ok(CrossPrediction {
        probability,
        fold,
        model_a,
        model_b,
    })
}

/// Calibrates each fold against the label-1 probabilities scored by the same
/// model, then returns one score per record.
pub fn calibrate_folds(
    cross: &CrossPrediction,
    features: &[FeatureVector],
) -> Result<(Vec<PopularityScore>, CalibrationMap, CalibrationMap)> {
    let reference = |which: Fold| {
        let probs: Vec<f64> = cross
            .probability
            .iter()
            .zip(&cross.fold)
            .zip(features)
            .filter(|((_, &f), fv)| f == which && fv.label.is_unpopular())
            .map(|((&p, _), _)| p)
            .collect();
        fit_calibration(&probs)
    };
    let map_a = reference(Fold::A)?;
    let map_b = reference(Fold::B)?;
    let scores = cross
        .probability
        .iter()
        .zip(&cross.fold)
        .map(|(&p, &f)| PopularityScore {
            probability: p,
            popularity: match f {
                Fold::A => map_a.popularity(p),
                Fold::B => map_b.popularity(p),
            },
        })
        .collect();
    Ok((scores, map_a, map_b))
}
