//! Seeded synthetic catalogues standing in for a real file catalogue.
//!
//! Two populations are generated. "Cold" datasets follow an exponentially
//! decaying weekly rate that is cut off inside the observation window, so
//! they are never used in the label window. "Hot" datasets keep a stationary
//! rate with occasional bursts and are guaranteed at least one use in the
//! label window. A third of the hot population is sparse (a use every few
//! months), which is what makes recency-only eviction err.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use super::{DataType, DatasetMetadata, DatasetRecord, SplitConfig, UsageHistory};
use crate::error::{Error, Result};

/// Population mix of a synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopularMixConfig {
    /// Fraction of datasets never used in the label window.
    pub cold_fraction: f64,
    /// Fraction of datasets still in use in the label window.
    pub hot_fraction: f64,
}

impl Default for PopularMixConfig {
    fn default() -> Self {
        Self {
            cold_fraction: 0.5,
            hot_fraction: 0.5,
        }
    }
}

impl PopularMixConfig {
    /// Mix with the given cold fraction; the rest is hot.
    pub fn with_cold_fraction(cold_fraction: f64) -> Self {
        Self {
            cold_fraction,
            hot_fraction: 1.0 - cold_fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f.is_finite() && (0.0..=1.0).contains(&f);
        if !ok(self.cold_fraction) || !ok(self.hot_fraction) {
            return Err(Error::Config(format!(
                "mix fractions must lie in [0, 1], got cold={} hot={}",
                self.cold_fraction, self.hot_fraction
            )));
        }
        if (self.cold_fraction + self.hot_fraction - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "mix fractions must sum to 1, got cold={} + hot={}",
                self.cold_fraction, self.hot_fraction
            )));
        }
        Ok(())
    }
}

const ORIGINS: [&str; 4] = ["Stripping", "Reconstruction", "Simulation", "WorkingGroup"];
const CONFIGURATIONS: [&str; 6] = [
    "Collision11",
    "Collision12",
    "Collision15",
    "Collision16",
    "Sim08",
    "Sim09",
];
const FILE_TYPES: [&str; 5] = ["DST", "MDST", "ALLSTREAMS.DST", "LDST", "RDST"];
const EVENT_TYPES: [&str; 8] = [
    "90000000", "11102003", "12143001", "13104011", "27163002", "30000000", "15164101", "42112001",
];

/// Share of the hot population that is used only every few months.
const SPARSE_HOT_SHARE: f64 = 0.3;
/// Median weekly accesses of a steadily used dataset. Busy production
/// datasets are read hundreds of times a week.
const STEADY_HOT_MEDIAN_RATE: f64 = 25.0;
const STEADY_HOT_SIGMA: f64 = 1.2;

#[derive(Clone, Copy)]
enum Kind {
    Cold,
    SteadyHot,
    SparseHot,
}

/// Generates `n` datasets with 104-week histories split 78/26.
pub fn generate_synthetic_corpus(
    n: usize,
    seed: u64,
    mix: &PopularMixConfig,
) -> Result<Vec<DatasetRecord>> {
    generate_synthetic_corpus_with(n, seed, mix, &SplitConfig::default())
}

/// Generates `n` datasets for an arbitrary observation/label split.
///
/// The number of cold datasets is exactly `round(n * cold_fraction)`; the
/// order of the two populations is shuffled.
pub fn generate_synthetic_corpus_with(
    n: usize,
    seed: u64,
    mix: &PopularMixConfig,
    split: &SplitConfig,
) -> Result<Vec<DatasetRecord>> {
    if n == 0 {
        return Err(Error::Config("corpus size n must be at least 1".into()));
    }
    mix.validate()?;
    split.validate()?;
    if split.observation_weeks < 8 {
        return Err(Error::Config(
            "synthetic corpora need an observation window of at least 8 weeks".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cold = (n as f64 * mix.cold_fraction).round() as usize;
    let mut kinds: Vec<Kind> = (0..n)
        .map(|i| {
            if i < n_cold {
                Kind::Cold
            } else if rng.random::<f64>() < SPARSE_HOT_SHARE {
                Kind::SparseHot
            } else {
                Kind::SteadyHot
            }
        })
        .collect();
    kinds.shuffle(&mut rng);

    let size_dist = LogNormal::new(50f64.ln(), 1.0).expect("valid lognormal");
    let width = n.to_string().len().max(6);
    Ok(kinds
        .into_iter()
        .enumerate()
        .map(|(i, kind)| {
            let id = format!("DS{:0width$}", i + 1);
            generate_one(&mut rng, id, kind, split, &size_dist)
        })
        .collect())
}

fn pick<'a, R: Rng>(rng: &mut R, vocab: &[&'a str]) -> &'a str {
    vocab[rng.random_range(0..vocab.len())]
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

fn poisson<R: Rng>(rng: &mut R, lambda: f64) -> f64 {
    if lambda < 1e-12 {
        return 0.0;
    }
    Poisson::new(lambda).map_or(0.0, |d| d.sample(rng))
}

fn generate_one<R: Rng>(
    rng: &mut R,
    dataset_id: String,
    kind: Kind,
    split: &SplitConfig,
    size_dist: &LogNormal<f64>,
) -> DatasetRecord {
    let obs = split.observation_weeks;
    let total = split.total_weeks();
    // Average fraction of a dataset's files touched by one access.
    let access_fraction = round_to(rng.random_range(0.2..=1.0), 2);
    let mut counts = vec![0.0; total];

    // `creation` and the cutoff are 1-based weeks.
    let creation = match kind {
        Kind::Cold => rng.random_range(1..=obs * 2 / 3),
        _ => rng.random_range(1..=obs * 9 / 10),
    };

    match kind {
        Kind::Cold => {
            let cutoff = rng.random_range((creation + 2).min(obs - 2)..=obs - 2);
            let initial: f64 = LogNormal::new(4f64.ln(), 1.0).unwrap().sample(rng);
            let decay_weeks = rng.random_range(4.0..30.0);
            for week in creation..=cutoff {
                let rate = initial * (-((week - creation) as f64) / decay_weeks).exp();
                counts[week - 1] = poisson(rng, rate);
            }
            if counts[creation - 1..cutoff].iter().all(|&c| c == 0.0) {
                counts[creation - 1] = 1.0;
            }
        }
        Kind::SteadyHot | Kind::SparseHot => {
            let rate: f64 = match kind {
                Kind::SparseHot => rng.random_range(0.015..0.08),
                _ => LogNormal::new(STEADY_HOT_MEDIAN_RATE.ln(), STEADY_HOT_SIGMA)
                    .unwrap()
                    .sample(rng),
            };
            let mut burst_left = 0usize;
            let mut burst_gain = 1.0;
            for week in creation..=total {
                if burst_left == 0 && rng.random::<f64>() < 0.03 {
                    burst_left = rng.random_range(1..=3);
                    burst_gain = rng.random_range(3.0..10.0);
                }
                let gain = if burst_left > 0 {
                    burst_left -= 1;
                    burst_gain
                } else {
                    1.0
                };
                counts[week - 1] = poisson(rng, rate * gain);
            }
            if counts[creation - 1..obs].iter().all(|&c| c == 0.0) {
                let week = rng.random_range(creation..=obs);
                counts[week - 1] = 1.0;
            }
            if counts[obs..].iter().all(|&c| c == 0.0) {
                let week = rng.random_range(obs + 1..=total);
                counts[week - 1] = 1.0;
            }
        }
    }
    for c in &mut counts {
        *c = round_to(*c * access_fraction, 3);
    }

    let history = UsageHistory::new(counts).expect("generated counts are finite and non-negative");
    let metadata = DatasetMetadata {
        dataset_id,
        origin: pick(rng, &ORIGINS).to_string(),
        configuration: pick(rng, &CONFIGURATIONS).to_string(),
        file_type: pick(rng, &FILE_TYPES).to_string(),
        data_type: if rng.random::<f64>() < 0.4 {
            DataType::Mc
        } else {
            DataType::Real
        },
        event_type: pick(rng, &EVENT_TYPES).to_string(),
        creation_week: creation as i32,
        first_usage_week: history.first_used_week().map(|w| w as i32),
        last_usage_week: history.last_used_week().map(|w| w as i32),
        replica_size_gb: round_to(size_dist.sample(rng).max(0.1), 2),
        replicas_on_disk: rng.random_range(1..=4),
    };
    DatasetRecord { metadata, history }
}
