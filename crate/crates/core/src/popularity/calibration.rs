//! Rank calibration of classifier probabilities into popularity.
//!
//! The map is the empirical CDF of the probabilities that the classifier gave
//! to datasets which really were unused, so those datasets end up uniformly
//! spread over `[0, 1]`. Values near 1 mean "likely unused".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CalibrationMap {
    reference: Vec<f64>,
}

impl CalibrationMap {
    /// Sorted reference probabilities.
    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    /// Midpoint ECDF: `(#{r < p} + ½·#{r = p}) / n`.
    pub fn popularity(&self, probability: f64) -> f64 {
        let below = self.reference.partition_point(|&r| r < probability);
        let not_above = self.reference.partition_point(|&r| r <= probability);
        (below as f64 + 0.5 * (not_above - below) as f64) / self.reference.len() as f64
    }
}

/// Builds the map from the probabilities of label-1 datasets.
pub fn fit_calibration(label1_probabilities: &[f64]) -> Result<CalibrationMap> {
    CalibrationMap::try_from(label1_probabilities.to_vec())
}

impl TryFrom<Vec<f64>> for CalibrationMap {
    type Error = Error;

    fn try_from(mut reference: Vec<f64>) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::DegenerateTraining(
                "calibration needs at least one label-1 probability".into(),
            ));
        }
        if let Some(bad) = reference.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!(
                "probability {bad} is outside [0, 1]"
            )));
        }
        reference.sort_by(f64::total_cmp);
        Ok(Self { reference })
    }
}

impl From<CalibrationMap> for Vec<f64> {
    fn from(m: CalibrationMap) -> Self {
        m.reference
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_rejected() {
        assert!(fit_calibration(&[]).is_err());
        assert!(fit_calibration(&[0.2, f64::NAN]).is_err());
    }

    #[test]
    fn singleton() {
        let m = fit_calibration(&[0.3]).unwrap();
        assert_eq!(m.popularity(0.1), 0.0);
        assert_eq!(m.popularity(0.3), 0.5);
        assert_eq!(m.popularity(0.9), 1.0);
    }

    #[test]
    fn hand_counted_ecdf() {
        let m = fit_calibration(&[0.8, 0.2, 0.6, 0.4]).unwrap();
        assert_eq!(m.reference(), &[0.2, 0.4, 0.6, 0.8]);
        assert_eq!(m.popularity(0.5), 0.5);
        assert_eq!(m.popularity(0.0), 0.0);
        assert_eq!(m.popularity(1.0), 1.0);
        // Ties take the midpoint: 0.4 has one below, one equal.
        assert_eq!(m.popularity(0.4), 1.5 / 4.0);
    }

    #[test]
    fn reference_maps_to_uniform_grid() {
        let probs: Vec<f64> = (0..50)
            .map(|i| ((i * 37) % 50) as f64 / 50.0 + 0.001)
            .collect();
        let m = fit_calibration(&probs).unwrap();
        let n = probs.len() as f64;
        for (i, &r) in m.reference().iter().enumerate() {
            assert!((m.popularity(r) - (i as f64 + 0.5) / n).abs() < 1e-15);
        }
    }

    #[test]
    fn serializes_as_sorted_array() {
        let m = fit_calibration(&[0.9, 0.1]).unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), "[0.1,0.9]");
        let back: CalibrationMap = serde_json::from_str("[0.7,0.2]").unwrap();
        assert_eq!(back.reference(), &[0.2, 0.7]);
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(
            refs in prop::collection::vec(0.0f64..=1.0, 1..60),
            a in 0.0f64..=1.0,
            b in 0.0f64..=1.0,
        ) {
            let m = fit_calibration(&refs).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m.popularity(lo) <= m.popularity(hi));
            prop_assert!((0.0..=1.0).contains(&m.popularity(a)));
            prop_assert!(m.reference().windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
