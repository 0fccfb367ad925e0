//! Usage-intensity forecasting.
//!
//! A series is smoothed with a Nadaraya-Watson estimator (Gaussian kernel on
//! the week distance, bandwidth chosen by leave-one-out error over a fixed
//! grid), then averaged with a trailing rolling mean whose width depends on
//! how sparse similar series are. The last rolling value is the forecast.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{DatasetRecord, SplitConfig};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Largest admissible smoothing bandwidth, in weeks.
pub const MAX_BANDWIDTH: f64 = 30.0;

/// Share of a group's `inter_max` values that must fall below the window width.
pub const WINDOW_COVERAGE: f64 = 0.9;

/// Groups smaller than this use the corpus-wide window width.
pub const MIN_GROUP_SIZE: usize = 10;

/// `{0.5, 1.0, …, 30.0}`: every half week up to the cap.
pub fn default_bandwidth_grid() -> Vec<f64> {
    (1..=60).map(|k| 0.5 * k as f64).collect()
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("bandwidth grid must not be empty".into()));
    }
    if let Some(h) = grid.iter().find(|&&h| !(h > 0.0 && h <= MAX_BANDWIDTH)) {
        return Err(Error::Config(format!(
            "bandwidth {h} is outside (0, {MAX_BANDWIDTH}]"
        )));
    }
    Ok(())
}

fn clamp_to(values: &mut [f64], lo: f64, hi: f64) {
    for v in values {
        *v = v.clamp(lo, hi);
    }
}

fn range(y: &[f64]) -> (f64, f64) {
    y.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Nadaraya-Watson smoothing of `y` (observed at weeks 1..=len) evaluated at
/// every week, using every point including the one being estimated.
///
/// The result is a convex combination of `y`; it is clamped to
/// `[min(y), max(y)]` to keep rounding from stepping outside.
pub fn nw_smooth(y: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "bandwidth must be positive");
    let kernel: Vec<f64> = (0..y.len())
        .map(|d| (-((d * d) as f64) / (2.0 * h * h)).exp())
        .collect();
    let mut out: Vec<f64> = (0..y.len())
        .map(|x| {
            let (num, den) = y
                .iter()
                .enumerate()
                .fold((0.0, 0.0), |(num, den), (j, &yj)| {
                    let k = kernel[x.abs_diff(j)];
                    (num + yj * k, den + k)
                });
            num / den
        })
        .collect();
    let (lo, hi) = range(y);
    clamp_to(&mut out, lo, hi);
    out
}

/// Precomputed kernels and leave-one-out denominators for one series length
/// and bandwidth grid.
///
/// Leave-one-out weights are scaled by `exp(1/2h²)` (the nearest remaining
/// point is always one week away), which leaves every ratio unchanged but
/// keeps small bandwidths from underflowing to `0/0`.
#[derive(Debug, Clone)]
pub struct BandwidthSelector {
    len: usize,
    grid: Vec<f64>,
    loo_kernel: Vec<Vec<f64>>,
    loo_den: Vec<Vec<f64>>,
    smooth_kernel: Vec<Vec<f64>>,
}

impl BandwidthSelector {
    pub fn new(len: usize, grid: &[f64]) -> Result<Self> {
        validate_grid(grid)?;
        if len < 2 {
            return Err(Error::Config(format!(
                "bandwidth selection needs at least 2 points, got {len}"
            )));
        }
        let mut loo_kernel = Vec::with_capacity(grid.len());
        let mut loo_den = Vec::with_capacity(grid.len());
        let mut smooth_kernel = Vec::with_capacity(grid.len());
        for &h in grid {
            let two_h2 = 2.0 * h * h;
            let lk: Vec<f64> = (0..len)
                .map(|d| {
                    let d2 = (d * d) as f64;
                    if d == 0 {
                        0.0
                    } else {
                        (-(d2 - 1.0) / two_h2).exp()
                    }
                })
                .collect();
            let den = (0..len)
                .map(|i| (0..len).map(|j| lk[i.abs_diff(j)]).sum())
                .collect();
            smooth_kernel.push(
                (0..len)
                    .map(|d| (-((d * d) as f64) / two_h2).exp())
                    .collect(),
            );
            loo_kernel.push(lk);
            loo_den.push(den);
        }
        Ok(Self {
            len,
            grid: grid.to_vec(),
            loo_kernel,
            loo_den,
            smooth_kernel,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn check_len(&self, y: &[f64]) {
        assert_eq!(
            y.len(),
            self.len,
            "series length does not match the selector"
        );
    }

    /// `Σ_i (ŷ_h(x_i; all points but i) − y_i)²` for grid entry `gi`.
    pub fn loo_error(&self, y: &[f64], gi: usize) -> f64 {
        self.check_len(y);
        let used: Vec<(usize, f64)> = y
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, &v)| (j, v))
            .collect();
        let kernel = &self.loo_kernel[gi];
        let den = &self.loo_den[gi];
        (0..self.len)
            .map(|i| {
                let num: f64 = used.iter().map(|&(j, v)| v * kernel[i.abs_diff(j)]).sum();
                let r = num / den[i] - y[i];
                r * r
            })
            .sum()
    }

    /// Index of the bandwidth with the smallest leave-one-out error; ties go
    /// to the smallest bandwidth.
    pub fn select_index(&self, y: &[f64]) -> usize {
        self.check_len(y);
        let smallest = (0..self.grid.len())
            .min_by(|&a, &b| self.grid[a].total_cmp(&self.grid[b]))
            .expect("grid is nonempty");
        if y.iter().all(|&v| v == y[0]) {
            return smallest;
        }
        let mut best = smallest;
        let mut best_err = self.loo_error(y, smallest);
        for gi in 0..self.grid.len() {
            let err = self.loo_error(y, gi);
            if err < best_err || (err == best_err && self.grid[gi] < self.grid[best]) {
                best = gi;
                best_err = err;
            }
        }
        best
    }

    pub fn select(&self, y: &[f64]) -> f64 {
        self.grid[self.select_index(y)]
    }

    /// Same as [`nw_smooth`] with the grid's `gi`-th bandwidth.
    pub fn smooth(&self, y: &[f64], gi: usize) -> Vec<f64> {
        self.check_len(y);
        let kernel = &self.smooth_kernel[gi];
        let (lo, hi) = range(y);
        if lo == hi {
            return y.to_vec();
        }
        let mut out: Vec<f64> = (0..self.len)
            .map(|x| {
                let (num, den) = y
                    .iter()
                    .enumerate()
                    .fold((0.0, 0.0), |(num, den), (j, &yj)| {
                        let k = kernel[x.abs_diff(j)];
                        (num + yj * k, den + k)
                    });
                num / den
            })
            .collect();
        clamp_to(&mut out, lo, hi);
        out
    }
}

/// Bandwidth from `h_grid` minimizing the leave-one-out error of `y`.
pub fn select_bandwidth_loo(y: &[f64], h_grid: &[f64]) -> Result<f64> {
    Ok(BandwidthSelector::new(y.len(), h_grid)?.select(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingResult {
    pub smoothed: Vec<f64>,
    pub bandwidth_h: f64,
}

/// Trailing mean over the last `w` points, truncated (and divided by the
/// actual count) at the start of the series.
pub fn rolling_mean(y: &[f64], w: usize) -> Vec<f64> {
    assert!(w >= 1, "window must be at least 1");
    let (lo, hi) = range(y);
    let mut out: Vec<f64> = (0..y.len())
        .map(|k| {
            let start = (k + 1).saturating_sub(w);
            let window = &y[start..=k];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect();
    clamp_to(&mut out, lo, hi);
    out
}

/// Rolling-window width per `nb_peaks` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMap {
    pub by_peaks: BTreeMap<u32, usize>,
    /// Width from the rule applied to the whole corpus.
    pub global: usize,
}

impl WindowMap {
    pub fn width(&self, nb_peaks: u32) -> usize {
        self.by_peaks.get(&nb_peaks).copied().unwrap_or(self.global)
    }
}

/// Smallest integer `W ≥ 1` such that at least 90% of `values` are `< W`.
pub fn coverage_width(values: &[f64]) -> usize {
    if values.is_empty() {
        return 1;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // 1-based rank k of the smallest value that must still be covered.
    let k = ((WINDOW_COVERAGE * sorted.len() as f64) - 1e-9)
        .ceil()
        .max(1.0) as usize;
    let v = sorted[k - 1];
    (v.floor() as usize + 1).max(1)
}

/// Groups the corpus by `nb_peaks` and applies [`coverage_width`] to each
/// group's `inter_max`; groups with fewer than 10 members get the
/// corpus-wide width.
pub fn rolling_window_widths(corpus: &[FeatureVector]) -> Result<WindowMap> {
    if corpus.is_empty() {
        return Err(Error::Config("window widths need a nonempty corpus".into()));
    }
    let all: Vec<f64> = corpus.iter().map(|f| f.shape.inter_max).collect();
    let global = coverage_width(&all);
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for f in corpus {
        groups
            .entry(f.shape.nb_peaks)
            .or_default()
            .push(f.shape.inter_max);
    }
    let by_peaks = groups
        .into_iter()
        .map(|(peaks, vals)| {
            let w = if vals.len() < MIN_GROUP_SIZE {
                global
            } else {
                coverage_width(&vals)
            };
            (peaks, w)
        })
        .collect();
    Ok(WindowMap { by_peaks, global })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityForecast {
    pub smoothing: SmoothingResult,
    pub rolling: Vec<f64>,
    pub window_w: usize,
    /// Forecast weekly usage: the last rolling value.
    pub predicted_intensity: f64,
}

/// Runs smoothing, rolling mean and carry-forward over the observation window.
pub fn predict_intensity(
    record: &DatasetRecord,
    split: &SplitConfig,
    selector: &BandwidthSelector,
    windows: &WindowMap,
) -> IntensityForecast {
    let y = split.observed(&record.history);
    let gi = selector.select_index(y);
    let smoothed = selector.smooth(y, gi);
    let nb_peaks = y.iter().filter(|&&v| v > 0.0).count() as u32;
    let window_w = windows.width(nb_peaks);
    let rolling = rolling_mean(&smoothed, window_w);
    let last = *rolling.last().expect("observation window is nonempty");
    debug_assert!(
        last >= 0.0,
        "non-negative inputs give non-negative intensity"
    );
    IntensityForecast {
        smoothing: SmoothingResult {
            smoothed,
            bandwidth_h: selector.grid()[gi],
        },
        rolling,
        window_w,
        predicted_intensity: last.max(0.0),
    }
}

/// Forecasts for a whole corpus, in record order.
pub fn forecast_corpus(
    records: &[DatasetRecord],
    features: &[FeatureVector],
    split: &SplitConfig,
    h_grid: &[f64],
) -> Result<Vec<IntensityForecast>> {
    let selector = BandwidthSelector::new(split.observation_weeks, h_grid)?;
    let windows = rolling_window_widths(features)?;
    Ok(records
        .par_iter()
        .map(|r| predict_intensity(r, split, &selector, &windows))
        .collect())
}

/// CSV `dataset_id,bandwidth_h,window_w,predicted_intensity`.
pub fn write_intensity_dump<W: Write>(
    records: &[DatasetRecord],
    forecasts: &[IntensityForecast],
    out: W,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "dataset_id",
        "bandwidth_h",
        "window_w",
        "predicted_intensity",
    ])?;
    for (r, f) in records.iter().zip(forecasts) {
        w.write_record([
            r.id().to_string(),
            f.smoothing.bandwidth_h.to_string(),
            f.window_w.to_string(),
            f.predicted_intensity.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
