//! Disk/tape placement by minimizing a storage-plus-miss cost.
//!
//! For dataset `i` with replica size `S`, forecast intensity `I` and label:
//!
//! ```text
//! kept on disk with Rp replicas:  c_disk · S · (Rp + α·I/Rp)
//! removed to tape:                c_tape · S  +  c_miss · S · [label = popular]
//! ```
//!
//! The loss is the sum over datasets. Removal is decided by one popularity
//! threshold (remove iff popularity ≥ threshold); replica counts minimize the
//! bracket independently per dataset.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::DatasetRecord;
use crate::error::{Error, Result};
use crate::features::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// Cost of 1 GB of disk.
    pub c_disk: f64,
    /// Cost of 1 GB of tape.
    pub c_tape: f64,
    /// Cost of restoring 1 GB from tape.
    pub c_miss: f64,
    /// Penalty weight for serving a busy dataset from few replicas.
    pub alpha: f64,
    pub max_replicas: u32,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            c_disk: 100.0,
            c_tape: 1.0,
            c_miss: 2000.0,
            alpha: 0.01,
            max_replicas: 4,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_disk", self.c_disk),
            ("c_tape", self.c_tape),
            ("c_miss", self.c_miss),
            ("alpha", self.alpha),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.max_replicas < 1 {
            return Err(Error::Config("max_replicas must be at least 1".into()));
        }
        Ok(())
    }
}

/// `Rp + α·I/Rp`.
pub fn replica_bracket(replicas: u32, alpha: f64, intensity: f64) -> f64 {
    let r = f64::from(replicas);
    r + alpha * intensity / r
}

/// Replica count in `1..=max_replicas` minimizing `Rp + α·I/Rp`.
///
/// The continuous minimizer is `√(α·I)`; the integer optimum is one of its
/// two integer neighbours. Exact ties go to the smaller count.
pub fn optimal_replicas(intensity: f64, alpha: f64, max_replicas: u32) -> u32 {
    let max_replicas = max_replicas.max(1);
    let root = (alpha * intensity).max(0.0).sqrt();
    let lo = (root.floor() as u32).clamp(1, max_replicas);
    let candidates = [
        lo.saturating_sub(1).max(1),
        lo,
        lo.saturating_add(1),
        lo.saturating_add(2),
    ];
    let mut best = lo;
    let mut best_val = replica_bracket(lo, alpha, intensity);
    for r in candidates {
        if r < 1 || r > max_replicas {
            continue;
        }
        let v = replica_bracket(r, alpha, intensity);
        if v < best_val || (v == best_val && r < best) {
            best = r;
            best_val = v;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementDecision {
    pub dataset_id: String,
    pub on_disk: bool,
    /// Disk replicas; 0 when the dataset is removed.
    pub replicas: u32,
    /// Removed although it will be used again.
    pub miss: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub decisions: Vec<PlacementDecision>,
    /// Popularity threshold; `None` for plans not driven by popularity.
    pub threshold: Option<f64>,
    pub total_loss: Option<f64>,
}

impl PlacementPlan {
    pub fn removed(&self) -> usize {
        self.decisions.iter().filter(|d| !d.on_disk).count()
    }
}

/// Threshold that keeps every dataset (popularities never exceed 1).
pub const KEEP_ALL_THRESHOLD: f64 = 1.0 + f64::EPSILON;

/// Per-dataset inputs of the optimizer, aligned by index.
#[derive(Debug, Clone, Copy)]
pub struct PlacementInputs<'a> {
    pub ids: &'a [String],
    pub popularity: &'a [f64],
    pub intensity: &'a [f64],
    pub size_gb: &'a [f64],
    pub labels: &'a [Label],
}

impl PlacementInputs<'_> {
    fn len(&self) -> usize {
        self.ids.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        for (name, len) in [
            ("popularity", self.popularity.len()),
            ("intensity", self.intensity.len()),
            ("size_gb", self.size_gb.len()),
            ("labels", self.labels.len()),
        ] {
            if len != n {
                return Err(Error::Misaligned(format!(
                    "{n} datasets but {len} {name} values"
                )));
            }
        }
        for i in 0..n {
            let bad = |field: &str, message: String| Error::Invariant {
                dataset: self.ids[i].clone(),
                field: field.into(),
                message,
            };
            if !(0.0..=1.0).contains(&self.popularity[i]) {
                return Err(bad(
                    "popularity",
                    format!("{} is outside [0, 1]", self.popularity[i]),
                ));
            }
            if !(self.intensity[i].is_finite() && self.intensity[i] >= 0.0) {
                return Err(bad(
                    "intensity",
                    format!("{} is not >= 0", self.intensity[i]),
                ));
            }
            if !(self.size_gb[i].is_finite() && self.size_gb[i] > 0.0) {
                return Err(bad("size_gb", format!("{} is not > 0", self.size_gb[i])));
            }
        }
        Ok(())
    }
}

/// Loss contribution of one dataset.
fn dataset_loss(
    on_disk: bool,
    replicas: u32,
    size: f64,
    intensity: f64,
    label: Label,
    costs: &CostParams,
) -> f64 {
    if on_disk {
        costs.c_disk * size * replica_bracket(replicas, costs.alpha, intensity)
    } else {
        let miss = if label == Label::Popular {
            costs.c_miss * size
        } else {
            0.0
        };
        costs.c_tape * size + miss
    }
}

/// Evaluates the loss of `decisions`; a removed dataset counts as a miss iff
/// its label is popular.
pub fn loss(
    decisions: &[PlacementDecision],
    sizes: &[f64],
    intensities: &[f64],
    labels: &[Label],
    costs: &CostParams,
) -> Result<f64> {
    let n = decisions.len();
    if sizes.len() != n || intensities.len() != n || labels.len() != n {
        return Err(Error::Misaligned(format!(
            "{n} decisions, {} sizes, {} intensities, {} labels",
            sizes.len(),
            intensities.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (i, d) in decisions.iter().enumerate() {
        if d.on_disk && d.replicas == 0 {
            return Err(Error::ZeroReplicas(d.dataset_id.clone()));
        }
        total += dataset_loss(
            d.on_disk,
            d.replicas,
            sizes[i],
            intensities[i],
            labels[i],
            costs,
        );
    }
    Ok(total)
}

/// Candidate thresholds: every distinct popularity, 0 and one just above 1.
pub fn candidate_thresholds(popularity: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = popularity
        .iter()
        .copied()
        .chain([0.0, KEEP_ALL_THRESHOLD])
        .collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Finds the threshold and replica counts with minimal loss.
///
/// The loss only changes where the threshold crosses an observed popularity,
/// so scanning [`candidate_thresholds`] is exhaustive. Ties go to the larger
/// threshold (fewer removals).
pub fn optimize_plan(inputs: &PlacementInputs<'_>, costs: &CostParams) -> Result<PlacementPlan> {
    costs.validate()?;
    inputs.validate()?;
    let n = inputs.len();
    let replicas: Vec<u32> = inputs
        .intensity
        .iter()
        .map(|&i| optimal_replicas(i, costs.alpha, costs.max_replicas))
        .collect();
    let keep: Vec<f64> = (0..n)
        .map(|i| {
            dataset_loss(
                true,
                replicas[i],
                inputs.size_gb[i],
                inputs.intensity[i],
                inputs.labels[i],
                costs,
            )
        })
        .collect();
    let remove: Vec<f64> = (0..n)
        .map(|i| {
            dataset_loss(
                false,
                0,
                inputs.size_gb[i],
                inputs.intensity[i],
                inputs.labels[i],
                costs,
            )
        })
        .collect();

    let candidates = candidate_thresholds(inputs.popularity);
    // Summed in dataset order so the result is bit-identical to `loss`.
    let losses: Vec<f64> = candidates
        .par_iter()
        .map(|&t| {
            let mut total = 0.0;
            for i in 0..n {
                total += if inputs.popularity[i] >= t {
                    remove[i]
                } else {
                    keep[i]
                };
            }
            total
        })
        .collect();
    let (best, best_loss) = losses.iter().enumerate().fold(
        (0, f64::INFINITY),
        |(bi, bl), (i, &l)| if l <= bl { (i, l) } else { (bi, bl) },
    );
    let threshold = candidates[best];

    let decisions = (0..n)
        .map(|i| {
            let on_disk = inputs.popularity[i] < threshold;
            PlacementDecision {
                dataset_id: inputs.ids[i].clone(),
                on_disk,
                replicas: if on_disk { replicas[i] } else { 0 },
                miss: !on_disk && inputs.labels[i] == Label::Popular,
            }
        })
        .collect();
    Ok(PlacementPlan {
        decisions,
        threshold: Some(threshold),
        total_loss: Some(best_loss),
    })
}

/// Re-checks a popularity-driven plan: threshold consistency, replica bounds
/// and miss flags.
pub fn verify_plan(
    plan: &PlacementPlan,
    inputs: &PlacementInputs<'_>,
    costs: &CostParams,
) -> Result<()> {
    let fail = |dataset: &str, field: &str, message: String| Error::Invariant {
        dataset: dataset.to_string(),
        field: field.to_string(),
        message,
    };
    if plan.decisions.len() != inputs.len() {
        return Err(Error::Misaligned(format!(
            "plan has {} decisions for {} datasets",
            plan.decisions.len(),
            inputs.len()
        )));
    }
    let threshold = plan
        .threshold
        .ok_or_else(|| fail("", "threshold", "plan has no popularity threshold".into()))?;
    for (i, d) in plan.decisions.iter().enumerate() {
        if d.dataset_id != inputs.ids[i] {
            return Err(fail(
                &d.dataset_id,
                "dataset_id",
                format!("expected `{}`", inputs.ids[i]),
            ));
        }
        let expect_on_disk = inputs.popularity[i] < threshold;
        if d.on_disk != expect_on_disk {
            return Err(fail(
                &d.dataset_id,
                "on_disk",
                format!(
                    "popularity {} vs threshold {threshold}",
                    inputs.popularity[i]
                ),
            ));
        }
        if d.on_disk && !(1..=costs.max_replicas).contains(&d.replicas) {
            return Err(fail(
                &d.dataset_id,
                "replicas",
                format!("{} outside 1..={}", d.replicas, costs.max_replicas),
            ));
        }
        if d.miss != (!d.on_disk && inputs.labels[i] == Label::Popular) {
            return Err(fail(
                &d.dataset_id,
                "miss",
                "inconsistent with on_disk and label".into(),
            ));
        }
    }
    if let Some(total) = plan.total_loss {
        let recomputed = loss(
            &plan.decisions,
            inputs.size_gb,
            inputs.intensity,
            inputs.labels,
            costs,
        )?;
        if recomputed != total {
            return Err(fail(
                "",
                "total_loss",
                format!("{total} != recomputed {recomputed}"),
            ));
        }
    }
    Ok(())
}

/// Summary written next to a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub threshold: Option<f64>,
    pub total_loss: Option<f64>,
    pub datasets_removed: usize,
    pub space_saved_gb: f64,
}

impl PlanSummary {
    /// `space_saved_gb` compares against the catalogue's current replicas.
    pub fn new(plan: &PlacementPlan, records: &[DatasetRecord]) -> Self {
        let (original, planned) =
            records
                .iter()
                .zip(&plan.decisions)
                .fold((0.0, 0.0), |(o, p), (r, d)| {
                    let s = r.metadata.replica_size_gb;
                    (
                        o + r.metadata.total_disk_gb(),
                        p + if d.on_disk {
                            s * f64::from(d.replicas)
                        } else {
                            0.0
                        },
                    )
                });
        Self {
            threshold: plan.threshold,
            total_loss: plan.total_loss,
            datasets_removed: plan.removed(),
            space_saved_gb: original - planned,
        }
    }
}

/// CSV `dataset_id,popularity,predicted_intensity,on_disk,replicas,miss`.
pub fn write_plan_csv<W: Write>(
    plan: &PlacementPlan,
    popularity: &[f64],
    intensity: &[f64],
    out: W,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "dataset_id",
        "popularity",
        "predicted_intensity",
        "on_disk",
        "replicas",
        "miss",
    ])?;
    for ((d, p), i) in plan.decisions.iter().zip(popularity).zip(intensity) {
        w.write_record([
            d.dataset_id.clone(),
            p.to_string(),
            i.to_string(),
            u8::from(d.on_disk).to_string(),
            d.replicas.to_string(),
            u8::from(d.miss).to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn keep(id: &str, replicas: u32) -> PlacementDecision {
        PlacementDecision {
            dataset_id: id.into(),
            on_disk: true,
            replicas,
            miss: false,
        }
    }

    fn removed(id: &str) -> PlacementDecision {
        PlacementDecision {
            dataset_id: id.into(),
            on_disk: false,
            replicas: 0,
            miss: false,
        }
    }

    fn costs(alpha: f64) -> CostParams {
        CostParams {
            alpha,
            ..CostParams::default()
        }
    }

    #[test]
    fn worked_replica_example() {
        assert_eq!(optimal_replicas(10.0, 0.5, 4), 2);
        assert_eq!(optimal_replicas(123.0, 0.0, 4), 1);
        assert_eq!(optimal_replicas(0.0, 3.0, 4), 1);
        assert_eq!(optimal_replicas(100.0, 1.0, 4), 4);
        assert_eq!(optimal_replicas(100.0, 1.0, 20), 10);
    }

    #[test]
    fn replicas_minimize_bracket_where_rounding_would_not() {
        // √2.1 ≈ 1.449 rounds to 1, but 2 + 2.1/2 = 3.05 < 1 + 2.1 = 3.1.
        assert_eq!(optimal_replicas(2.1, 1.0, 7), 2);
        // α·I = r(r+1) is a tie between r and r+1; the smaller wins.
        assert_eq!(optimal_replicas(6.0, 1.0, 7), 2);
    }

    #[test]
    fn hand_computed_losses() {
        let c = costs(0.0);
        let keep_popular = loss(&[keep("a", 1)], &[1.0], &[0.0], &[Label::Popular], &c).unwrap();
        let drop_popular = loss(&[removed("a")], &[1.0], &[0.0], &[Label::Popular], &c).unwrap();
        assert_eq!((keep_popular, drop_popular), (100.0, 2001.0));
        let drop_unused = loss(&[removed("a")], &[1.0], &[0.0], &[Label::Unpopular], &c).unwrap();
        let keep_unused = loss(&[keep("a", 1)], &[1.0], &[0.0], &[Label::Unpopular], &c).unwrap();
        assert_eq!((drop_unused, keep_unused), (1.0, 100.0));
        assert_eq!(loss(&[], &[], &[], &[], &c).unwrap(), 0.0);
    }

    #[test]
    fn replica_term_in_loss() {
        // 100 · 2 · (2 + 0.5·10/2) = 900
        let l = loss(
            &[keep("a", 2)],
            &[2.0],
            &[10.0],
            &[Label::Popular],
            &costs(0.5),
        )
        .unwrap();
        assert_eq!(l, 900.0);
    }

    #[test]
    fn zero_replicas_on_disk_is_an_error() {
        let err = loss(
            &[keep("a", 0)],
            &[1.0],
            &[1.0],
            &[Label::Popular],
            &costs(0.5),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZeroReplicas(ref id) if id == "a"));
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    #[test]
    fn all_unused_are_removed() {
        let n = 5;
        let ids = ids(n);
        let pop = vec![1.0; n];
        let intensity = vec![0.3; n];
        let sizes = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let labels = vec![Label::Unpopular; n];
        let inputs = PlacementInputs {
            ids: &ids,
            popularity: &pop,
            intensity: &intensity,
            size_gb: &sizes,
            labels: &labels,
        };
        let plan = optimize_plan(&inputs, &costs(0.5)).unwrap();
        assert!(plan.threshold.unwrap() <= 1.0);
        assert_eq!(plan.removed(), n);
        assert_eq!(plan.total_loss, Some(15.0));
        verify_plan(&plan, &inputs, &costs(0.5)).unwrap();
    }

    #[test]
    fn all_popular_are_kept() {
        let n = 4;
        let ids = ids(n);
        let pop = vec![0.1, 0.9, 1.0, 0.5];
        let intensity = vec![1.0, 40.0, 0.0, 3.0];
        let sizes = vec![1.0; n];
        let labels = vec![Label::Popular; n];
        let inputs = PlacementInputs {
            ids: &ids,
            popularity: &pop,
            intensity: &intensity,
            size_gb: &sizes,
            labels: &labels,
        };
        let c = costs(0.1);
        let plan = optimize_plan(&inputs, &c).unwrap();
        assert_eq!(plan.threshold, Some(KEEP_ALL_THRESHOLD));
        assert_eq!(plan.removed(), 0);
        assert_eq!(plan.decisions[1].replicas, 2);
        verify_plan(&plan, &inputs, &c).unwrap();
    }

    #[test]
    fn ties_prefer_fewer_removals() {
        // Keeping costs 100 = c_tape + c_miss-free removal of 100 GB tape at c_tape=1.
        let ids = ids(1);
        let c = CostParams {
            c_disk: 1.0,
            c_tape: 1.0,
            c_miss: 0.0,
            alpha: 0.0,
            max_replicas: 1,
        };
        let inputs = PlacementInputs {
            ids: &ids,
            popularity: &[0.5],
            intensity: &[0.0],
            size_gb: &[3.0],
            labels: &[Label::Unpopular],
        };
        let plan = optimize_plan(&inputs, &c).unwrap();
        assert_eq!(plan.removed(), 0);
    }

    #[test]
    fn invalid_inputs() {
        let ids = ids(1);
        let labels = [Label::Popular];
        let mk = |pop: &'static [f64], size: &'static [f64]| PlacementInputs {
            ids: &ids,
            popularity: pop,
            intensity: &[0.0],
            size_gb: size,
            labels: &labels,
        };
        assert!(optimize_plan(&mk(&[1.5], &[1.0]), &costs(0.0)).is_err());
        assert!(optimize_plan(&mk(&[0.5], &[0.0]), &costs(0.0)).is_err());
        assert!(optimize_plan(&mk(&[0.5], &[1.0, 2.0]), &costs(0.0)).is_err());
        let bad = CostParams {
            max_replicas: 0,
            ..CostParams::default()
        };
        assert!(optimize_plan(&mk(&[0.5], &[1.0]), &bad).is_err());
    }

    #[test]
    fn plan_csv_layout() {
        let plan = PlacementPlan {
            decisions: vec![
                keep("a", 3),
                PlacementDecision {
                    miss: true,
                    ..removed("b")
                },
            ],
            threshold: Some(0.5),
            total_loss: Some(1.0),
        };
        let mut buf = Vec::new();
        write_plan_csv(&plan, &[0.25, 0.75], &[2.0, 0.5], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "dataset_id,popularity,predicted_intensity,on_disk,replicas,miss\na,0.25,2,1,3,0\nb,0.75,0.5,0,0,1\n"
        );
    }

    proptest! {
        #[test]
        fn replicas_are_locally_optimal(i in 0.0f64..5000.0, alpha in 0.0f64..2.0, max in 1u32..12) {
            let r = optimal_replicas(i, alpha, max);
            prop_assert!((1..=max).contains(&r));
            let here = replica_bracket(r, alpha, i);
            if r > 1 {
                prop_assert!(here <= replica_bracket(r - 1, alpha, i));
            }
            if r < max {
                prop_assert!(here <= replica_bracket(r + 1, alpha, i));
            }
        }

        #[test]
        fn higher_miss_cost_never_removes_more(
            data in prop::collection::vec((0.0f64..=1.0, 0.0f64..50.0, 0.1f64..100.0, any::<bool>()), 1..40),
            c_miss in 0.0f64..3000.0,
            bump in 1.0f64..3000.0,
            alpha in 0.0f64..1.0,
        ) {
            let ids = ids(data.len());
            let pop: Vec<f64> = data.iter().map(|d| d.0).collect();
            let intensity: Vec<f64> = data.iter().map(|d| d.1).collect();
            let sizes: Vec<f64> = data.iter().map(|d| d.2).collect();
            let labels: Vec<Label> = data.iter().map(|d| if d.3 { Label::Popular } else { Label::Unpopular }).collect();
            let inputs = PlacementInputs { ids: &ids, popularity: &pop, intensity: &intensity, size_gb: &sizes, labels: &labels };
            let low = CostParams { c_miss, alpha, ..CostParams::default() };
            let high = CostParams { c_miss: c_miss + bump, ..low };
            let a = optimize_plan(&inputs, &low).unwrap();
            let b = optimize_plan(&inputs, &high).unwrap();
            prop_assert!(b.removed() <= a.removed());
            verify_plan(&a, &inputs, &low).unwrap();
        }

        #[test]
        fn alpha_zero_keeps_one_replica(
            data in prop::collection::vec((0.0f64..=1.0, 0.0f64..500.0, any::<bool>()), 1..30),
        ) {
            let ids = ids(data.len());
            let pop: Vec<f64> = data.iter().map(|d| d.0).collect();
            let intensity: Vec<f64> = data.iter().map(|d| d.1).collect();
            let sizes = vec![1.0; data.len()];
            let labels: Vec<Label> = data.iter().map(|d| if d.2 { Label::Popular } else { Label::Unpopular }).collect();
            let inputs = PlacementInputs { ids: &ids, popularity: &pop, intensity: &intensity, size_gb: &sizes, labels: &labels };
            let plan = optimize_plan(&inputs, &CostParams { alpha: 0.0, max_replicas: 7, ..CostParams::default() }).unwrap();
            prop_assert!(plan.decisions.iter().filter(|d| d.on_disk).all(|d| d.replicas == 1));
        }
    }
}
