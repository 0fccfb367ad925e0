//! Replay of the held-out window: download time, space savings and wrong
//! removals for any plan, plus the LRU baseline and comparison tables.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{DatasetRecord, SplitConfig};
use crate::error::{Error, Result};
use crate::pipeline::ScoredCorpus;
use crate::placement::{CostParams, PlacementDecision, PlacementPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeParams {
    /// Hours per GB read from disk.
    pub t_disk: f64,
    /// Hours per GB restored from tape.
    pub t_tape: f64,
    /// Fixed hours per tape restore.
    pub k_tape: f64,
}

impl Default for TimeParams {
    fn default() -> Self {
        Self {
            t_disk: 0.1,
            t_tape: 3.0,
            k_tape: 24.0,
        }
    }
}

impl TimeParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_disk", self.t_disk),
            ("t_tape", self.t_tape),
            ("k_tape", self.k_tape),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Slowdown factor of reading from `replicas` disk copies: `0.05 + 1/Rp`.
pub fn replica_speed_factor(replicas: u32) -> f64 {
    0.05 + 1.0 / f64::from(replicas)
}

/// Mean weekly usage over the label window.
pub fn eval_intensity(history: &crate::catalog::UsageHistory, split: &SplitConfig) -> f64 {
    let window = split.held_out(history);
    window.iter().sum::<f64>() / split.label_weeks as f64
}

fn dataset_time(d: &PlacementDecision, size: f64, usage: f64, time: &TimeParams) -> f64 {
    if d.on_disk {
        usage * size * time.t_disk * replica_speed_factor(d.replicas)
    } else if usage > 0.0 {
        // Restored once, then read at plain disk speed.
        time.k_tape + size * time.t_tape + usage * size * time.t_disk
    } else {
        0.0
    }
}

/// Total download time in hours. A removed dataset costs a restore iff it is
/// used in the evaluation window.
pub fn downloading_time(
    decisions: &[PlacementDecision],
    sizes: &[f64],
    eval_intensities: &[f64],
    time: &TimeParams,
) -> Result<f64> {
    let n = decisions.len();
    if sizes.len() != n || eval_intensities.len() != n {
        return Err(Error::Misaligned(format!(
            "{n} decisions, {} sizes, {} intensities",
            sizes.len(),
            eval_intensities.len()
        )));
    }
    let mut total = 0.0;
    for (i, d) in decisions.iter().enumerate() {
        if d.on_disk && d.replicas == 0 {
            return Err(Error::ZeroReplicas(d.dataset_id.clone()));
        }
        total += dataset_time(d, sizes[i], eval_intensities[i], time);
    }
    Ok(total)
}

/// Plan that keeps every dataset on disk at its catalogued replica count.
pub fn identity_plan(records: &[DatasetRecord]) -> PlacementPlan {
    PlacementPlan {
        decisions: records
            .iter()
            .map(|r| PlacementDecision {
                dataset_id: r.id().to_string(),
                on_disk: true,
                replicas: r.metadata.replicas_on_disk,
                miss: false,
            })
            .collect(),
        threshold: None,
        total_loss: None,
    }
}

/// Download time with everything on disk at the original replica counts.
pub fn baseline_time(records: &[DatasetRecord], split: &SplitConfig, time: &TimeParams) -> f64 {
    records
        .iter()
        .map(|r| {
            let usage = eval_intensity(&r.history, split);
            usage
                * r.metadata.replica_size_gb
                * time.t_disk
                * replica_speed_factor(r.metadata.replicas_on_disk)
        })
        .sum()
}

/// LRU: remove every dataset unused in the last `n_weeks` observation weeks;
/// kept datasets keep their replicas.
pub fn lru_plan(
    records: &[DatasetRecord],
    split: &SplitConfig,
    n_weeks: usize,
) -> Result<PlacementPlan> {
    if !(1..=split.observation_weeks).contains(&n_weeks) {
        return Err(Error::Config(format!(
            "LRU window must be in 1..={}, got {n_weeks}",
            split.observation_weeks
        )));
    }
    let first = split.observation_weeks - n_weeks + 1;
    let decisions = records
        .iter()
        .map(|r| {
            let recent = r.history.weeks(first, split.observation_weeks);
            let on_disk = recent.iter().any(|&c| c > 0.0);
            let used_later = split.held_out(&r.history).iter().any(|&c| c > 0.0);
            PlacementDecision {
                dataset_id: r.id().to_string(),
                on_disk,
                replicas: if on_disk {
                    r.metadata.replicas_on_disk
                } else {
                    0
                },
                miss: !on_disk && used_later,
            }
        })
        .collect();
    Ok(PlacementPlan {
        decisions,
        threshold: None,
        total_loss: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub downloading_time_ratio: f64,
    pub saving_space_pct: f64,
    pub wrong_removals: usize,
    pub removed: usize,
}

pub fn evaluate_policy(
    plan: &PlacementPlan,
    records: &[DatasetRecord],
    split: &SplitConfig,
    time: &TimeParams,
) -> Result<PolicyMetrics> {
    if plan.decisions.len() != records.len() {
        return Err(Error::Misaligned(format!(
            "plan has {} decisions for {} datasets",
            plan.decisions.len(),
            records.len()
        )));
    }
    let baseline = baseline_time(records, split, time);
    if baseline <= 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let sizes: Vec<f64> = records.iter().map(|r| r.metadata.replica_size_gb).collect();
    let usage: Vec<f64> = records
        .iter()
        .map(|r| eval_intensity(&r.history, split))
        .collect();
    let t = downloading_time(&plan.decisions, &sizes, &usage, time)?;

    let mut original = 0.0;
    let mut planned = 0.0;
    let mut wrong = 0;
    let mut removed = 0;
    for ((r, d), &u) in records.iter().zip(&plan.decisions).zip(&usage) {
        original += r.metadata.total_disk_gb();
        if d.on_disk {
            planned += r.metadata.replica_size_gb * f64::from(d.replicas);
        } else {
            removed += 1;
            if u > 0.0 {
                wrong += 1;
            }
        }
    }
    let saving = if original > 0.0 {
        100.0 * (original - planned) / original
    } else {
        0.0
    };
    Ok(PolicyMetrics {
        downloading_time_ratio: t / baseline,
        saving_space_pct: saving,
        wrong_removals: wrong,
        removed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Optimizer,
    Lru,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Optimizer => "optimizer",
            PolicyKind::Lru => "lru",
        }
    }
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy_name: PolicyKind,
    /// α for the optimizer, N for LRU.
    pub policy_param: f64,
    pub max_replicas: Option<u32>,
    pub metrics: PolicyMetrics,
    pub total_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonGrid {
    pub alphas: Vec<f64>,
    pub max_replicas: Vec<u32>,
    pub lru_weeks: Vec<usize>,
}

impl Default for ComparisonGrid {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0],
            max_replicas: vec![4, 7],
            lru_weeks: vec![1, 2, 5, 10, 15, 20, 25],
        }
    }
}

/// Optimizer rows (max_replicas outer, α inner) followed by LRU rows.
pub fn comparison_report(
    records: &[DatasetRecord],
    scored: &ScoredCorpus,
    split: &SplitConfig,
    costs: &CostParams,
    time: &TimeParams,
    grid: &ComparisonGrid,
) -> Result<Vec<EvalReport>> {
    time.validate()?;
    let optimizer_cells: Vec<(u32, f64)> = grid
        .max_replicas
        .iter()
        .flat_map(|&m| grid.alphas.iter().map(move |&a| (m, a)))
        .collect();
    let optimizer: Vec<EvalReport> = optimizer_cells
        .par_iter()
        .map(|&(max_replicas, alpha)| {
            let plan = scored.optimize(&CostParams {
                alpha,
                max_replicas,
                ..*costs
            })?;
            Ok(EvalReport {
                policy_name: PolicyKind::Optimizer,
                policy_param: alpha,
                max_replicas: Some(max_replicas),
                metrics: evaluate_policy(&plan, records, split, time)?,
                total_loss: plan.total_loss,
            })
        })
        .collect::<Result<_>>()?;
    let lru: Vec<EvalReport> = grid
        .lru_weeks
        .par_iter()
        .map(|&n| {
            let plan = lru_plan(records, split, n)?;
            Ok(EvalReport {
                policy_name: PolicyKind::Lru,
                policy_param: n as f64,
                max_replicas: None,
                metrics: evaluate_policy(&plan, records, split, time)?,
                total_loss: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(optimizer.into_iter().chain(lru).collect())
}

/// CSV `policy,param,max_replicas,downloading_time_ratio,saving_space_pct,wrong_removals,total_loss`.
pub fn write_report_csv<W: Write>(rows: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "policy",
        "param",
        "max_replicas",
        "downloading_time_ratio",
        "saving_space_pct",
        "wrong_removals",
        "total_loss",
    ])?;
    for r in rows {
        w.write_record([
            r.policy_name.as_str().to_string(),
            r.policy_param.to_string(),
            r.max_replicas.map(|m| m.to_string()).unwrap_or_default(),
            r.metrics.downloading_time_ratio.to_string(),
            r.metrics.saving_space_pct.to_string(),
            r.metrics.wrong_removals.to_string(),
            r.total_loss.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Aligned text: one LRU table, then one optimizer table per max_replicas.
pub fn render_report_table(rows: &[EvalReport]) -> String {
    let mut out = String::new();
    let mut section = |title: String, param: &str, sel: Vec<&EvalReport>| {
        if sel.is_empty() {
            return;
        }
        let _ = writeln!(out, "{title}");
        let _ = writeln!(
            out,
            "{:>8}  {:>22}  {:>16}  {:>15}",
            param, "Downloading time ratio", "Saving space, %", "Wrong removals"
        );
        for r in sel {
            let _ = writeln!(
                out,
                "{:>8}  {:>22.2}  {:>16.0}  {:>15}",
                r.policy_param,
                r.metrics.downloading_time_ratio,
                r.metrics.saving_space_pct,
                r.metrics.wrong_removals
            );
        }
        out.push('\n');
    };
    section(
        "LRU baseline".into(),
        "N",
        rows.iter()
            .filter(|r| r.policy_name == PolicyKind::Lru)
            .collect(),
    );
    let mut maxes: Vec<u32> = rows.iter().filter_map(|r| r.max_replicas).collect();
    maxes.dedup();
    for m in maxes {
        section(
            format!("Optimizer, max replicas = {m}"),
            "Alpha",
            rows.iter()
                .filter(|r| r.policy_name == PolicyKind::Optimizer && r.max_replicas == Some(m))
                .collect(),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::tests::meta;
    use crate::catalog::UsageHistory;

    fn record(id: &str, size: f64, replicas: u32, counts: &[(usize, f64)]) -> DatasetRecord {
        let mut h = vec![0.0; 104];
        for &(week, c) in counts {
            h[week - 1] = c;
        }
        let mut m = meta(id);
        m.replica_size_gb = size;
        m.replicas_on_disk = replicas;
        m.first_usage_week = None;
        m.last_usage_week = None;
        DatasetRecord {
            metadata: m,
            history: UsageHistory::new(h).unwrap(),
        }
    }

    fn on_disk(replicas: u32) -> PlacementDecision {
        PlacementDecision {
            dataset_id: "x".into(),
            on_disk: true,
            replicas,
            miss: false,
        }
    }

    fn off_disk() -> PlacementDecision {
        PlacementDecision {
            dataset_id: "x".into(),
            on_disk: false,
            replicas: 0,
            miss: true,
        }
    }

    #[test]
    fn speed_factors() {
        assert_eq!(replica_speed_factor(1), 1.05);
        assert_eq!(replica_speed_factor(4), 0.30);
    }

    #[test]
    fn eval_intensity_examples() {
        let split = SplitConfig::default();
        assert_eq!(
            eval_intensity(&record("a", 1.0, 1, &[(3, 5.0)]).history, &split),
            0.0
        );
        let ones: Vec<(usize, f64)> = (79..=104).map(|w| (w, 1.0)).collect();
        assert_eq!(
            eval_intensity(&record("a", 1.0, 1, &ones).history, &split),
            1.0
        );
        let r = record("a", 1.0, 1, &[(80, 2.0), (100, 3.0)]);
        assert_eq!(eval_intensity(&r.history, &split), 5.0 / 26.0);
    }

    #[test]
    fn hand_computed_times() {
        let t = TimeParams::default();
        let kept = downloading_time(&[on_disk(1)], &[10.0], &[2.0], &t).unwrap();
        assert!((kept - 2.1).abs() < 1e-12, "{kept}");
        let restored = downloading_time(&[off_disk()], &[10.0], &[2.0], &t).unwrap();
        assert!((restored - 56.0).abs() < 1e-12, "{restored}");
        assert_eq!(
            downloading_time(&[off_disk()], &[10.0], &[0.0], &t).unwrap(),
            0.0
        );
        assert!(matches!(
            downloading_time(&[on_disk(0)], &[1.0], &[1.0], &t),
            Err(Error::ZeroReplicas(_))
        ));
    }

    #[test]
    fn baseline_examples() {
        let split = SplitConfig::default();
        let t = TimeParams::default();
        assert_eq!(baseline_time(&[], &split, &t), 0.0);
        // I* = 2 over the label window.
        let busy: Vec<(usize, f64)> = (79..=104).map(|w| (w, 2.0)).collect();
        let r = record("a", 10.0, 1, &busy);
        assert!((baseline_time(std::slice::from_ref(&r), &split, &t) - 2.1).abs() < 1e-12);
        let doubled: Vec<(usize, f64)> = (79..=104).map(|w| (w, 4.0)).collect();
        let r2 = record("a", 10.0, 1, &doubled);
        assert!((baseline_time(&[r2], &split, &t) - 4.2).abs() < 1e-12);
    }

    #[test]
    fn lru_window_rule() {
        let split = SplitConfig::default();
        let recs = vec![
            record("at78", 1.0, 2, &[(78, 1.0)]),
            record("at70", 1.0, 2, &[(70, 1.0)]),
            record("never", 1.0, 2, &[]),
        ];
        let keep = |n| -> Vec<bool> {
            lru_plan(&recs, &split, n)
                .unwrap()
                .decisions
                .iter()
                .map(|d| d.on_disk)
                .collect()
        };
        assert_eq!(keep(1), [true, false, false]);
        assert_eq!(keep(5), [true, false, false]);
        // Weeks 69..=78 include week 70.
        assert_eq!(keep(10), [true, true, false]);
        assert_eq!(keep(9), [true, true, false]);
        assert_eq!(keep(8), [true, false, false]);
        assert_eq!(keep(78), [true, true, false]);
        let plan = lru_plan(&recs, &split, 10).unwrap();
        assert_eq!(plan.decisions[0].replicas, 2);
        assert!(plan.threshold.is_none());
        assert!(lru_plan(&recs, &split, 0).is_err());
        assert!(lru_plan(&recs, &split, 79).is_err());
    }

    fn hand_corpus() -> Vec<DatasetRecord> {
        vec![
            // I* = 1, kept with 2 replicas.
            record("a", 10.0, 2, &[(5, 1.0), (79, 26.0)]),
            // I* = 0.5, removed: wrong removal.
            record("b", 4.0, 1, &[(10, 1.0), (90, 13.0)]),
            // never used again, removed.
            record("c", 6.0, 3, &[(20, 2.0)]),
        ]
    }

    #[test]
    fn identity_plan_is_neutral() {
        let recs = hand_corpus();
        let m = evaluate_policy(
            &identity_plan(&recs),
            &recs,
            &SplitConfig::default(),
            &TimeParams::default(),
        )
        .unwrap();
        assert_eq!(m.downloading_time_ratio, 1.0);
        assert_eq!(m.saving_space_pct, 0.0);
        assert_eq!((m.wrong_removals, m.removed), (0, 0));
    }

    #[test]
    fn hand_corpus_report() {
        let recs = hand_corpus();
        let split = SplitConfig::default();
        let t = TimeParams::default();
        let mut plan = identity_plan(&recs);
        plan.decisions[0].replicas = 1;
        for d in &mut plan.decisions[1..] {
            d.on_disk = false;
            d.replicas = 0;
        }
        let m = evaluate_policy(&plan, &recs, &split, &t).unwrap();
        // baseline: 1·10·0.1·0.55 + 0.5·4·0.1·1.05 = 0.55 + 0.21 = 0.76
        // plan:     1·10·0.1·1.05 + (24 + 12 + 0.5·4·0.1) = 1.05 + 36.2 = 37.25
        assert!((m.downloading_time_ratio - 37.25 / 0.76).abs() < 1e-12);
        // original 20 + 4 + 18 = 42, planned 10
        assert!((m.saving_space_pct - 100.0 * 32.0 / 42.0).abs() < 1e-12);
        assert_eq!((m.wrong_removals, m.removed), (1, 2));
    }

    #[test]
    fn removing_only_unused_is_never_wrong() {
        let recs = hand_corpus();
        let mut plan = identity_plan(&recs);
        plan.decisions[2].on_disk = false;
        plan.decisions[2].replicas = 0;
        let m = evaluate_policy(
            &plan,
            &recs,
            &SplitConfig::default(),
            &TimeParams::default(),
        )
        .unwrap();
        assert_eq!(m.wrong_removals, 0);
        assert!(m.downloading_time_ratio == 1.0);
    }

    #[test]
    fn zero_baseline_is_undefined() {
        let recs = vec![record("a", 1.0, 1, &[(3, 1.0)])];
        let err = evaluate_policy(
            &identity_plan(&recs),
            &recs,
            &SplitConfig::default(),
            &TimeParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UndefinedRatio));
    }

    #[test]
    fn report_csv_and_table() {
        let metrics = PolicyMetrics {
            downloading_time_ratio: 0.5,
            saving_space_pct: 40.0,
            wrong_removals: 3,
            removed: 7,
        };
        let rows = vec![
            EvalReport {
                policy_name: PolicyKind::Optimizer,
                policy_param: 0.01,
                max_replicas: Some(4),
                metrics,
                total_loss: Some(12.5),
            },
            EvalReport {
                policy_name: PolicyKind::Lru,
                policy_param: 10.0,
                max_replicas: None,
                metrics,
                total_loss: None,
            },
        ];
        let mut buf = Vec::new();
        write_report_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "policy,param,max_replicas,downloading_time_ratio,saving_space_pct,wrong_removals,total_loss\n\
             optimizer,0.01,4,0.5,40,3,12.5\n\
             lru,10,,0.5,40,3,\n"
        );
        let table = render_report_table(&rows);
        assert!(table.starts_with("LRU baseline\n"));
        assert!(table.contains("Optimizer, max replicas = 4"));
        assert!(table.contains("0.50"));
    }
}
