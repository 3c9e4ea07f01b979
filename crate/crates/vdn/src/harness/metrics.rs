//! Learning-curve metrics: trapezoidal AUC and final-window performance,
//! normalized per task by the best architecture, with 90% t-distribution
//! confidence widths across seeds.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Result, VdnError};
use crate::gridworld::TASK_VARIANTS;

use super::RunRecord;

/// Aggregated metrics for one `(task, architecture)` cell.
#[derive(Debug, Clone)]
pub struct TaskArchMetrics {
    pub task: String,
    pub architecture: u8,
    /// Seed-mean reward per episode.
    pub mean_curve: Vec<f64>,
    /// Half-width of the 90% confidence band per episode (0 for one seed).
    pub band90: Vec<f64>,
    /// Trapezoidal area under `mean_curve` (unit episode spacing).
    pub auc_raw: f64,
    /// `auc_raw`, shifted per task so the minimum is ≥ 0, divided by the
    /// per-task maximum. In [0, 1]; the best architecture scores 1.
    pub auc_norm: f64,
    /// Mean reward over the final window, averaged across seeds.
    pub final_raw_mean: f64,
    /// 90% confidence half-width of `final_raw_mean` across seeds.
    pub final_ci90: f64,
    /// `final_raw_mean` normalized like `auc_norm`.
    pub final_norm: f64,
}

/// Cross-task means for one architecture (over the tasks present).
#[derive(Debug, Clone)]
pub struct ArchSummary {
    pub architecture: u8,
    pub mean_auc_norm: f64,
    pub mean_final_norm: f64,
}

/// The full metrics table: one entry per `(task, architecture)` cell in
/// task-major order (tasks in their canonical order, architectures
/// ascending), plus per-architecture cross-task means.
#[derive(Debug, Clone)]
pub struct MetricsTable {
    pub window: usize,
    pub entries: Vec<TaskArchMetrics>,
    pub cross_task: Vec<ArchSummary>,
}

/// Area under a unit-spaced curve by the trapezoid rule. A single point has
/// zero area.
pub fn trapezoid_auc(ys: &[f64]) -> f64 {
    ys.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum()
}

/// Mean and 90% t-distribution confidence half-width (n−1 d.o.f.) of a
/// sample; the half-width is 0 for a single value.
pub fn mean_and_ci90(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n > 0);
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid d.o.f.")
        .inverse_cdf(0.95);
    (mean, t * (var / n as f64).sqrt())
}

/// Shift-then-divide normalization: scores are shifted so the minimum is
/// ≥ 0 (no shift when all are already non-negative), then divided by the
/// shifted maximum. All-equal inputs normalize to 1 (everyone ties for
/// best).
fn normalize(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = (-min).max(0.0);
    let denom = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) + shift;
    scores
        .iter()
        .map(|&v| if denom > 0.0 { (v + shift) / denom } else { 1.0 })
        .collect()
}

fn task_order(task: &str) -> usize {
    TASK_VARIANTS.iter().position(|&t| t == task).unwrap_or(TASK_VARIANTS.len())
}

/// Builds the metrics table from completed runs. `window` is the
/// final-performance episode count and must not exceed any series length;
/// all series of a task must agree in length.
pub fn build_metrics(records: &[RunRecord], window: usize) -> Result<MetricsTable> {
    if records.is_empty() {
        return Err(VdnError::Usage("no run records to aggregate".into()));
    }
    if window == 0 {
        return Err(VdnError::Config("final-performance window must be positive".into()));
    }

    let mut cells: BTreeMap<(usize, String, u8), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((task_order(&r.task), r.task.clone(), r.architecture))
            .or_default()
            .push(r);
    }

    let mut entries = Vec::with_capacity(cells.len());
    for ((_, task, arch), runs) in &cells {
        let len = runs[0].rewards.len();
        for r in runs.iter() {
            if r.rewards.len() != len {
                return Err(VdnError::Config(format!(
                    "task {task}: series lengths differ ({} vs {len} episodes)",
                    r.rewards.len(),
                )));
            }
        }
        if window > len {
            return Err(VdnError::Config(format!(
                "final-performance window {window} exceeds the {len}-episode series of task {task}"
            )));
        }

        let mut mean_curve = vec![0.0; len];
        let mut band90 = vec![0.0; len];
        let mut point = Vec::with_capacity(runs.len());
        for e in 0..len {
            point.clear();
            point.extend(runs.iter().map(|r| r.rewards[e]));
            let (m, ci) = mean_and_ci90(&point);
            mean_curve[e] = m;
            band90[e] = ci;
        }
        let finals: Vec<f64> = runs
            .iter()
            .map(|r| r.rewards[len - window..].iter().sum::<f64>() / window as f64)
            .collect();
        let (final_raw_mean, final_ci90) = mean_and_ci90(&finals);

        entries.push(TaskArchMetrics {
            task: task.clone(),
            architecture: *arch,
            auc_raw: trapezoid_auc(&mean_curve),
            mean_curve,
            band90,
            auc_norm: 0.0,
            final_raw_mean,
            final_ci90,
            final_norm: 0.0,
        });
    }

    // Per-task normalization over the architectures present.
    let tasks: Vec<String> = {
        let mut seen = Vec::new();
        for e in &entries {
            if !seen.contains(&e.task) {
                seen.push(e.task.clone());
            }
        }
        seen
    };
    for task in &tasks {
        let idx: Vec<usize> =
            (0..entries.len()).filter(|&i| entries[i].task == *task).collect();
        let aucs: Vec<f64> = idx.iter().map(|&i| entries[i].auc_raw).collect();
        let finals: Vec<f64> = idx.iter().map(|&i| entries[i].final_raw_mean).collect();
        let auc_norms = normalize(&aucs);
        let final_norms = normalize(&finals);
        for (k, &i) in idx.iter().enumerate() {
            entries[i].auc_norm = auc_norms[k];
            entries[i].final_norm = final_norms[k];
        }
    }

    // Cross-task means per architecture.
    let mut archs: Vec<u8> = entries.iter().map(|e| e.architecture).collect();
    archs.sort_unstable();
    archs.dedup();
    let cross_task = archs
        .into_iter()
        .map(|a| {
            let scores: Vec<&TaskArchMetrics> =
                entries.iter().filter(|e| e.architecture == a).collect();
            let n = scores.len() as f64;
            ArchSummary {
                architecture: a,
                mean_auc_norm: scores.iter().map(|e| e.auc_norm).sum::<f64>() / n,
                mean_final_norm: scores.iter().map(|e| e.final_norm).sum::<f64>() / n,
            }
        })
        .collect();

    Ok(MetricsTable { window, entries, cross_task })
}
