//! Kernel-size ablation grid: one training run per `(s, s, t)` kernel.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataio::samples::Sample;
use crate::error::{Axis, Error, Result};
use crate::models::{build, init_params, ArchSpec};
use crate::tensor::Scalar;
use crate::trainer::metrics::{format_mean_std, format_percent, last_k_stats};
use crate::trainer::report::LAST_K;
use crate::trainer::{train_samples, TrainConfig};

pub const DEFAULT_SPATIAL: [usize; 3] = [3, 5, 7];
pub const DEFAULT_TEMPORAL: [usize; 4] = [3, 7, 15, 19];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub spatial: Vec<usize>,
    pub temporal: Vec<usize>,
}

impl Default for AblationGrid {
    fn default() -> Self {
        AblationGrid {
            spatial: DEFAULT_SPATIAL.to_vec(),
            temporal: DEFAULT_TEMPORAL.to_vec(),
        }
    }
}

impl AblationGrid {
    /// Kernels in grid order: spatial outer, temporal inner.
    pub fn kernels(&self) -> Vec<(usize, usize, usize)> {
        self.spatial
            .iter()
            .flat_map(|&s| self.temporal.iter().map(move |&t| (s, s, t)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Trained {
        final_accuracy: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        last_k_mean: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        last_k_std: Option<f64>,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub kernel: (usize, usize, usize),
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
}

fn kernel_label((h, w, d): (usize, usize, usize)) -> String {
    format!("{h} x {w} x {d}")
}

/// Why a kernel cannot be used, if it cannot.
pub fn skip_reason(spec: &ArchSpec) -> Option<String> {
    match crate::models::shape_report(spec) {
        Ok(r) if r.is_buildable() => None,
        _ => Some(match build::<f32>(spec) {
            Err(Error::Unbuildable { source, .. }) => match *source {
                Error::KernelTooLarge {
                    axis: Axis::Depth,
                    kernel,
                    input,
                } => format!("kernel too deep ({kernel} > {input} frames)"),
                other => other.to_string(),
            },
            Err(e) => e.to_string(),
            Ok(_) => "unbuildable".into(),
        }),
    }
}

fn run_cell<T: Scalar>(
    spec: &ArchSpec,
    cfg: &TrainConfig,
    train: &[Sample<T>],
    val: &[Sample<T>],
) -> Result<CellOutcome> {
    if let Some(reason) = skip_reason(spec) {
        return Ok(CellOutcome::Skipped { reason });
    }
    let mut g = build::<T>(spec)?;
    init_params(&mut g, cfg.seed);
    let log = train_samples(&mut g, train, val, cfg, &mut |_, _| Ok(()))?;
    let stats = last_k_stats(&log, LAST_K).ok();
    Ok(CellOutcome::Trained {
        final_accuracy: log.last().and_then(|r| r.val_accuracy).unwrap_or(0.0),
        last_k_mean: stats.map(|s| s.0),
        last_k_std: stats.map(|s| s.1),
    })
}

/// Trains `base` with every kernel of `grid`, using up to `jobs` threads.
/// Cells are reported in grid order whatever the completion order.
pub fn run_ablation<T: Scalar>(
    base: &ArchSpec,
    cfg: &TrainConfig,
    grid: &AblationGrid,
    train: &[Sample<T>],
    val: &[Sample<T>],
    jobs: usize,
) -> Result<AblationReport> {
    let kernels = grid.kernels();
    if kernels.is_empty() {
        return Err(Error::InvalidArgument("ablation grid is empty".into()));
    }
    let specs: Vec<ArchSpec> = kernels
        .iter()
        .map(|&kernel| ArchSpec { kernel, ..base.clone() })
        .collect();
    let results: Mutex<Vec<Option<Result<CellOutcome>>>> = Mutex::new((0..specs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= specs.len() {
            break;
        }
        let outcome = run_cell(&specs[i], cfg, train, val);
        results.lock().unwrap()[i] = Some(outcome);
    };
    let jobs = jobs.clamp(1, specs.len());
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let cells = kernels
        .into_iter()
        .zip(results.into_inner().unwrap())
        .map(|(kernel, r)| {
            Ok(AblationCell {
                kernel,
                outcome: r.expect("every cell ran")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport { cells })
}

impl AblationReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::malformed("ablation report", e))
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<14}  {:>9}  {:>13}  {}\n", "filter size", "final acc", "last-10", "status");
        for c in &self.cells {
            let label = kernel_label(c.kernel);
            match &c.outcome {
                CellOutcome::Trained {
                    final_accuracy,
                    last_k_mean,
                    last_k_std,
                } => {
                    let last = match (last_k_mean, last_k_std) {
                        (Some(m), Some(s)) => format_mean_std(*m, *s),
                        _ => "-".into(),
                    };
                    writeln!(out, "{label:<14}  {:>9}  {last:>13}  ok", format_percent(*final_accuracy)).unwrap();
                }
                CellOutcome::Skipped { reason } => {
                    writeln!(out, "{label:<14}  {:>9}  {:>13}  SKIPPED: {reason}", "-", "-").unwrap();
                }
            }
        }
        out
    }
}
