//! Confusion matrices, per-epoch logs and last-k statistics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `k x k` counts; rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    rows: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            rows: vec![vec![0; k]; k],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("confusion matrix must be square and non-empty".into()));
        }
        Ok(ConfusionMatrix { rows })
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.rows[truth][predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.classes();
        for c in [truth, predicted] {
            if c >= k {
                return Err(Error::ClassOutOfRange { class: c, num_classes: k });
            }
        }
        self.rows[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.rows[i][i]).sum()
    }

    /// `trace / total`, or 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// Aligned table with a header row of class names.
    pub fn render(&self, names: &[String]) -> String {
        let label = |i: usize| names.get(i).cloned().unwrap_or_else(|| format!("class_{i}"));
        let labels: Vec<String> = (0..self.classes()).map(label).collect();
        let first = labels.iter().map(String::len).max().unwrap_or(0).max(10);
        let cell = labels
            .iter()
            .map(String::len)
            .chain(self.rows.iter().flatten().map(|v| v.to_string().len()))
            .max()
            .unwrap_or(1);
        let mut out = format!("{:first$}", "true\\pred");
        for l in &labels {
            write!(out, "  {l:>cell$}").unwrap();
        }
        out.push('\n');
        for (l, row) in labels.iter().zip(&self.rows) {
            write!(out, "{l:first$}").unwrap();
            for v in row {
                write!(out, "  {v:>cell$}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_confusion: Option<ConfusionMatrix>,
    /// Seconds spent on the epoch. Not persisted.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    #[serde(default)]
    pub epochs: Vec<EpochRow>,
}

impl EpochLog {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRow> {
        self.epochs.last()
    }

    /// Validation accuracies of evaluated epochs, in order.
    pub fn val_accuracies(&self) -> Vec<f64> {
        self.epochs.iter().filter_map(|r| r.val_accuracy).collect()
    }
}

/// Mean and sample standard deviation of `values`.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    // Shifted by the first value so constant input gives exactly (c, 0).
    let origin = values.first().copied().unwrap_or(f64::NAN);
    let offset = values.iter().map(|v| v - origin).sum::<f64>() / n;
    if values.len() < 2 {
        return (origin + offset, 0.0);
    }
    let var = values.iter().map(|v| (v - origin - offset).powi(2)).sum::<f64>() / (n - 1.0);
    (origin + offset, var.sqrt())
}

/// Mean and sample standard deviation of the last `k` validation accuracies.
pub fn last_k_stats(log: &EpochLog, k: usize) -> Result<(f64, f64)> {
    let acc = log.val_accuracies();
    if k == 0 || acc.len() < k {
        return Err(Error::TooFewEpochs {
            required: k.max(1),
            available: acc.len(),
        });
    }
    Ok(mean_std(&acc[acc.len() - k..]))
}

/// Formats fractional accuracies as `"82.20±5.02%"`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{:.2}±{:.2}%", 100.0 * mean, 100.0 * std)
}

pub fn format_percent(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}
