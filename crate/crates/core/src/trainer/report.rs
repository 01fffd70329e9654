//! Per-run metrics report: an aligned text table and a TOML twin.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::metrics::{format_mean_std, format_percent, last_k_stats, ConfusionMatrix, EpochLog, EpochRow};

pub const LAST_K: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LastK {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<String>,
    pub final_val_accuracy: f64,
    pub final_confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_k: Option<LastK>,
    pub epochs: Vec<EpochRow>,
}

impl MetricsReport {
    pub fn new(classes: &[String], log: &EpochLog) -> Result<Self> {
        let last = log
            .epochs
            .iter()
            .rev()
            .find(|r| r.val_confusion.is_some())
            .ok_or_else(|| Error::InvalidArgument("log has no evaluated epoch".into()))?;
        let last_k = last_k_stats(log, LAST_K).ok().map(|(mean, std)| LastK { k: LAST_K, mean, std });
        Ok(MetricsReport {
            classes: classes.to_vec(),
            final_val_accuracy: last.val_accuracy.unwrap_or(0.0),
            final_confusion: last.val_confusion.clone().expect("checked above"),
            last_k,
            epochs: log.epochs.clone(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::malformed("metrics report", e))
    }

    pub fn render(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_percent).unwrap_or_else(|| "-".into());
        let mut out = format!("{:>5}  {:>12}  {:>9}  {:>9}\n", "epoch", "train_loss", "train_acc", "val_acc");
        for r in &self.epochs {
            writeln!(
                out,
                "{:>5}  {:>12.6}  {:>9}  {:>9}",
                r.epoch,
                r.train_loss,
                opt(r.train_accuracy),
                opt(r.val_accuracy)
            )
            .unwrap();
        }
        writeln!(out, "\nfinal val accuracy: {}", format_percent(self.final_val_accuracy)).unwrap();
        match &self.last_k {
            Some(s) => writeln!(out, "last {} epochs: {}", s.k, format_mean_std(s.mean, s.std)).unwrap(),
            None => writeln!(out, "last {LAST_K} epochs: -").unwrap(),
        }
        out.push_str("\nconfusion matrix (rows: true, columns: predicted)\n");
        out.push_str(&self.final_confusion.render(&self.classes));
        out
    }
}
