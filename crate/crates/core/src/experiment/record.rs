use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::histogram::LayerHistogram;

/// Deterministic per-epoch measurements of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    /// Mean over the epoch's batches of the total objective.
    pub train_loss: f64,
    pub head_losses: Vec<f64>,
    /// Test error of every head; index 0 is the evaluation head.
    pub test_errors: Vec<f64>,
}

impl EpochMetrics {
    pub fn test_error(&self) -> f64 {
        self.test_errors[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    /// Wall-clock seconds spent in optimizer steps per epoch (evaluation excluded).
    pub epoch_seconds: Vec<f64>,
    pub training_params: usize,
    pub inference_params: usize,
    /// Scalars held on the tape for one training batch.
    pub activations: usize,
    pub aborted: Option<String>,
    pub histograms: Vec<LayerHistogram>,
}

impl RunRecord {
    /// Head-1 error after the last epoch; an aborted run counts as 1.
    pub fn final_error(&self) -> f64 {
        self.final_head_errors()[0]
    }

    pub fn final_head_errors(&self) -> Vec<f64> {
        match (&self.aborted, self.epochs.last()) {
            (None, Some(e)) => e.test_errors.clone(),
            (_, Some(e)) => vec![1.0; e.test_errors.len()],
            (_, None) => vec![1.0],
        }
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epoch_seconds.is_empty() {
            0.0
        } else {
            self.epoch_seconds.iter().sum::<f64>() / self.epoch_seconds.len() as f64
        }
    }

    /// `8 * (3 * params + activations)` bytes: value, gradient and velocity
    /// per parameter plus one training tape.
    pub fn memory_estimate_bytes(&self) -> usize {
        8 * (3 * self.training_params + self.activations)
    }

    /// Long format `run,epoch,metric,value`; values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_metrics_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["run", "epoch", "metric", "value"])?;
        for e in &self.epochs {
            let epoch = e.epoch.to_string();
            let mut row =
                |metric: &str, value: f64| w.write_record([self.label.as_str(), &epoch, metric, &value.to_string()]);
            row("lr", e.lr)?;
            row("train_loss", e.train_loss)?;
            for (h, &l) in e.head_losses.iter().enumerate() {
                row(&format!("train_loss_head{}", h + 1), l)?;
            }
            for (h, &err) in e.test_errors.iter().enumerate() {
                row(&format!("test_error_head{}", h + 1), err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timing_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["run", "epoch", "seconds"])?;
        for (e, s) in self.epochs.iter().zip(&self.epoch_seconds) {
            w.write_record([self.label.clone(), e.epoch.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parses a metrics file back into `(run label, epochs)`.
pub fn read_metrics_csv(path: &Path) -> Result<(String, Vec<EpochMetrics>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut label = String::new();
    let mut epochs: Vec<EpochMetrics> = Vec::new();
    for row in reader.records() {
        let row = row?;
        let bad = || Error::Data(format!("{}: malformed row {row:?}", path.display()));
        label = row[0].to_string();
        let epoch: usize = row[1].parse().map_err(|_| bad())?;
        let value: f64 = row[3].parse().map_err(|_| bad())?;
        if epochs.last().is_none_or(|e| e.epoch != epoch) {
            epochs.push(EpochMetrics {
                epoch,
                lr: f64::NAN,
                train_loss: f64::NAN,
                head_losses: Vec::new(),
                test_errors: Vec::new(),
            });
        }
        let e = epochs.last_mut().unwrap();
        let indexed = |prefix: &str| -> Option<usize> { row[2].strip_prefix(prefix)?.parse().ok() };
        match &row[2] {
            "lr" => e.lr = value,
            "train_loss" => e.train_loss = value,
            _ => {
                if let Some(h) = indexed("train_loss_head") {
                    if h != e.head_losses.len() + 1 {
                        return Err(bad());
                    }
                    e.head_losses.push(value);
                } else if let Some(h) = indexed("test_error_head") {
                    if h != e.test_errors.len() + 1 {
                        return Err(bad());
                    }
                    e.test_errors.push(value);
                } else {
                    return Err(bad());
                }
            }
        }
    }
    Ok((label, epochs))
}

/// Mean and sample standard deviation (`n - 1`; zero for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Across-seed aggregate of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub seeds: Vec<u64>,
    pub final_errors: Vec<f64>,
    pub mean_error: f64,
    pub std_error: f64,
    /// Mean final error of each head.
    pub head_mean_errors: Vec<f64>,
    pub head_std_errors: Vec<f64>,
    pub training_params: usize,
    pub inference_params: usize,
    pub activations: usize,
    pub memory_estimate_bytes: usize,
    pub mean_epoch_seconds: f64,
    pub aborted: Vec<(u64, String)>,
}

impl Summary {
    pub fn from_records(label: &str, records: &[RunRecord]) -> Self {
        let finals: Vec<f64> = records.iter().map(RunRecord::final_error).collect();
        let (mean_error, std_error) = mean_std(&finals);
        let heads = records.iter().map(|r| r.final_head_errors().len()).max().unwrap_or(1);
        let (head_mean_errors, head_std_errors) = (0..heads)
            .map(|h| {
                let v: Vec<f64> = records
                    .iter()
                    .map(|r| *r.final_head_errors().get(h).unwrap_or(&1.0))
                    .collect();
                mean_std(&v)
            })
            .unzip();
        let first = records.first();
        Self {
            label: label.to_string(),
            seeds: records.iter().map(|r| r.seed).collect(),
            final_errors: finals,
            mean_error,
            std_error,
            head_mean_errors,
            head_std_errors,
            training_params: first.map_or(0, |r| r.training_params),
            inference_params: first.map_or(0, |r| r.inference_params),
            activations: first.map_or(0, |r| r.activations),
            memory_estimate_bytes: first.map_or(0, RunRecord::memory_estimate_bytes),
            mean_epoch_seconds: mean_std(&records.iter().map(RunRecord::mean_epoch_seconds).collect::<Vec<_>>()).0,
            aborted: records
                .iter()
                .filter_map(|r| r.aborted.clone().map(|m| (r.seed, m)))
                .collect(),
        }
    }
}
