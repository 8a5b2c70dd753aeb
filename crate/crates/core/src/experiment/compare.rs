use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Experiment, ExperimentConfig, ExperimentResult};
use crate::error::{config_err, Result};
use crate::loss::CollabLossConfig;
use crate::net::{HeadPattern, ScalingMode};
use crate::optim::OptMode;

/// One arm of a comparison: a label and a full configuration.
#[derive(Debug, Clone)]
pub struct Arm {
    pub label: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub label: String,
    pub result: ExperimentResult,
}

impl ArmResult {
    pub fn mean_error(&self) -> f64 {
        self.result.summary.mean_error
    }
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Individual-learning version of `cfg`: one head, label loss only.
pub(crate) fn individual(cfg: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        pattern: HeadPattern::individual(),
        loss: CollabLossConfig {
            beta: 1.0,
            ..cfg.loss.clone()
        },
        ..cfg.clone()
    }
}

/// Runs every arm on the data already loaded in `base`.
pub fn run_arms(base: &Experiment, arms: Vec<Arm>, sequential: bool, out: Option<&Path>) -> Result<Vec<ArmResult>> {
    let mut results = Vec::with_capacity(arms.len());
    for arm in arms {
        let exp = base.with_config(arm.config)?;
        let result = if sequential { exp.run_sequential()? } else { exp.run()? };
        if let Some(dir) = out {
            result.write(&dir.join(file_safe(&arm.label)))?;
        }
        results.push(ArmResult {
            label: arm.label,
            result,
        });
    }
    if let Some(dir) = out {
        let summaries: Vec<_> = results.iter().map(|r| &r.result.summary).collect();
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summaries)?)?;
    }
    Ok(results)
}

fn write_table<R: Serialize>(rows: &[R], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub noise_level: f64,
    pub pattern: String,
    pub mean_error: f64,
    pub std_error: f64,
    pub runs: usize,
}

/// The individual baseline plus each collaborative pattern (the sweep's
/// list, or the configured pattern) at every noise level.
pub fn run_noise_sweep(base: &Experiment, levels: &[f64], out: Option<&Path>) -> Result<Vec<NoiseRow>> {
    let cfg = &base.config;
    let patterns = if cfg.sweep.patterns.is_empty() {
        vec![cfg.pattern.clone()]
    } else {
        cfg.sweep.patterns.clone()
    };
    let mut rows = Vec::new();
    for &level in levels {
        let with_noise = |c: ExperimentConfig| ExperimentConfig {
            noise: crate::data::NoiseSpec {
                level,
                ..c.noise.clone()
            },
            ..c
        };
        let mut arms = vec![Arm {
            label: format!("rho{level}-individual"),
            config: with_noise(individual(cfg)),
        }];
        for p in &patterns {
            if p.heads() > 1 {
                arms.push(Arm {
                    label: format!("rho{level}-{}", p.label()),
                    config: with_noise(ExperimentConfig {
                        pattern: p.clone(),
                        ..cfg.clone()
                    }),
                });
            }
        }
        let dir = out.map(|d| d.join(format!("rho{level}")));
        for r in run_arms(base, arms, false, dir.as_deref())? {
            let s = &r.result.summary;
            rows.push(NoiseRow {
                noise_level: level,
                pattern: s.label.clone(),
                mean_error: s.mean_error,
                std_error: s.std_error,
                runs: s.seeds.len(),
            });
        }
    }
    if let Some(dir) = out {
        write_table(&rows, &dir.join("noise_sweep.csv"))?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub mode: String,
    pub mean_error: f64,
    pub std_error: f64,
    pub aborted_runs: usize,
}

pub const SCALING_MODES: [ScalingMode; 3] = [ScalingMode::None, ScalingMode::LossScale, ScalingMode::BackpropRescale];

pub fn scaling_label(mode: ScalingMode) -> &'static str {
    match mode {
        ScalingMode::None => "none",
        ScalingMode::LossScale => "loss-scale",
        ScalingMode::BackpropRescale => "backprop-rescale",
    }
}

/// The configured pattern under each scaling mode, same seeds and data.
pub fn run_scaling_ablation(base: &Experiment, out: Option<&Path>) -> Result<Vec<ScalingRow>> {
    let cfg = &base.config;
    let arms = SCALING_MODES
        .iter()
        .map(|&mode| Arm {
            label: scaling_label(mode).to_string(),
            config: ExperimentConfig {
                loss: CollabLossConfig {
                    scaling: mode,
                    ..cfg.loss.clone()
                },
                ..cfg.clone()
            },
        })
        .collect();
    let rows: Vec<ScalingRow> = run_arms(base, arms, false, out)?
        .into_iter()
        .map(|r| ScalingRow {
            mean_error: r.result.summary.mean_error,
            std_error: r.result.summary.std_error,
            aborted_runs: r.result.summary.aborted.len(),
            mode: r.label,
        })
        .collect();
    if let Some(dir) = out {
        write_table(&rows, &dir.join("scaling_ablation.csv"))?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptRow {
    pub mode: String,
    pub head: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_epoch_seconds: f64,
    pub forwards_per_step: usize,
}

/// Simultaneous against alternating updates; seeds run one at a time so
/// the wall-clock columns are comparable.
pub fn run_opt_mode_comparison(base: &Experiment, out: Option<&Path>) -> Result<Vec<OptRow>> {
    let cfg = &base.config;
    let heads = cfg.pattern.heads();
    let arms = [OptMode::Simultaneous, OptMode::Alternative]
        .into_iter()
        .map(|mode| Arm {
            label: match mode {
                OptMode::Simultaneous => "simultaneous".into(),
                OptMode::Alternative => "alternative".into(),
            },
            config: ExperimentConfig {
                sgd: crate::optim::SgdConfig {
                    mode,
                    ..cfg.sgd.clone()
                },
                ..cfg.clone()
            },
        })
        .collect();
    let mut rows = Vec::new();
    for r in run_arms(base, arms, true, out)? {
        let s = &r.result.summary;
        for h in 0..s.head_mean_errors.len() {
            rows.push(OptRow {
                mode: r.label.clone(),
                head: h + 1,
                mean_error: s.head_mean_errors[h],
                std_error: s.head_std_errors[h],
                mean_epoch_seconds: s.mean_epoch_seconds,
                forwards_per_step: if r.label == "alternative" { heads } else { 1 },
            });
        }
    }
    if let Some(dir) = out {
        write_table(&rows, &dir.join("opt_compare.csv"))?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub beta: f64,
    pub temperature: f64,
    pub pattern: String,
    pub mean_error: f64,
    pub std_error: f64,
}

/// Every combination of the sweep's betas, temperatures and split points.
pub fn run_grid_sweep(base: &Experiment, out: Option<&Path>) -> Result<Vec<GridRow>> {
    let cfg = &base.config;
    let patterns: Vec<HeadPattern> = if cfg.sweep.splits.is_empty() {
        vec![cfg.pattern.clone()]
    } else {
        cfg.sweep
            .splits
            .iter()
            .map(|s| HeadPattern::SimpleIlr {
                heads: cfg.pattern.heads().max(2),
                split: s.clone(),
            })
            .collect()
    };
    if patterns.iter().any(|p| p.heads() < 2) {
        return Err(config_err("a beta/temperature sweep needs at least two heads"));
    }
    let mut arms = Vec::new();
    for p in &patterns {
        for &beta in &cfg.sweep.betas {
            for &temperature in &cfg.sweep.temperatures {
                arms.push(Arm {
                    label: format!("{}-beta{beta}-t{temperature}", p.label()),
                    config: ExperimentConfig {
                        pattern: p.clone(),
                        loss: CollabLossConfig {
                            beta,
                            temperature,
                            ..cfg.loss.clone()
                        },
                        ..cfg.clone()
                    },
                });
            }
        }
    }
    let rows: Vec<GridRow> = run_arms(base, arms.clone(), false, out)?
        .into_iter()
        .zip(&arms)
        .map(|(r, a)| GridRow {
            beta: a.config.loss.beta,
            temperature: a.config.loss.temperature,
            pattern: a.config.pattern.label(),
            mean_error: r.result.summary.mean_error,
            std_error: r.result.summary.std_error,
        })
        .collect();
    if let Some(dir) = out {
        write_table(&rows, &dir.join("sweep.csv"))?;
    }
    Ok(rows)
}
