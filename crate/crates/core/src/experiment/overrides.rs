use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{config_err, Result};
use crate::net::{HeadPattern, NetSpec, ScalingMode, TrainingGraph};
use crate::optim::OptMode;

/// Command-line adjustments layered over a config file. List-valued fields
/// feed the sweep grid; their first value also sets the single-run setting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub seeds: Vec<u64>,
    pub out: Option<String>,
    pub heads: Option<usize>,
    pub pattern: Option<String>,
    pub beta: Vec<f64>,
    pub tau: Vec<f64>,
    pub noise: Vec<f64>,
    pub mode: Option<String>,
    pub epochs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if self.pattern.is_some() || self.heads.is_some() {
            let spec = cfg.net_spec()?;
            let name = self.pattern.clone().unwrap_or_else(|| pattern_name(&cfg.pattern));
            cfg.pattern = parse_pattern(&name, self.heads, &spec, &cfg.pattern)?;
            if cfg.pattern.heads() == 1 && self.beta.is_empty() {
                cfg.loss.beta = 1.0;
            }
        }
        if let Some(&b) = self.beta.first() {
            cfg.loss.beta = b;
            cfg.sweep.betas = self.beta.clone();
        }
        if let Some(&t) = self.tau.first() {
            cfg.loss.temperature = t;
            cfg.sweep.temperatures = self.tau.clone();
        }
        if let Some(&r) = self.noise.first() {
            cfg.noise.level = r;
            cfg.sweep.noise_levels = self.noise.clone();
        }
        if let Some(mode) = &self.mode {
            match mode.as_str() {
                "simultaneous" => cfg.sgd.mode = OptMode::Simultaneous,
                "alternative" => cfg.sgd.mode = OptMode::Alternative,
                "none" => cfg.loss.scaling = ScalingMode::None,
                "loss-scale" => cfg.loss.scaling = ScalingMode::LossScale,
                "backprop-rescale" => cfg.loss.scaling = ScalingMode::BackpropRescale,
                other => {
                    return Err(config_err(format!(
                    "unknown mode '{other}'; expected simultaneous, alternative, none, loss-scale or backprop-rescale"
                )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn pattern_name(p: &HeadPattern) -> String {
    match p {
        HeadPattern::MultiInstance { heads: 1 } => "individual".into(),
        HeadPattern::MultiInstance { .. } => "multi-instance".into(),
        HeadPattern::SimpleIlr { split, .. } => format!("simple-ilr@{split}"),
        HeadPattern::HierarchicalIlr { splits, .. } => format!("hierarchical-ilr@{}", splits.join("+")),
    }
}

/// Parses `individual`, `multi-instance`, `simple-ilr[@split]` or
/// `hierarchical-ilr[@s1+s2+...]`. Missing splits come from `current` when
/// it has the same kind, otherwise from the network's markers.
pub fn parse_pattern(text: &str, heads: Option<usize>, spec: &NetSpec, current: &HeadPattern) -> Result<HeadPattern> {
    let (kind, splits) = match text.split_once('@') {
        Some((k, s)) => (k, Some(s.split('+').map(str::to_string).collect::<Vec<_>>())),
        None => (text, None),
    };
    let markers: Vec<String> = spec.splits.iter().map(|m| m.name.clone()).collect();
    let pattern = match kind {
        "individual" => HeadPattern::individual(),
        "multi-instance" => HeadPattern::MultiInstance {
            heads: heads.unwrap_or(2),
        },
        "simple-ilr" => {
            let split = match (splits, current) {
                (Some(s), _) => s[0].clone(),
                (None, HeadPattern::SimpleIlr { split, .. }) => split.clone(),
                (None, _) => markers
                    .first()
                    .cloned()
                    .ok_or_else(|| config_err("network has no split markers"))?,
            };
            HeadPattern::SimpleIlr {
                heads: heads.unwrap_or(2),
                split,
            }
        }
        "hierarchical-ilr" => {
            let splits = match (splits, current) {
                (Some(s), _) => s,
                (None, HeadPattern::HierarchicalIlr { splits, .. }) => splits.clone(),
                (None, _) => markers.iter().take(2).cloned().collect(),
            };
            let h = heads.unwrap_or(1 << splits.len());
            let levels = splits.len();
            if levels == 0 || !h.is_multiple_of(1 << (levels - 1)) {
                return Err(config_err(format!(
                    "{h} heads cannot be split binary over {levels} levels"
                )));
            }
            let mut branching = vec![2; levels];
            branching[levels - 1] = h >> (levels - 1);
            HeadPattern::HierarchicalIlr {
                heads: h,
                splits,
                branching,
            }
        }
        other => {
            return Err(config_err(format!(
                "unknown pattern '{other}'; expected individual, multi-instance, simple-ilr or hierarchical-ilr"
            )))
        }
    };
    TrainingGraph::build(spec, &pattern, ScalingMode::BackpropRescale, 0)?;
    Ok(pattern)
}
