//! SGD with (Nesterov) momentum and a step learning-rate schedule, in the
//! simultaneous and the per-head alternating form.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::loss::{add_weight_decay, head_loss, one_hot, total_loss, CollabLossConfig};
use crate::net::{ScalingMode, TrainingGraph};
use crate::params::{ParamId, ParameterStore};
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptMode {
    /// One forward/backward of the summed loss; every parameter updated once.
    #[default]
    Simultaneous,
    /// Heads take turns: recompute all logits, update only what head `h` reads.
    Alternative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Milestone {
    pub epoch: usize,
    pub divisor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub milestones: Vec<Milestone>,
    pub mode: OptMode,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            momentum: 0.9,
            nesterov: true,
            milestones: Vec::new(),
            mode: OptMode::Simultaneous,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config_err(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(config_err(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        for w in self.milestones.windows(2) {
            if w[1].epoch <= w[0].epoch {
                return Err(config_err("milestones must be strictly increasing"));
            }
        }
        if self.milestones.iter().any(|m| !(m.divisor > 0.0)) {
            return Err(config_err("milestone divisors must be positive"));
        }
        Ok(())
    }
}

/// Learning rate in effect during `epoch`: the base rate divided by every
/// milestone already reached.
pub fn schedule_lr(cfg: &SgdConfig, epoch: usize) -> f64 {
    cfg.milestones
        .iter()
        .filter(|m| epoch >= m.epoch)
        .fold(cfg.lr, |lr, m| lr / m.divisor)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
}

impl TrainState {
    pub fn new(cfg: &SgdConfig) -> Self {
        Self {
            epoch: 0,
            step: 0,
            lr: cfg.lr,
        }
    }

    pub fn start_epoch(&mut self, epoch: usize, cfg: &SgdConfig) {
        self.epoch = epoch;
        self.lr = schedule_lr(cfg, epoch);
    }
}

/// One momentum update of `ids` from the gradients held in `store`.
pub fn sgd_update(store: &mut ParameterStore, ids: &[ParamId], lr: f64, momentum: f64, nesterov: bool) {
    for &id in ids {
        let p = store.get_mut(id);
        let (value, grad, vel) = (p.value.data_mut(), p.grad.data(), p.velocity.data_mut());
        for ((w, &g), v) in value.iter_mut().zip(grad).zip(vel.iter_mut()) {
            *v = momentum * *v + g;
            let step = if nesterov { g + momentum * *v } else { *v };
            *w -= lr * step;
        }
    }
}

/// A labelled mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

/// What one optimizer step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub total_loss: f64,
    pub head_losses: Vec<f64>,
    pub forward_passes: usize,
    /// Updates applied to each parameter, indexed by [`ParamId::index`].
    pub updates: Vec<usize>,
}

fn finite(v: f64, what: &str, step: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} at step {step}")))
    }
}

pub fn step(
    graph: &mut TrainingGraph,
    batch: &Batch,
    loss_cfg: &CollabLossConfig,
    sgd: &SgdConfig,
    state: &mut TrainState,
) -> Result<StepRecord> {
    match sgd.mode {
        OptMode::Simultaneous => step_simultaneous(graph, batch, loss_cfg, sgd, state),
        OptMode::Alternative => step_alternative(graph, batch, loss_cfg, sgd, state),
    }
}

pub fn step_simultaneous(
    graph: &mut TrainingGraph,
    batch: &Batch,
    loss_cfg: &CollabLossConfig,
    sgd: &SgdConfig,
    state: &mut TrainState,
) -> Result<StepRecord> {
    graph.store_mut().zero_grad();
    let all: Vec<ParamId> = graph.store().ids().collect();
    let targets = one_hot(&batch.labels, graph.spec().classes)?;

    let mut tape = Tape::new();
    let x = tape.constant(batch.inputs.clone());
    let y = tape.constant(targets);
    let logits = graph.forward(&mut tape, x)?;
    let terms = total_loss(&mut tape, y, &logits, loss_cfg, graph.store(), &all)?;
    let total = finite(tape.value(terms.total).item(), "total loss", state.step)?;
    let head_losses = terms.heads.iter().map(|&v| tape.value(v).item()).collect();

    tape.backward(terms.total)?.accumulate_into(graph.store_mut());
    sgd_update(graph.store_mut(), &all, state.lr, sgd.momentum, sgd.nesterov);
    state.step += 1;

    Ok(StepRecord {
        total_loss: total,
        head_losses,
        forward_passes: 1,
        updates: vec![1; all.len()],
    })
}

pub fn step_alternative(
    graph: &mut TrainingGraph,
    batch: &Batch,
    loss_cfg: &CollabLossConfig,
    sgd: &SgdConfig,
    state: &mut TrainState,
) -> Result<StepRecord> {
    loss_cfg.validate()?;
    let heads = graph.head_count();
    let targets = one_hot(&batch.labels, graph.spec().classes)?;
    let mut updates = vec![0; graph.store().len()];
    let mut head_losses = Vec::with_capacity(heads);
    let reg = loss_cfg.weight_decay * graph.store().half_sq_norm();

    for h in 0..heads {
        graph.store_mut().zero_grad();
        let own = graph.head_params(h);
        let mut tape = Tape::new();
        let x = tape.constant(batch.inputs.clone());
        let y = tape.constant(targets.clone());
        let logits = graph.forward(&mut tape, x)?;
        let mut loss = head_loss(&mut tape, y, &logits, h, loss_cfg)?;
        head_losses.push(finite(tape.value(loss).item(), "head loss", state.step)?);
        if loss_cfg.scaling == ScalingMode::LossScale {
            loss = tape.scale(loss, 1.0 / heads as f64);
        }
        let loss = add_weight_decay(&mut tape, loss, loss_cfg.weight_decay, graph.store(), &own)?;
        tape.backward(loss)?.accumulate_into(graph.store_mut());
        sgd_update(graph.store_mut(), &own, state.lr, sgd.momentum, sgd.nesterov);
        for p in own {
            updates[p.index()] += 1;
        }
    }
    state.step += 1;

    let mut total: f64 = head_losses.iter().sum();
    if loss_cfg.scaling == ScalingMode::LossScale {
        total /= heads as f64;
    }
    Ok(StepRecord {
        total_loss: total + reg,
        head_losses,
        forward_passes: heads,
        updates,
    })
}
