//! The collaborative objective.
//!
//! For head `h` with logits `z_h`:
//!
//! ```text
//! q_h   = softmax_T( mean_{j != h} z_j )                  (peer consensus)
//! L_h   = beta * CE(y, softmax_1(z_h)) + (1 - beta) * T^2 * CE(q_h, softmax_T(z_h))
//! L     = sum_h L_h + lambda * 0.5 * ||theta||^2
//! ```
//!
//! Cross-entropies are averaged over the batch. Under
//! [`ScalingMode::LossScale`] the head sum is divided by `H`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Error, Result};
use crate::net::ScalingMode;
use crate::params::{ParamId, ParameterStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `ln(1e-12)`: lower clamp for `log softmax` in the label loss.
pub const LOG_FLOOR: f64 = -27.631021115928547;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollabLossConfig {
    pub beta: f64,
    pub temperature: f64,
    pub weight_decay: f64,
    pub scaling: ScalingMode,
    /// Treat the peer consensus as a constant target.
    pub detach_consensus: bool,
}

impl Default for CollabLossConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            temperature: 2.0,
            weight_decay: 1e-4,
            scaling: ScalingMode::BackpropRescale,
            detach_consensus: true,
        }
    }
}

impl CollabLossConfig {
    /// Plain cross-entropy: `beta = 1`, no soft term.
    pub fn individual() -> Self {
        Self {
            beta: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(config_err(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(config_err(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(config_err(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Data(format!("label {y} outside 0..{classes}")));
        }
        data[i * classes + y] = 1.0;
    }
    Tensor::new(vec![labels.len(), classes], data)
}

fn batch_rows(tape: &Tape, z: Var) -> usize {
    let s = tape.shape(z);
    if s.len() >= 2 {
        s[0]
    } else {
        1
    }
}

/// Mean over rows of `-sum_i target_i * logp_i`.
fn cross_entropy(tape: &mut Tape, target: Var, logp: Var) -> Result<Var> {
    let n = batch_rows(tape, logp) as f64;
    let prod = tape.mul(target, logp)?;
    let s = tape.sum(prod);
    Ok(tape.scale(s, -1.0 / n))
}

/// Peer consensus for head `h` (0-based) as a constant target tensor.
pub fn consensus_target(tape: &Tape, logits: &[Var], h: usize, temperature: f64) -> Result<Tensor> {
    check_peers(logits, h)?;
    let first = tape.value(logits[0]);
    let mut mean = vec![0.0; first.len()];
    let k = (logits.len() - 1) as f64;
    for (j, &z) in logits.iter().enumerate() {
        if j == h {
            continue;
        }
        let zv = tape.value(z);
        if zv.shape() != first.shape() {
            return Err(shape_err("consensus_target", "heads disagree on logit shape"));
        }
        for (m, v) in mean.iter_mut().zip(zv.data()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= k;
    }
    let width = *first.shape().last().unwrap();
    let mut q = vec![0.0; mean.len()];
    for (zr, qr) in mean.chunks(width).zip(q.chunks_mut(width)) {
        qr.copy_from_slice(&crate::kernels::softmax_t(zr, temperature)?);
    }
    Tensor::new(first.shape().to_vec(), q)
}

/// Peer consensus recorded on the tape, so gradients reach the peers.
pub fn consensus_target_attached(tape: &mut Tape, logits: &[Var], h: usize, temperature: f64) -> Result<Var> {
    check_peers(logits, h)?;
    let mut acc: Option<Var> = None;
    for (j, &z) in logits.iter().enumerate() {
        if j != h {
            acc = Some(match acc {
                None => z,
                Some(a) => tape.add(a, z)?,
            });
        }
    }
    let mean = tape.scale(acc.expect("at least one peer"), 1.0 / (logits.len() - 1) as f64);
    tape.softmax_t(mean, temperature)
}

fn check_peers(logits: &[Var], h: usize) -> Result<()> {
    if logits.len() < 2 {
        return Err(config_err(
            "consensus needs at least two heads; use beta = 1 for a single head",
        ));
    }
    if h >= logits.len() {
        return Err(config_err(format!("head {h} out of range for {} heads", logits.len())));
    }
    Ok(())
}

/// Cross-entropy against one-hot targets at temperature 1, with `log`
/// clamped at [`LOG_FLOOR`].
pub fn hard_loss(tape: &mut Tape, targets: Var, z: Var) -> Result<Var> {
    let t = tape.value(targets);
    if t.shape() != tape.shape(z) {
        return Err(shape_err(
            "hard_loss",
            format!("targets {:?} vs logits {:?}", t.shape(), tape.shape(z)),
        ));
    }
    let width = *t.shape().last().unwrap();
    for row in t.data().chunks(width) {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != width {
            return Err(Error::Data(format!("label row {row:?} is not one-hot")));
        }
    }
    let logp = tape.log_softmax_t(z, 1.0, Some(LOG_FLOOR))?;
    cross_entropy(tape, targets, logp)
}

/// Cross-entropy between a soft target `q` and `softmax_T(z)`.
pub fn soft_loss(tape: &mut Tape, q: Var, z: Var, temperature: f64) -> Result<Var> {
    if tape.shape(q) != tape.shape(z) {
        return Err(shape_err(
            "soft_loss",
            format!("target {:?} vs logits {:?}", tape.shape(q), tape.shape(z)),
        ));
    }
    let logp = tape.log_softmax_t(z, temperature, None)?;
    cross_entropy(tape, q, logp)
}

/// Loss of head `h` (0-based).
pub fn head_loss(tape: &mut Tape, targets: Var, logits: &[Var], h: usize, cfg: &CollabLossConfig) -> Result<Var> {
    let z = *logits
        .get(h)
        .ok_or_else(|| config_err(format!("head {h} out of range for {} heads", logits.len())))?;
    let hard = hard_loss(tape, targets, z)?;
    if cfg.beta == 1.0 {
        return Ok(hard);
    }
    let t = cfg.temperature;
    let q = if cfg.detach_consensus {
        let q = consensus_target(tape, logits, h, t)?;
        tape.constant(q)
    } else {
        consensus_target_attached(tape, logits, h, t)?
    };
    let soft = soft_loss(tape, q, z, t)?;
    let hard = tape.scale(hard, cfg.beta);
    let soft = tape.scale(soft, (1.0 - cfg.beta) * t * t);
    tape.add(hard, soft)
}

/// Nodes produced by [`total_loss`].
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub total: Var,
    pub heads: Vec<Var>,
}

/// Sum of head losses (divided by `H` under loss scaling) plus
/// `lambda * 0.5 * ||theta||^2` over the distinct parameters in `params`.
pub fn total_loss(
    tape: &mut Tape,
    targets: Var,
    logits: &[Var],
    cfg: &CollabLossConfig,
    store: &ParameterStore,
    params: &[ParamId],
) -> Result<LossTerms> {
    cfg.validate()?;
    let heads = (0..logits.len())
        .map(|h| head_loss(tape, targets, logits, h, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut sum = heads[0];
    for &l in &heads[1..] {
        sum = tape.add(sum, l)?;
    }
    if cfg.scaling == ScalingMode::LossScale {
        sum = tape.scale(sum, 1.0 / heads.len() as f64);
    }
    let total = add_weight_decay(tape, sum, cfg.weight_decay, store, params)?;
    Ok(LossTerms { total, heads })
}

/// `loss + lambda * 0.5 * sum ||theta||^2`.
pub fn add_weight_decay(
    tape: &mut Tape,
    loss: Var,
    lambda: f64,
    store: &ParameterStore,
    params: &[ParamId],
) -> Result<Var> {
    if lambda == 0.0 || params.is_empty() {
        return Ok(loss);
    }
    let mut reg: Option<Var> = None;
    for &id in params {
        let p = tape.param(store, id);
        let sq = tape.sum_squares(p);
        reg = Some(match reg {
            None => sq,
            Some(r) => tape.add(r, sq)?,
        });
    }
    let reg = tape.scale(reg.expect("non-empty"), 0.5 * lambda);
    tape.add(loss, reg)
}
