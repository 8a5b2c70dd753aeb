use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Fraction of training examples in the corrupted set.
    pub level: f64,
    /// Seeds both the corrupted-set draw and the per-epoch label streams.
    pub seed: u64,
    /// Redraw only among the `m - 1` wrong classes.
    pub exclude_true_class: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            level: 0.0,
            seed: 0,
            exclude_true_class: false,
        }
    }
}

impl NoiseSpec {
    pub fn clean() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.level) {
            return Err(config_err(format!(
                "noise level must lie in [0, 1], got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// A fixed corrupted index set plus a pure map from epoch to label view.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelNoise {
    spec: NoiseSpec,
    classes: usize,
    corrupted: Vec<usize>,
}

impl LabelNoise {
    pub fn new(spec: &NoiseSpec, n: usize, classes: usize) -> Result<Self> {
        spec.validate()?;
        if spec.exclude_true_class && classes < 2 && spec.level > 0.0 {
            return Err(config_err("exclude_true_class needs at least two classes"));
        }
        let k = (spec.level * n as f64).floor() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut corrupted = sample(&mut rng, n, k.min(n)).into_vec();
        corrupted.sort_unstable();
        Ok(Self {
            spec: spec.clone(),
            classes,
            corrupted,
        })
    }

    /// Sorted indices whose labels are redrawn every epoch.
    pub fn corrupted(&self) -> &[usize] {
        &self.corrupted
    }

    pub fn epoch_labels(&self, truth: &[usize], epoch: usize) -> Vec<usize> {
        let mut labels = truth.to_vec();
        if self.corrupted.is_empty() {
            return labels;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(epoch as u64 + 1);
        for &i in &self.corrupted {
            labels[i] = if self.spec.exclude_true_class {
                let r = rng.random_range(0..self.classes - 1);
                if r >= truth[i] {
                    r + 1
                } else {
                    r
                }
            } else {
                rng.random_range(0..self.classes)
            };
        }
        labels
    }
}

/// Label view of `truth` for `epoch` under `spec`.
pub fn corrupt_labels(truth: &[usize], classes: usize, spec: &NoiseSpec, epoch: usize) -> Result<Vec<usize>> {
    Ok(LabelNoise::new(spec, truth.len(), classes)?.epoch_labels(truth, epoch))
}
