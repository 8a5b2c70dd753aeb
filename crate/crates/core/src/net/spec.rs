use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Error, Result};
use crate::params::{ParamId, ParameterStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

fn one() -> usize {
    1
}

/// One layer of the target network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        inputs: usize,
        outputs: usize,
    },
    Conv {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Relu,
    AvgPool {
        size: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense {
            name: None,
            inputs,
            outputs,
        }
    }

    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        LayerSpec::Conv {
            name: None,
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv { .. })
    }

    /// `(weight shape, bias length, fan-in)` for parametric layers.
    fn param_shapes(&self) -> Option<(Vec<usize>, usize, usize)> {
        match *self {
            LayerSpec::Dense { inputs, outputs, .. } => Some((vec![inputs, outputs], outputs, inputs)),
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((
                vec![out_channels, in_channels, kernel, kernel],
                out_channels,
                in_channels * kernel * kernel,
            )),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .map(|(w, b, _)| w.iter().product::<usize>() + b)
            .unwrap_or(0)
    }

    /// Per-example output shape for a per-example input shape.
    fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match *self {
            LayerSpec::Dense { inputs, outputs, .. } => {
                if input != [inputs] {
                    return Err(format!("dense expects [{inputs}], got {input:?}"));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return Err(format!("conv expects [{in_channels}, H, W], got {input:?}"));
                }
                if stride == 0 || input[1] + 2 * padding < kernel || input[2] + 2 * padding < kernel {
                    return Err(format!("kernel {kernel} / stride {stride} do not fit {input:?}"));
                }
                Ok(vec![
                    out_channels,
                    (input[1] + 2 * padding - kernel) / stride + 1,
                    (input[2] + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::AvgPool { size } => {
                if input.len() != 3 || size == 0 || !input[1].is_multiple_of(size) || !input[2].is_multiple_of(size) {
                    return Err(format!("pool window {size} does not tile {input:?}"));
                }
                Ok(vec![input[0], input[1] / size, input[2] / size])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

/// Named boundary between layers `after - 1` and `after`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMarker {
    pub name: String,
    pub after: usize,
}

/// Declarative description of the target network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    /// Shape of one example, e.g. `[64]` or `[1, 8, 8]`.
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub splits: Vec<SplitMarker>,
}

impl NetSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: NetSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-example shape after each layer.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .map_err(|d| shape_err(format!("layer {i} ({})", self.layer_name(i)), d))?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(config_err("network has no layers"));
        }
        if self.classes < 2 {
            return Err(config_err("need at least two classes"));
        }
        let shapes = self.layer_shapes()?;
        if shapes.last().map(Vec::as_slice) != Some(&[self.classes][..]) {
            return Err(config_err(format!(
                "network ends in {:?}, expected [{}] logits",
                shapes.last(),
                self.classes
            )));
        }
        let mut prev = 0;
        for (i, s) in self.splits.iter().enumerate() {
            if s.after == 0 || s.after >= self.layers.len() {
                return Err(config_err(format!(
                    "split '{}' at {} is not strictly between layers",
                    s.name, s.after
                )));
            }
            if i > 0 && s.after <= prev {
                return Err(config_err(format!("split '{}' is out of order", s.name)));
            }
            if self.splits[..i].iter().any(|o| o.name == s.name) {
                return Err(config_err(format!("duplicate split name '{}'", s.name)));
            }
            prev = s.after;
        }
        Ok(())
    }

    pub fn split_position(&self, name: &str) -> Result<usize> {
        self.splits
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.after)
            .ok_or_else(|| config_err(format!("unknown split marker '{name}'")))
    }

    /// Display name of layer `i`: its explicit name, or `dense<k>` / `conv<k>`
    /// numbering parametric layers of that kind from 1.
    pub fn layer_name(&self, i: usize) -> String {
        let kind = |l: &LayerSpec| match l {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::AvgPool { .. } => "pool",
            LayerSpec::Flatten => "flatten",
        };
        match &self.layers[i] {
            LayerSpec::Dense { name: Some(n), .. } | LayerSpec::Conv { name: Some(n), .. } => n.clone(),
            layer => {
                let k = kind(layer);
                let ordinal = self.layers[..=i].iter().filter(|l| kind(l) == k).count();
                format!("{k}{ordinal}")
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn param_count_range(&self, range: std::ops::Range<usize>) -> usize {
        self.layers[range].iter().map(LayerSpec::param_count).sum()
    }

    /// Four-layer ReLU perceptron `d -> h -> h -> h/2 -> m` with a split
    /// marker `block<k>` after each hidden block.
    pub fn mlp4(inputs: usize, hidden: usize, classes: usize) -> Self {
        NetSpec {
            input_shape: vec![inputs],
            classes,
            layers: vec![
                LayerSpec::dense(inputs, hidden),
                LayerSpec::Relu,
                LayerSpec::dense(hidden, hidden),
                LayerSpec::Relu,
                LayerSpec::dense(hidden, hidden / 2),
                LayerSpec::Relu,
                LayerSpec::dense(hidden / 2, classes),
            ],
            splits: vec![
                SplitMarker {
                    name: "block1".into(),
                    after: 2,
                },
                SplitMarker {
                    name: "block2".into(),
                    after: 4,
                },
                SplitMarker {
                    name: "block3".into(),
                    after: 6,
                },
            ],
        }
    }

    /// Two-convolution network for small single-channel images whose side is
    /// divisible by 4. Split markers follow each conv block.
    pub fn cnn2(side: usize, channels: (usize, usize), classes: usize) -> Self {
        let (c1, c2) = channels;
        NetSpec {
            input_shape: vec![1, side, side],
            classes,
            layers: vec![
                LayerSpec::conv(1, c1, 3, 1),
                LayerSpec::Relu,
                LayerSpec::AvgPool { size: 2 },
                LayerSpec::conv(c1, c2, 3, 1),
                LayerSpec::Relu,
                LayerSpec::AvgPool { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::dense(c2 * (side / 4) * (side / 4), classes),
            ],
            splits: vec![
                SplitMarker {
                    name: "block1".into(),
                    after: 3,
                },
                SplitMarker {
                    name: "block2".into(),
                    after: 6,
                },
            ],
        }
    }
}

/// Parameter handles of one parametric layer instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerParams {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// He-scaled normal weights, zero bias.
pub(crate) fn init_layer(
    store: &mut ParameterStore,
    layer: &LayerSpec,
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Option<LayerParams> {
    let (wshape, blen, fan_in) = layer.param_shapes()?;
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let n: usize = wshape.iter().product();
    let w: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    let weight = store.add(format!("{prefix}.weight"), Tensor::new(wshape, w).expect("shape"));
    let bias = store.add(format!("{prefix}.bias"), Tensor::zeros(vec![blen]));
    Some(LayerParams { weight, bias })
}

/// Deterministic generator for copy `copy` of layer `layer` under `seed`.
/// Head 1 always uses copy 0, so its initial weights match a single network
/// built from the same seed whatever the head pattern.
pub(crate) fn layer_rng(seed: u64, layer: usize, copy: usize) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((layer as u64) << 20) | copy as u64);
    rng
}

/// Records layer `i` of `spec` on the tape.
pub(crate) fn apply_layer(
    tape: &mut Tape,
    store: &ParameterStore,
    spec: &NetSpec,
    i: usize,
    params: Option<LayerParams>,
    x: Var,
) -> Result<Var> {
    let named = |e: Error| match e {
        Error::Shape { op, detail } => Error::Shape {
            op: format!("{op} at layer {i} ({})", spec.layer_name(i)),
            detail,
        },
        other => other,
    };
    let out = match (&spec.layers[i], params) {
        (LayerSpec::Dense { .. }, Some(p)) => {
            let w = tape.param(store, p.weight);
            let b = tape.param(store, p.bias);
            let y = tape.matmul(x, w).map_err(named)?;
            tape.add_bias(y, b).map_err(named)?
        }
        (LayerSpec::Conv { stride, padding, .. }, Some(p)) => {
            let w = tape.param(store, p.weight);
            let b = tape.param(store, p.bias);
            let y = tape.conv2d(x, w, *stride, *padding).map_err(named)?;
            tape.add_bias(y, b).map_err(named)?
        }
        (LayerSpec::Relu, _) => tape.relu(x),
        (LayerSpec::AvgPool { size }, _) => tape.avgpool2d(x, *size).map_err(named)?,
        (LayerSpec::Flatten, _) => tape.flatten(x).map_err(named)?,
        (_, None) => return Err(config_err(format!("layer {i} is missing its parameters"))),
    };
    Ok(out)
}
