//! Multi-head training graphs built from a [`NetSpec`].
//!
//! The graph is a tree of *branches*. Each branch owns one instance of a
//! contiguous run of layers; its children continue from its output. Heads are
//! the leaves, numbered in creation order. Under
//! [`ScalingMode::BackpropRescale`] a branch with `b > 1` children passes its
//! output through a rescale node of factor `1/b` before fanning out, so a
//! layer shared by all `H` heads receives the head-averaged gradient.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::spec::{apply_layer, init_layer, layer_rng, LayerParams, NetSpec};
use crate::error::{config_err, Result};
use crate::params::{ParamId, ParameterStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// How heads are laid out on top of the target network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HeadPattern {
    /// `heads` independent copies of the whole network.
    MultiInstance { heads: usize },
    /// One shared trunk up to `split`, then `heads` independent branches.
    SimpleIlr { heads: usize, split: String },
    /// Nested sharing: level `k` fans out `branching[k]` ways at `splits[k]`.
    HierarchicalIlr {
        heads: usize,
        splits: Vec<String>,
        branching: Vec<usize>,
    },
}

impl HeadPattern {
    /// A single network (`H = 1`).
    pub fn individual() -> Self {
        HeadPattern::MultiInstance { heads: 1 }
    }

    pub fn heads(&self) -> usize {
        match self {
            HeadPattern::MultiInstance { heads }
            | HeadPattern::SimpleIlr { heads, .. }
            | HeadPattern::HierarchicalIlr { heads, .. } => *heads,
        }
    }

    pub fn label(&self) -> String {
        match self {
            HeadPattern::MultiInstance { heads: 1 } => "individual".into(),
            HeadPattern::MultiInstance { heads } => format!("multi-instance-h{heads}"),
            HeadPattern::SimpleIlr { heads, split } => format!("simple-ilr-h{heads}@{split}"),
            HeadPattern::HierarchicalIlr { heads, splits, .. } => {
                format!("hierarchical-ilr-h{heads}@{}", splits.join("+"))
            }
        }
    }

    /// Layer boundaries and per-level fan-out for `spec`.
    fn levels(&self, spec: &NetSpec) -> Result<(Vec<usize>, Vec<usize>)> {
        let layers = spec.layers.len();
        let h = self.heads();
        if h < 1 {
            return Err(config_err("head count must be at least 1"));
        }
        match self {
            HeadPattern::MultiInstance { .. } => Ok((vec![0, layers], vec![h])),
            HeadPattern::SimpleIlr { split, .. } => {
                let at = spec.split_position(split)?;
                Ok((vec![0, at, layers], vec![1, h]))
            }
            HeadPattern::HierarchicalIlr { splits, branching, .. } => {
                if splits.len() < 2 {
                    return Err(config_err("hierarchical sharing needs at least two split markers"));
                }
                if branching.len() != splits.len() {
                    return Err(config_err(format!(
                        "{} split markers but {} branching factors",
                        splits.len(),
                        branching.len()
                    )));
                }
                if branching.iter().any(|&b| b < 1) {
                    return Err(config_err("branching factors must be at least 1"));
                }
                let product: usize = branching.iter().product();
                if product != h {
                    return Err(config_err(format!(
                        "branching factors {branching:?} give {product} heads, expected {h}"
                    )));
                }
                let mut bounds = vec![0];
                for s in splits {
                    let at = spec.split_position(s)?;
                    if at <= *bounds.last().unwrap() {
                        return Err(config_err(format!("split marker '{s}' is out of order")));
                    }
                    bounds.push(at);
                }
                bounds.push(layers);
                let mut fan = vec![1];
                fan.extend_from_slice(branching);
                Ok((bounds, fan))
            }
        }
    }
}

/// Treatment of the summed head losses at shared layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    /// Identity-forward nodes scale shared-layer gradients by `1/b` per fan-out.
    #[default]
    BackpropRescale,
    /// The head-loss sum is multiplied by `1/H`.
    LossScale,
    /// Plain sum of head losses.
    None,
}

#[derive(Debug, Clone)]
struct Branch {
    parent: Option<usize>,
    layers: Range<usize>,
    params: Vec<Option<LayerParams>>,
    children: Vec<usize>,
    rescale: Option<f64>,
}

/// A rescale node inserted at a branching point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescalePoint {
    /// Boundary (number of layers below) where the node sits.
    pub after_layer: usize,
    pub factor: f64,
    pub fan_out: usize,
}

/// Parameter counts of a training graph, per subnet level and in total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    /// Scalars held at each level, summed over all instances at that level.
    pub per_level: Vec<usize>,
    pub total: usize,
    /// Scalars in one instance of the target network.
    pub single: usize,
}

#[derive(Debug, Clone)]
pub struct TrainingGraph {
    spec: NetSpec,
    pattern: HeadPattern,
    scaling: ScalingMode,
    store: ParameterStore,
    branches: Vec<Branch>,
    heads: Vec<usize>,
    bounds: Vec<usize>,
}

impl TrainingGraph {
    /// Builds the multi-head graph. Shared layers are initialized once; every
    /// branch copy draws from its own stream derived from `seed`.
    pub fn build(spec: &NetSpec, pattern: &HeadPattern, scaling: ScalingMode, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (bounds, fan) = pattern.levels(spec)?;
        let mut store = ParameterStore::new();
        let mut branches: Vec<Branch> = Vec::new();
        let mut frontier: Vec<Option<usize>> = vec![None];

        for (level, &f) in fan.iter().enumerate() {
            let range = bounds[level]..bounds[level + 1];
            let mut next = Vec::with_capacity(frontier.len() * f);
            let mut copy = 0;
            for parent in &frontier {
                for _ in 0..f {
                    let idx = branches.len();
                    let params = range
                        .clone()
                        .map(|l| {
                            let mut rng = layer_rng(seed, l, copy);
                            let prefix = format!("{}#{copy}", spec.layer_name(l));
                            init_layer(&mut store, &spec.layers[l], &prefix, &mut rng)
                        })
                        .collect();
                    branches.push(Branch {
                        parent: *parent,
                        layers: range.clone(),
                        params,
                        children: Vec::new(),
                        rescale: None,
                    });
                    if let Some(p) = parent {
                        branches[*p].children.push(idx);
                    }
                    next.push(Some(idx));
                    copy += 1;
                }
            }
            frontier = next;
        }

        if scaling == ScalingMode::BackpropRescale {
            for b in &mut branches {
                if b.children.len() > 1 {
                    b.rescale = Some(1.0 / b.children.len() as f64);
                }
            }
        }

        let heads = frontier.into_iter().map(|b| b.expect("leaf")).collect();
        Ok(Self {
            spec: spec.clone(),
            pattern: pattern.clone(),
            scaling,
            store,
            branches,
            heads,
            bounds,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn pattern(&self) -> &HeadPattern {
        &self.pattern
    }

    pub fn scaling(&self) -> ScalingMode {
        self.scaling
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    /// Records the forward pass of every head; returns one logit node per head.
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<Vec<Var>> {
        let mut outputs: Vec<Option<Var>> = vec![None; self.branches.len()];
        for (i, b) in self.branches.iter().enumerate() {
            let mut x = match b.parent {
                Some(p) => outputs[p].expect("parents precede children"),
                None => input,
            };
            for (l, params) in b.layers.clone().zip(&b.params) {
                x = apply_layer(tape, &self.store, &self.spec, l, *params, x)?;
            }
            if let Some(factor) = b.rescale {
                x = tape.rescale_identity(x, factor)?;
            }
            outputs[i] = Some(x);
        }
        Ok(self
            .heads
            .iter()
            .map(|&h| outputs[h].expect("leaf evaluated"))
            .collect())
    }

    /// Logits of every head for a batch, without keeping the tape.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let x = tape.constant(batch.clone());
        let heads = self.forward(&mut tape, x)?;
        Ok(heads.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    fn path(&self, head: usize) -> Vec<usize> {
        let mut path = vec![self.heads[head]];
        while let Some(p) = self.branches[*path.last().unwrap()].parent {
            path.push(p);
        }
        path.reverse();
        path
    }

    /// Parameters head `head` (0-based) depends on, bottom layer first.
    pub fn head_params(&self, head: usize) -> Vec<ParamId> {
        self.path(head)
            .into_iter()
            .flat_map(|b| {
                self.branches[b]
                    .params
                    .iter()
                    .flatten()
                    .flat_map(|p| [p.weight, p.bias])
            })
            .collect()
    }

    /// For each parameter (indexed by [`ParamId::index`]), the heads that read it.
    pub fn param_heads(&self) -> Vec<Vec<usize>> {
        let mut map = vec![Vec::new(); self.store.len()];
        for h in 0..self.heads.len() {
            for p in self.head_params(h) {
                map[p.index()].push(h);
            }
        }
        map
    }

    /// Parametric layers along head `head`'s path as `(layer index, name, params)`.
    pub fn head_layers(&self, head: usize) -> Vec<(usize, String, LayerParams)> {
        self.path(head)
            .into_iter()
            .flat_map(|b| {
                let br = &self.branches[b];
                br.layers
                    .clone()
                    .zip(br.params.iter())
                    .filter_map(|(l, p)| p.map(|p| (l, self.spec.layer_name(l), p)))
            })
            .collect()
    }

    pub fn rescale_points(&self) -> Vec<RescalePoint> {
        self.branches
            .iter()
            .filter_map(|b| {
                b.rescale.map(|factor| RescalePoint {
                    after_layer: b.layers.end,
                    factor,
                    fan_out: b.children.len(),
                })
            })
            .collect()
    }

    pub fn parameter_counts(&self) -> ParamCounts {
        let mut per_level = vec![0; self.bounds.len() - 1];
        for b in &self.branches {
            let level = self
                .bounds
                .iter()
                .position(|&x| x == b.layers.start)
                .expect("level boundary");
            per_level[level] += self.spec.param_count_range(b.layers.clone());
        }
        ParamCounts {
            total: self.store.scalar_count(),
            per_level,
            single: self.spec.param_count(),
        }
    }

    /// Keeps head `head` (1-based) and its dependencies as a standalone network.
    pub fn extract_inference_graph(&self, head: usize) -> Result<InferenceNet> {
        if head < 1 || head > self.heads.len() {
            return Err(config_err(format!(
                "head index {head} out of range 1..={}",
                self.heads.len()
            )));
        }
        let mut store = ParameterStore::new();
        let mut layers = vec![None; self.spec.layers.len()];
        for (l, name, p) in self.head_layers(head - 1) {
            let weight = store.add(format!("{name}.weight"), self.store.value(p.weight).clone());
            let bias = store.add(format!("{name}.bias"), self.store.value(p.bias).clone());
            layers[l] = Some(LayerParams { weight, bias });
        }
        Ok(InferenceNet {
            spec: self.spec.clone(),
            store,
            layers,
        })
    }

    /// Overwrites every head's weights with those of `net`, making all branch
    /// copies identical. Test fixture for the gradient-scaling identities.
    pub fn load_every_head(&mut self, net: &InferenceNet) -> Result<()> {
        if net.spec != self.spec {
            return Err(config_err("network spec differs from the training graph's"));
        }
        for b in &self.branches {
            for (l, p) in b.layers.clone().zip(&b.params) {
                if let (Some(dst), Some(src)) = (p, net.layers[l]) {
                    let store = &mut self.store;
                    store.get_mut(dst.weight).value = net.store.value(src.weight).clone();
                    store.get_mut(dst.bias).value = net.store.value(src.bias).clone();
                }
            }
        }
        Ok(())
    }
}

/// A single instance of the target network.
#[derive(Debug, Clone)]
pub struct InferenceNet {
    spec: NetSpec,
    store: ParameterStore,
    layers: Vec<Option<LayerParams>>,
}

impl InferenceNet {
    /// Fresh network with the same initialization head 1 of any training
    /// graph receives from `seed`.
    pub fn new(spec: &NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut store = ParameterStore::new();
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let mut rng = layer_rng(seed, l, 0);
                init_layer(&mut store, layer, &spec.layer_name(l), &mut rng)
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            store,
            layers,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let mut x = input;
        for (l, params) in self.layers.iter().enumerate() {
            x = apply_layer(tape, &self.store, &self.spec, l, *params, x)?;
        }
        Ok(x)
    }

    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(batch.clone());
        let z = self.forward(&mut tape, x)?;
        Ok(tape.value(z).clone())
    }

    /// Parametric layers as `(layer index, name, params)`.
    pub fn layer_params(&self) -> Vec<(usize, String, LayerParams)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(l, p)| p.map(|p| (l, self.spec.layer_name(l), p)))
            .collect()
    }
}
