#![allow(dead_code)]

use collab::loss::{hard_loss, head_loss, soft_loss, total_loss};
use collab::{
    CollabLossConfig, HeadPattern, InferenceNet, NetSpec, ParamId, ParameterStore, Result, ScalingMode, Tape, Tensor,
    TrainingGraph, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const STEP: f64 = 1e-3;
pub const TOL: f64 = 1e-4;
pub const INSTANCES: usize = 20;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// `||a - b|| / (||a|| + ||b||)`, with the denominator floored at 1e-7 so
/// two vanishing gradients compare equal.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(1e-7)
}

type Build<'a> = &'a dyn Fn(&mut Tape, &[Var]) -> Result<Var>;

fn eval(inputs: &[Tensor], build: Build) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = build(&mut tape, &vars).unwrap();
    tape.value(out).item()
}

/// Largest relative error between tape gradients and central differences
/// over every input of a scalar-valued function.
pub fn check_inputs(inputs: &[Tensor], build: Build) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = build(&mut tape, &vars).unwrap();
    let grads = tape.backward(out).unwrap();
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        let mut numeric = vec![0.0; inputs[k].len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= STEP;
            *slot = (eval(&plus, build) - eval(&minus, build)) / (2.0 * STEP);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

type ParamLoss<'a> = &'a dyn Fn(&ParameterStore, &mut Tape) -> Var;

/// Same as [`check_inputs`] with respect to every parameter in `store`.
pub fn check_params(store: &ParameterStore, loss: ParamLoss) -> f64 {
    let mut tape = Tape::new();
    let out = loss(store, &mut tape);
    let grads = tape.backward(out).unwrap();
    let ids: Vec<ParamId> = store.ids().collect();
    let mut worst: f64 = 0.0;
    for id in ids {
        let n = store.value(id).len();
        let analytic = grads.param(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let f = |delta: f64| {
                let mut s = store.clone();
                s.get_mut(id).value.data_mut()[i] += delta;
                let mut t = Tape::new();
                let o = loss(&s, &mut t);
                t.value(o).item()
            };
            *slot = (f(STEP) - f(-STEP)) / (2.0 * STEP);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// `sum(w * out)` with fixed random `w`, reducing any output to a scalar
/// that exercises every output gradient entry.
pub fn contract(tape: &mut Tape, out: Var, rng: &mut ChaCha8Rng) -> Result<Var> {
    let w = randn(tape.shape(out), rng);
    let w = tape.constant(w);
    let p = tape.mul(out, w)?;
    Ok(tape.sum(p))
}

fn probs(rows: usize, m: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let z = randn(&[rows, m], rng);
    let mut q = Vec::new();
    for r in 0..rows {
        q.extend(collab::softmax_t(z.row(r), 1.0).unwrap());
    }
    Tensor::new(vec![rows, m], q).unwrap()
}

fn labels(rows: usize, m: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let y: Vec<usize> = (0..rows).map(|_| rng.random_range(0..m)).collect();
    collab::loss::one_hot(&y, m).unwrap()
}

/// Worst relative error of each primitive over [`INSTANCES`] random cases.
pub fn primitive_cases() -> Vec<(&'static str, f64)> {
    type Case = (&'static str, fn(&mut ChaCha8Rng) -> f64);
    let cases: Vec<Case> = vec![
        ("matmul", |r| {
            let (m, k, n) = (r.random_range(1..4), r.random_range(1..5), r.random_range(1..4));
            let (a, b) = (randn(&[m, k], r), randn(&[k, n], r));
            let c = r.clone();
            check_inputs(&[a, b], &|t, v| {
                let o = t.matmul(v[0], v[1])?;
                contract(t, o, &mut c.clone())
            })
        }),
        ("add_bias", |r| {
            let (n, f) = (r.random_range(1..4), r.random_range(1..5));
            let (x, b) = (randn(&[n, f], r), randn(&[f], r));
            let c = r.clone();
            check_inputs(&[x, b], &|t, v| {
                let o = t.add_bias(v[0], v[1])?;
                contract(t, o, &mut c.clone())
            })
        }),
        ("add_bias_conv", |r| {
            let (n, ch, h) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
            let (x, b) = (randn(&[n, ch, h, h], r), randn(&[ch], r));
            let c = r.clone();
            check_inputs(&[x, b], &|t, v| {
                let o = t.add_bias(v[0], v[1])?;
                contract(t, o, &mut c.clone())
            })
        }),
        ("relu", |r| {
            let mut x = randn(&[3, 5], r);
            for v in x.data_mut() {
                *v += KINK_MARGIN.copysign(*v);
            }
            let c = r.clone();
            check_inputs(&[x], &|t, v| {
                let o = t.relu(v[0]);
                contract(t, o, &mut c.clone())
            })
        }),
        ("conv2d", |r| {
            let (n, ci, co) = (r.random_range(1..3), r.random_range(1..3), r.random_range(1..4));
            let k = r.random_range(1..4);
            let side = r.random_range(k..k + 3);
            let stride = r.random_range(1..3);
            let pad = r.random_range(0..2);
            let (x, w) = (randn(&[n, ci, side, side], r), randn(&[co, ci, k, k], r));
            let c = r.clone();
            check_inputs(&[x, w], &|t, v| {
                let o = t.conv2d(v[0], v[1], stride, pad)?;
                contract(t, o, &mut c.clone())
            })
        }),
        ("avgpool2d", |r| {
            let s = r.random_range(1..4);
            let x = randn(&[2, 2, 2 * s, 3 * s], r);
            let c = r.clone();
            check_inputs(&[x], &|t, v| {
                let o = t.avgpool2d(v[0], s)?;
                contract(t, o, &mut c.clone())
            })
        }),
        ("flatten", |r| {
            let x = randn(&[2, 3, 2, 2], r);
            let c = r.clone();
            check_inputs(&[x], &|t, v| {
                let o = t.flatten(v[0])?;
                contract(t, o, &mut c.clone())
            })
        }),
        ("rescale_identity", |r| {
            // Backward is scaled on purpose: compare with `factor` times the
            // numeric derivative of the identity, and require an exact forward.
            let x = randn(&[2, 4], r);
            let factor = r.random_range(0.05..1.0);
            let c = r.clone();
            let mut t = Tape::new();
            let v = t.leaf(x.clone(), true);
            let o = t.rescale_identity(v, factor).unwrap();
            if t.value(o) != &x {
                return f64::INFINITY;
            }
            let o = contract(&mut t, o, &mut c.clone()).unwrap();
            let g = t.backward(o).unwrap().wrt(v).unwrap().to_vec();
            let numeric = check_numeric(&[x], &|t, v| contract(t, v[0], &mut c.clone()));
            let expected: Vec<f64> = numeric.iter().map(|d| d * factor).collect();
            rel_err(&g, &expected)
        }),
        ("add", |r| {
            let (a, b) = (randn(&[3, 2], r), randn(&[3, 2], r));
            let c = r.clone();
            check_inputs(&[a, b], &|t, v| {
                let o = t.add(v[0], v[1])?;
                contract(t, o, &mut c.clone())
            })
        }),
        ("mul", |r| {
            let (a, b) = (randn(&[3, 2], r), randn(&[3, 2], r));
            let c = r.clone();
            check_inputs(&[a, b], &|t, v| {
                let o = t.mul(v[0], v[1])?;
                contract(t, o, &mut c.clone())
            })
        }),
        ("scale", |r| {
            let a = randn(&[4], r);
            let k: f64 = r.sample(StandardNormal);
            let c = r.clone();
            check_inputs(&[a], &|t, v| {
                let o = t.scale(v[0], k);
                contract(t, o, &mut c.clone())
            })
        }),
        ("sum", |r| {
            let a = randn(&[2, 3], r);
            check_inputs(&[a], &|t, v| Ok(t.sum(v[0])))
        }),
        ("sum_squares", |r| {
            let a = randn(&[2, 3], r);
            check_inputs(&[a], &|t, v| Ok(t.sum_squares(v[0])))
        }),
        ("softmax_t", |r| {
            let z = randn(&[3, 4], r);
            let temp = r.random_range(0.5..4.0);
            let c = r.clone();
            check_inputs(&[z], &|t, v| {
                let o = t.softmax_t(v[0], temp)?;
                contract(t, o, &mut c.clone())
            })
        }),
        ("log_softmax_t", |r| {
            let z = randn(&[3, 4], r);
            let temp = r.random_range(0.5..4.0);
            let c = r.clone();
            check_inputs(&[z], &|t, v| {
                let o = t.log_softmax_t(v[0], temp, Some(collab::loss::LOG_FLOOR))?;
                contract(t, o, &mut c.clone())
            })
        }),
        ("hard_loss", |r| {
            let z = randn(&[4, 5], r);
            let y = labels(4, 5, r);
            check_inputs(&[z], &|t, v| {
                let y = t.constant(y.clone());
                hard_loss(t, y, v[0])
            })
        }),
        ("soft_loss", |r| {
            let z = randn(&[4, 5], r);
            let q = probs(4, 5, r);
            let temp = r.random_range(0.5..4.0);
            check_inputs(&[z, q], &|t, v| soft_loss(t, v[1], v[0], temp))
        }),
        ("head_loss_detached", |r| head_case(r, true)),
        ("head_loss_attached", |r| head_case(r, false)),
    ];
    cases
        .into_iter()
        .map(|(name, f)| {
            let mut r = rng(name.len() as u64 * 7919);
            let worst = (0..INSTANCES).map(|_| f(&mut r)).fold(0.0, f64::max);
            (name, worst)
        })
        .collect()
}

fn head_case(r: &mut ChaCha8Rng, detach: bool) -> f64 {
    let heads = r.random_range(2..5);
    let logits: Vec<Tensor> = (0..heads).map(|_| randn(&[3, 4], r)).collect();
    let y = labels(3, 4, r);
    let cfg = CollabLossConfig {
        beta: r.random_range(0.1..0.9),
        temperature: r.random_range(0.5..4.0),
        detach_consensus: detach,
        ..CollabLossConfig::default()
    };
    let h = r.random_range(0..heads);
    if !detach {
        return check_inputs(&logits, &|t, v| {
            let y = t.constant(y.clone());
            head_loss(t, y, v, h, &cfg)
        });
    }
    // A detached consensus is a constant target, so only the head's own
    // logits are differentiated; peers enter as constants.
    check_inputs(&logits[h..=h], &|t, v| {
        let all: Vec<Var> = (0..heads)
            .map(|j| if j == h { v[0] } else { t.constant(logits[j].clone()) })
            .collect();
        let y = t.constant(y.clone());
        head_loss(t, y, &all, h, &cfg)
    })
}

/// Central differences of a scalar function of `inputs[0]`.
pub fn check_numeric(inputs: &[Tensor], build: Build) -> Vec<f64> {
    (0..inputs[0].len())
        .map(|i| {
            let mut plus = inputs.to_vec();
            plus[0].data_mut()[i] += STEP;
            let mut minus = inputs.to_vec();
            minus[0].data_mut()[i] -= STEP;
            (eval(&plus, build) - eval(&minus, build)) / (2.0 * STEP)
        })
        .collect()
}

pub fn mlp2(inputs: usize, hidden: usize, classes: usize) -> NetSpec {
    NetSpec {
        input_shape: vec![inputs],
        classes,
        layers: vec![
            collab::LayerSpec::dense(inputs, hidden),
            collab::LayerSpec::Relu,
            collab::LayerSpec::dense(hidden, classes),
        ],
        splits: vec![collab::net::SplitMarker {
            name: "hidden".into(),
            after: 2,
        }],
    }
}

/// Layer-by-layer forward of `net` built from its spec, returning the
/// logits and every value that enters a ReLU.
pub fn replay(net: &InferenceNet, x: &Tensor) -> (Tensor, Vec<f64>) {
    let params: std::collections::HashMap<usize, collab::net::LayerParams> =
        net.layer_params().into_iter().map(|(i, _, p)| (i, p)).collect();
    let mut tape = Tape::new();
    let mut h = tape.constant(x.clone());
    let mut relu_in = Vec::new();
    for (i, layer) in net.spec().layers.iter().enumerate() {
        h = match layer {
            collab::LayerSpec::Dense { .. } => {
                let p = params[&i];
                let (w, b) = (tape.param(net.store(), p.weight), tape.param(net.store(), p.bias));
                let m = tape.matmul(h, w).unwrap();
                tape.add_bias(m, b).unwrap()
            }
            collab::LayerSpec::Conv { stride, padding, .. } => {
                let p = params[&i];
                let (w, b) = (tape.param(net.store(), p.weight), tape.param(net.store(), p.bias));
                let c = tape.conv2d(h, w, *stride, *padding).unwrap();
                tape.add_bias(c, b).unwrap()
            }
            collab::LayerSpec::Relu => {
                relu_in.extend_from_slice(tape.value(h).data());
                tape.relu(h)
            }
            collab::LayerSpec::AvgPool { size } => tape.avgpool2d(h, *size).unwrap(),
            collab::LayerSpec::Flatten => tape.flatten(h).unwrap(),
        };
    }
    (tape.value(h).clone(), relu_in)
}

/// Smallest distance of any ReLU input from the kink.
pub fn kink_margin(net: &InferenceNet, x: &Tensor) -> f64 {
    replay(net, x).1.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Finite differences are meaningless across a ReLU kink; instances whose
/// ReLU inputs come closer than this are redrawn.
pub const KINK_MARGIN: f64 = 0.02;

fn input_shape(spec: &NetSpec, rows: usize) -> Vec<usize> {
    let mut shape = vec![rows];
    shape.extend(&spec.input_shape);
    shape
}

fn net_case(spec: &NetSpec, seed: u64) -> Option<f64> {
    let mut r = rng(seed);
    let net = InferenceNet::new(spec, seed).unwrap();
    let x = randn(&input_shape(spec, 3), &mut r);
    if kink_margin(&net, &x) < KINK_MARGIN {
        return None;
    }
    let y = labels(3, spec.classes, &mut r);
    Some(check_params(net.store(), &|store, tape| {
        let mut n = net.clone();
        *n.store_mut() = store.clone();
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let z = n.forward(tape, xv).unwrap();
        let ids: Vec<ParamId> = store.ids().collect();
        let l = hard_loss(tape, yv, z).unwrap();
        collab::loss::add_weight_decay(tape, l, 1e-2, store, &ids).unwrap()
    }))
}

/// Worst relative error of parameter gradients for the composed networks.
pub fn network_cases() -> Vec<(&'static str, f64)> {
    let nets = [
        ("mlp-2", mlp2(5, 7, 3)),
        ("mlp-4", NetSpec::mlp4(5, 8, 3)),
        ("cnn-2", NetSpec::cnn2(8, (2, 3), 4)),
    ];
    nets.into_iter()
        .map(|(name, spec)| {
            let worst = (100..10_000u64)
                .filter_map(|s| net_case(&spec, s))
                .take(INSTANCES)
                .fold(0.0, f64::max);
            (name, worst)
        })
        .collect()
}

/// Full collaborative objective on a multi-head graph with the consensus
/// attached, under a scaling mode that leaves the gradient equal to the true
/// derivative. `None` when the instance sits too close to a ReLU kink.
pub fn collaborative_case(pattern: &HeadPattern, scaling: ScalingMode, seed: u64) -> Option<f64> {
    let spec = NetSpec::mlp4(4, 6, 3);
    let graph = TrainingGraph::build(&spec, pattern, scaling, seed).unwrap();
    let mut r = rng(seed);
    let x = randn(&[3, 4], &mut r);
    for h in 1..=graph.head_count() {
        if kink_margin(&graph.extract_inference_graph(h).unwrap(), &x) < KINK_MARGIN {
            return None;
        }
    }
    let y = labels(3, 3, &mut r);
    let cfg = CollabLossConfig {
        scaling,
        detach_consensus: false,
        ..CollabLossConfig::default()
    };
    Some(check_params(graph.store(), &|store, tape| {
        let mut g = graph.clone();
        *g.store_mut() = store.clone();
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let z = g.forward(tape, xv).unwrap();
        let ids: Vec<ParamId> = store.ids().collect();
        total_loss(tape, yv, &z, &cfg, store, &ids).unwrap().total
    }))
}
