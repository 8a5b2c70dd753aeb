//! Collaborative multi-head training on a small reverse-mode autodiff engine.
//!
//! Several structurally identical classifier heads are trained together on the
//! same data. Heads may share their lower layers (with a gradient-rescaling
//! node at each branching point) and each head is supervised by the true label
//! and by the temperature-softened consensus of its peers. After training any
//! single head can be extracted as an ordinary network.
//!
//! The runnable programs under `examples/` walk through each capability.

pub mod data;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod loss;
pub mod net;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use data::{Dataset, DatasetSpec, NoiseSpec};
pub use error::{Error, Result};
pub use kernels::softmax_t;
pub use loss::CollabLossConfig;
pub use net::{HeadPattern, InferenceNet, LayerSpec, NetSpec, ScalingMode, TrainingGraph};
pub use optim::{OptMode, SgdConfig};
pub use params::{ParamId, Parameter, ParameterStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
