//! Target-network description and multi-head graph generation.

mod graph;
mod spec;

pub use graph::{HeadPattern, InferenceNet, ParamCounts, RescalePoint, ScalingMode, TrainingGraph};
pub use spec::{LayerParams, LayerSpec, NetSpec, SplitMarker};
