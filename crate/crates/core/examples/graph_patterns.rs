//! Build each head pattern, inspect shared parameters and rescale points,
//! then extract a head as a standalone network.

use collab::{HeadPattern, NetSpec, Result, ScalingMode, Tensor, TrainingGraph};

fn main() -> Result<()> {
    let spec = NetSpec::mlp4(32, 64, 10);
    let patterns = [
        HeadPattern::individual(),
        HeadPattern::MultiInstance { heads: 2 },
        HeadPattern::SimpleIlr {
            heads: 2,
            split: "block2".into(),
        },
        HeadPattern::HierarchicalIlr {
            heads: 4,
            splits: vec!["block2".into(), "block3".into()],
            branching: vec![2, 2],
        },
    ];
    let x = Tensor::filled(vec![3, 32], 0.1);
    for p in &patterns {
        let graph = TrainingGraph::build(&spec, p, ScalingMode::BackpropRescale, 42)?;
        let counts = graph.parameter_counts();
        println!("{}: {} training parameters", p.label(), counts.total);
        for point in graph.rescale_points() {
            println!("  rescale {point:?}");
        }
        let net = graph.extract_inference_graph(1)?;
        let same = graph.predict(&x)?[0] == net.predict(&x)?;
        println!(
            "  head 1 extracted: {} parameters, identical outputs {same}",
            net.param_count()
        );
    }
    Ok(())
}
