//! Histogram head-1 weights before and after collaborative training.

use collab::experiment::export_weight_histograms;
use collab::experiment::{Experiment, ExperimentConfig};
use collab::Result;

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs_mlp.json");
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.epochs = 5;
    let exp = Experiment::new(cfg)?;

    let before = export_weight_histograms(&exp.build_graph(1)?, 21, None)?;
    let mut after = Vec::new();
    let epochs = exp.config.epochs;
    exp.run_seed_with(1, |graph, m| {
        if m.epoch + 1 == epochs {
            after = export_weight_histograms(graph, 21, None).unwrap();
        }
    })?;
    for (b, a) in before.iter().zip(&after) {
        println!(
            "{:<7} std {:.4} -> {:.4}   counts {:?}",
            b.layer, b.std, a.std, a.counts
        );
    }
    Ok(())
}
