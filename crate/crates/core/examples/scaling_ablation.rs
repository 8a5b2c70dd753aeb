//! Compare gradient scaling modes on a four-head graph.

use collab::experiment::run_scaling_ablation;
use collab::experiment::{Experiment, ExperimentConfig};
use collab::{HeadPattern, Result};

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs_mlp.json");
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.epochs = 8;
    cfg.seeds = vec![1, 2];
    cfg.pattern = HeadPattern::SimpleIlr {
        heads: 4,
        split: "block2".into(),
    };
    for row in run_scaling_ablation(&Experiment::new(cfg)?, None)? {
        println!(
            "{:<17} {:.4} +- {:.4} ({} aborted)",
            row.mode, row.mean_error, row.std_error, row.aborted_runs
        );
    }
    Ok(())
}
