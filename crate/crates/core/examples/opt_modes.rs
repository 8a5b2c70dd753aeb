//! Simultaneous versus alternative updates for two independent heads.

use collab::experiment::run_opt_mode_comparison;
use collab::experiment::{Experiment, ExperimentConfig};
use collab::{HeadPattern, Result};

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs_mlp.json");
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.epochs = 6;
    cfg.seeds = vec![1];
    cfg.pattern = HeadPattern::MultiInstance { heads: 2 };
    for row in run_opt_mode_comparison(&Experiment::new(cfg)?, None)? {
        println!(
            "{:<12} head {} error {:.4}  {:.3}s/epoch  {} forwards/step",
            row.mode, row.head, row.mean_error, row.mean_epoch_seconds, row.forwards_per_step
        );
    }
    Ok(())
}
