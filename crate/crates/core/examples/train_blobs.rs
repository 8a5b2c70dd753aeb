//! Train an individual network and a two-head collaborative one on
//! synthetic blobs and compare test error.

use collab::experiment::{Experiment, ExperimentConfig};
use collab::{CollabLossConfig, HeadPattern, Result};

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/blobs_mlp.json");
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.epochs = 10;
    cfg.seeds = vec![1, 2];

    let solo = ExperimentConfig {
        pattern: HeadPattern::individual(),
        loss: CollabLossConfig {
            beta: 1.0,
            ..cfg.loss.clone()
        },
        ..cfg.clone()
    };
    for c in [solo, cfg] {
        let s = Experiment::new(c)?.run()?.summary;
        println!(
            "{}: error {:.4} +- {:.4}, {} training parameters",
            s.label, s.mean_error, s.std_error, s.training_params
        );
    }
    Ok(())
}
