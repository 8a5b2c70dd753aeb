//! Train the bundled digits CNN configuration for a few epochs and write
//! metrics to a temporary directory.

use collab::experiment::{Experiment, ExperimentConfig};
use collab::Result;

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/digits_cnn.json");
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.epochs = 3;
    cfg.seeds = vec![1];
    let exp = Experiment::new(cfg)?;
    println!("{} train / {} test examples", exp.train.len(), exp.test.len());
    let record = exp.run_seed_with(1, |_, m| {
        println!(
            "epoch {} lr {} loss {:.4} error {:.4}",
            m.epoch,
            m.lr,
            m.train_loss,
            m.test_error()
        );
    })?;
    let dir = std::env::temp_dir().join("collab-digits");
    std::fs::create_dir_all(&dir)?;
    record.write_metrics_csv(&dir.join("metrics_1.csv"))?;
    println!("metrics written to {}", dir.display());
    Ok(())
}
