//! Corrupt a fixed subset of labels and redraw them each epoch.

use collab::data::LabelNoise;
use collab::{NoiseSpec, Result};

fn main() -> Result<()> {
    let truth: Vec<usize> = (0..20).map(|i| i % 4).collect();
    let spec = NoiseSpec {
        level: 0.4,
        seed: 3,
        exclude_true_class: false,
    };
    let noise = LabelNoise::new(&spec, truth.len(), 4)?;
    println!("corrupted rows: {:?}", noise.corrupted());
    println!("truth:   {truth:?}");
    for epoch in 0..3 {
        println!("epoch {epoch}: {:?}", noise.epoch_labels(&truth, epoch));
    }
    Ok(())
}
