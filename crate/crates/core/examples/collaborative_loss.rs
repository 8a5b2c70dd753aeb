//! Evaluate the per-head loss for two heads and show how beta and the
//! temperature move it.

use collab::loss::{consensus_target, head_loss, one_hot};
use collab::{CollabLossConfig, Result, Tape, Tensor};

fn main() -> Result<()> {
    let z1 = Tensor::new(vec![2, 3], vec![2.0, 0.5, -1.0, 0.0, 1.0, 0.2])?;
    let z2 = Tensor::new(vec![2, 3], vec![1.5, 1.0, -0.5, 0.3, 0.1, 0.9])?;
    let labels = one_hot(&[0, 1], 3)?;

    for (beta, temperature) in [(1.0, 2.0), (0.5, 1.0), (0.5, 2.0), (0.5, 4.0)] {
        let cfg = CollabLossConfig {
            beta,
            temperature,
            ..Default::default()
        };
        let mut tape = Tape::new();
        let y = tape.constant(labels.clone());
        let z = [tape.leaf(z1.clone(), true), tape.leaf(z2.clone(), true)];
        let l = head_loss(&mut tape, y, &z, 0, &cfg)?;
        let q = consensus_target(&tape, &z, 0, temperature)?;
        println!(
            "beta {beta} T {temperature}: head-1 loss {:.5}, target row 0 {:?}",
            tape.value(l).item(),
            q.row(0)
        );
    }
    Ok(())
}
