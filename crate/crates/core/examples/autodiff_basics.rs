//! Build a small expression on the tape and read gradients back.

use collab::{Result, Tape, Tensor};

fn main() -> Result<()> {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0])?, true);
    let w = tape.leaf(Tensor::new(vec![3, 2], vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6])?, true);

    let h = tape.matmul(x, w)?;
    let a = tape.relu(h);
    let loss = tape.sum_squares(a);

    let grads = tape.backward(loss)?;
    println!("loss      = {}", tape.value(loss).item());
    println!("dloss/dx  = {:?}", grads.wrt(x).unwrap());
    println!("dloss/dw  = {:?}", grads.wrt(w).unwrap());
    println!("tape size = {} nodes", tape.len());
    Ok(())
}
