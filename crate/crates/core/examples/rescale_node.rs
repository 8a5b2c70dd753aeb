//! The rescale node is the identity going forward and multiplies the
//! incoming gradient by a fixed factor going back.

use collab::{Result, Tape, Tensor};

fn main() -> Result<()> {
    for factor in [1.0, 0.5, 0.25] {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0])?, true);
        let y = tape.rescale_identity(x, factor)?;
        let loss = tape.sum_squares(y);
        let g = tape.backward(loss)?;
        println!(
            "factor {factor:<4} forward {:?} gradient {:?}",
            tape.value(y).data(),
            g.wrt(x).unwrap()
        );
    }
    Ok(())
}
