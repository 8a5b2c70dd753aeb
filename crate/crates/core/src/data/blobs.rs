use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Split};
use crate::error::{config_err, Result};
use crate::tensor::Tensor;

fn draw(
    centres: &[f64],
    dim: usize,
    classes: usize,
    n: usize,
    spread: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<usize>) {
    let mut x = Vec::with_capacity(n * dim);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    for &y in &labels {
        for &c in &centres[y * dim..(y + 1) * dim] {
            let e: f64 = StandardNormal.sample(rng);
            x.push(c + spread * e);
        }
    }
    (x, labels)
}

/// `classes` Gaussian clusters with standard-normal centres in `dim`
/// dimensions. Example `i` belongs to class `i % classes`, so classes are
/// balanced whenever the count divides evenly.
pub fn synthetic_blobs(
    classes: usize,
    dim: usize,
    train: usize,
    test: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if classes < 2 || dim == 0 || train == 0 || test == 0 {
        return Err(config_err(
            "synthetic blobs need classes >= 2 and non-empty dims and splits",
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(config_err(format!("spread must be non-negative, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<f64> = (0..classes * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    rng.set_stream(1);
    let (xtr, ytr) = draw(&centres, dim, classes, train, spread, &mut rng);
    rng.set_stream(2);
    let (xte, yte) = draw(&centres, dim, classes, test, spread, &mut rng);
    Ok((
        Dataset::new(
            "synthetic-blobs",
            Split::Train,
            Tensor::new(vec![train, dim], xtr)?,
            ytr,
            classes,
        )?,
        Dataset::new(
            "synthetic-blobs",
            Split::Test,
            Tensor::new(vec![test, dim], xte)?,
            yte,
            classes,
        )?,
    ))
}
