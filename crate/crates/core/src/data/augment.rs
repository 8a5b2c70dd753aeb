use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AugmentPolicy {
    #[default]
    None,
    /// Zero-pad every side by `pad`, then crop a random window of the original size.
    PadCrop { pad: usize },
    /// Mirror horizontally with probability one half.
    Flip,
}

/// Applies `policy` independently to every image of an `[N, C, H, W]` batch.
pub fn augment<R: Rng>(batch: &Tensor, policy: AugmentPolicy, rng: &mut R) -> Result<Tensor> {
    if policy == AugmentPolicy::None {
        return Ok(batch.clone());
    }
    let s = batch.shape();
    if s.len() != 4 {
        return Err(shape_err("augment", format!("expected [N, C, H, W] images, got {s:?}")));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let plane = h * w;
    let src = batch.data();
    let mut out = vec![0.0; src.len()];
    for i in 0..n {
        let img = &src[i * c * plane..(i + 1) * c * plane];
        let dst = &mut out[i * c * plane..(i + 1) * c * plane];
        match policy {
            AugmentPolicy::None => unreachable!(),
            AugmentPolicy::PadCrop { pad } => {
                let dy = rng.random_range(0..=2 * pad) as isize - pad as isize;
                let dx = rng.random_range(0..=2 * pad) as isize - pad as isize;
                shift(img, dst, c, h, w, dy, dx);
            }
            AugmentPolicy::Flip => {
                if rng.random_bool(0.5) {
                    for ch in 0..c {
                        for r in 0..h {
                            for col in 0..w {
                                let base = ch * plane + r * w;
                                dst[base + col] = img[base + w - 1 - col];
                            }
                        }
                    }
                } else {
                    dst.copy_from_slice(img);
                }
            }
        }
    }
    Tensor::new(s.to_vec(), out)
}

/// `dst[r][c] = src[r + dy][c + dx]`, zero outside the source.
fn shift(src: &[f64], dst: &mut [f64], c: usize, h: usize, w: usize, dy: isize, dx: isize) {
    for ch in 0..c {
        for r in 0..h {
            let sr = r as isize + dy;
            if sr < 0 || sr >= h as isize {
                continue;
            }
            for col in 0..w {
                let sc = col as isize + dx;
                if sc >= 0 && sc < w as isize {
                    dst[ch * h * w + r * w + col] = src[ch * h * w + sr as usize * w + sc as usize];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn images() -> Tensor {
        Tensor::new(vec![2, 1, 3, 3], (0..18).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = images();
        assert_eq!(augment(&x, AugmentPolicy::None, &mut rng).unwrap(), x);
        assert_eq!(augment(&x, AugmentPolicy::PadCrop { pad: 0 }, &mut rng).unwrap(), x);
    }

    #[test]
    fn flip_twice_or_not_at_all() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = images();
        let y = augment(&x, AugmentPolicy::Flip, &mut rng).unwrap();
        for (a, b) in x.data().chunks(3).zip(y.data().chunks(3)) {
            let rev: Vec<f64> = a.iter().rev().copied().collect();
            assert!(a == b || rev == b);
        }
    }

    #[test]
    fn rejects_flat_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::new(vec![2, 4], vec![0.0; 8]).unwrap();
        assert!(augment(&x, AugmentPolicy::Flip, &mut rng).is_err());
        assert!(augment(&x, AugmentPolicy::None, &mut rng).is_ok());
    }
}
