//! Raw numeric kernels behind the tape operations. All buffers are row-major;
//! images are NCHW.

use crate::error::{shape_err, Error, Result};

/// `c[m,n] += a[m,k] * b[k,n]`
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m,k] += g[m,n] * b[k,n]^T`
pub(crate) fn matmul_bt_acc(g: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let dot: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
            c[i * k + p] += dot;
        }
    }
}

/// `c[k,n] += a[m,k]^T * g[m,n]`
pub(crate) fn matmul_at_acc(a: &[f64], g: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, gv) in crow.iter_mut().zip(grow) {
                *cv += av * gv;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], weight: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if input.len() != 4 || weight.len() != 4 {
            return Err(shape_err(
                "conv2d",
                format!("expected NCHW input and OCHW kernel, got {input:?} and {weight:?}"),
            ));
        }
        if stride == 0 {
            return Err(shape_err("conv2d", "stride must be at least 1"));
        }
        if input[1] != weight[1] {
            return Err(shape_err(
                "conv2d",
                format!("input has {} channels but kernel expects {}", input[1], weight[1]),
            ));
        }
        if input[2] + 2 * pad < weight[2] || input[3] + 2 * pad < weight[3] {
            return Err(shape_err(
                "conv2d",
                format!("kernel {:?} larger than padded input {:?}", &weight[2..], &input[2..]),
            ));
        }
        Ok(Self {
            batch: input[0],
            in_ch: input[1],
            height: input[2],
            width: input[3],
            out_ch: weight[0],
            kh: weight[2],
            kw: weight[3],
            stride,
            pad,
        })
    }

    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.pad - self.kw) / self.stride + 1
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_ch, self.out_h(), self.out_w()]
    }

    /// Input coordinate for output position `o` and kernel tap `k`, if inside the image.
    #[inline]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// Unrolls one image `[C,H,W]` into `cols[C*kh*kw, oh*ow]`; padding taps stay zero.
fn im2col(x: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    cols.fill(0.0);
    for c in 0..g.in_ch {
        let xbase = c * g.height * g.width;
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * plane;
                for y in 0..oh {
                    let Some(sy) = g.src(y, ki, g.height) else { continue };
                    for xo in 0..ow {
                        if let Some(sx) = g.src(xo, kj, g.width) {
                            cols[row + y * ow + xo] = x[xbase + sy * g.width + sx];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back onto one image.
fn col2im(cols: &[f64], g: &ConvGeometry, x: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    for c in 0..g.in_ch {
        let xbase = c * g.height * g.width;
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * plane;
                for y in 0..oh {
                    let Some(sy) = g.src(y, ki, g.height) else { continue };
                    for xo in 0..ow {
                        if let Some(sx) = g.src(xo, kj, g.width) {
                            x[xbase + sy * g.width + sx] += cols[row + y * ow + xo];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation as a per-image product `W[O, C*kh*kw] * cols`.
pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let plane = g.out_h() * g.out_w();
    let taps = g.in_ch * g.kh * g.kw;
    let (in_len, out_len) = (g.in_ch * g.height * g.width, g.out_ch * plane);
    let mut out = vec![0.0; g.batch * out_len];
    let mut cols = vec![0.0; taps * plane];
    for n in 0..g.batch {
        im2col(&x[n * in_len..(n + 1) * in_len], g, &mut cols);
        matmul_acc(
            w,
            &cols,
            &mut out[n * out_len..(n + 1) * out_len],
            g.out_ch,
            taps,
            plane,
        );
    }
    out
}

/// Accumulates kernel and (optionally) input gradients of a cross-correlation.
pub(crate) fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    grad_out: &[f64],
    g: &ConvGeometry,
    mut grad_x: Option<&mut [f64]>,
    mut grad_w: Option<&mut [f64]>,
) {
    let plane = g.out_h() * g.out_w();
    let taps = g.in_ch * g.kh * g.kw;
    let (in_len, out_len) = (g.in_ch * g.height * g.width, g.out_ch * plane);
    let mut cols = vec![0.0; taps * plane];
    let mut grad_cols = vec![0.0; taps * plane];
    for n in 0..g.batch {
        let go = &grad_out[n * out_len..(n + 1) * out_len];
        if let Some(gw) = grad_w.as_deref_mut() {
            im2col(&x[n * in_len..(n + 1) * in_len], g, &mut cols);
            matmul_bt_acc(go, &cols, gw, g.out_ch, taps, plane);
        }
        if let Some(gx) = grad_x.as_deref_mut() {
            grad_cols.fill(0.0);
            matmul_at_acc(w, go, &mut grad_cols, g.out_ch, taps, plane);
            col2im(&grad_cols, g, &mut gx[n * in_len..(n + 1) * in_len]);
        }
    }
}

/// Non-overlapping average pooling with a square window.
pub(crate) fn avgpool2d_forward(x: &[f64], shape: &[usize], size: usize) -> Vec<f64> {
    let (nc, h, w) = (shape[0] * shape[1], shape[2], shape[3]);
    let (oh, ow) = (h / size, w / size);
    let inv = 1.0 / (size * size) as f64;
    let mut out = vec![0.0; nc * oh * ow];
    for p in 0..nc {
        for y in 0..h {
            for xx in 0..w {
                out[p * oh * ow + (y / size) * ow + xx / size] += x[p * h * w + y * w + xx] * inv;
            }
        }
    }
    out
}

pub(crate) fn avgpool2d_backward(grad_out: &[f64], shape: &[usize], size: usize, grad_x: &mut [f64]) {
    let (nc, h, w) = (shape[0] * shape[1], shape[2], shape[3]);
    let (oh, ow) = (h / size, w / size);
    let inv = 1.0 / (size * size) as f64;
    for p in 0..nc {
        for y in 0..h {
            for xx in 0..w {
                grad_x[p * h * w + y * w + xx] += grad_out[p * oh * ow + (y / size) * ow + xx / size] * inv;
            }
        }
    }
}

/// Temperature softmax of one logit vector, `exp(z_i/T) / sum_j exp(z_j/T)`,
/// evaluated after subtracting the maximum logit.
pub fn softmax_t(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if logits.len() < 2 {
        return Err(shape_err("softmax_t", "need at least two classes"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("softmax_t logits".into()));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_row(logits, temperature, &mut out);
    Ok(out)
}

pub(crate) fn softmax_row(z: &[f64], t: f64, out: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = ((v - max) / t).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `log softmax_t` of one row. Entries below `floor` are clamped to it and
/// the returned mask marks them.
pub(crate) fn log_softmax_row(z: &[f64], t: f64, floor: Option<f64>, out: &mut [f64], clamped: &mut [bool]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|&v| ((v - max) / t).exp()).sum::<f64>().ln();
    for ((o, c), &v) in out.iter_mut().zip(clamped.iter_mut()).zip(z) {
        let lp = (v - max) / t - lse;
        match floor {
            Some(f) if lp < f => {
                *o = f;
                *c = true;
            }
            _ => {
                *o = lp;
                *c = false;
            }
        }
    }
}
