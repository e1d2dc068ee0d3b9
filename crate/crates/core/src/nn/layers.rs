//! Dense kernels for strided valid convolution and fully connected layers.
//! Activations are channel-first `[C][H][W]`; weights are `[out][in][k][k]`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_size: usize,
    pub out_channels: usize,
    pub out_size: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn new(in_channels: usize, in_size: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        assert!(in_size >= kernel, "kernel {kernel} larger than input {in_size}");
        Self {
            in_channels,
            in_size,
            out_channels,
            out_size: (in_size - kernel) / stride + 1,
            kernel,
            stride,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.out_size * self.out_size
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_size * self.in_size
    }
}

/// Dot product with four independent accumulators so the loop vectorises.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += k * x`
#[inline]
fn axpy(k: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += k * xi;
    }
}

/// Unfolds receptive fields into rows: `[out_size^2][in_channels * k * k]`.
fn im2col(g: &ConvGeometry, input: &[f64]) -> Vec<f64> {
    let (k, s, is, os) = (g.kernel, g.stride, g.in_size, g.out_size);
    let per = g.in_channels * k * k;
    let mut cols = vec![0.0; os * os * per];
    for oy in 0..os {
        for ox in 0..os {
            let row = &mut cols[(oy * os + ox) * per..(oy * os + ox + 1) * per];
            for c in 0..g.in_channels {
                for ky in 0..k {
                    let src = c * is * is + (oy * s + ky) * is + ox * s;
                    let dst = (c * k + ky) * k;
                    row[dst..dst + k].copy_from_slice(&input[src..src + k]);
                }
            }
        }
    }
    cols
}

/// `out = relu(conv(input, w) + b)`
pub fn conv_relu_forward(g: &ConvGeometry, input: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let per = g.in_channels * g.kernel * g.kernel;
    let pixels = g.out_size * g.out_size;
    let cols = im2col(g, input);
    let mut o = 0;
    while o + 4 <= g.out_channels {
        let w4 = [0, 1, 2, 3].map(|j| &w[(o + j) * per..(o + j + 1) * per]);
        for p in 0..pixels {
            let acc = dot4(w4, &cols[p * per..(p + 1) * per]);
            for j in 0..4 {
                out[(o + j) * pixels + p] = (b[o + j] + acc[j]).max(0.0);
            }
        }
        o += 4;
    }
    for o in o..g.out_channels {
        let wo = &w[o * per..(o + 1) * per];
        for p in 0..pixels {
            out[o * pixels + p] = (b[o] + dot(wo, &cols[p * per..(p + 1) * per])).max(0.0);
        }
    }
}

/// Four dot products against the same right-hand side in one pass.
#[inline]
fn dot4(w: [&[f64]; 4], x: &[f64]) -> [f64; 4] {
    let n = x.len();
    let (w0, w1, w2, w3) = (&w[0][..n], &w[1][..n], &w[2][..n], &w[3][..n]);
    let mut acc = [[0.0; 2]; 4];
    let mut i = 0;
    while i + 2 <= n {
        let (xa, xb) = (x[i], x[i + 1]);
        acc[0][0] += w0[i] * xa;
        acc[0][1] += w0[i + 1] * xb;
        acc[1][0] += w1[i] * xa;
        acc[1][1] += w1[i + 1] * xb;
        acc[2][0] += w2[i] * xa;
        acc[2][1] += w2[i + 1] * xb;
        acc[3][0] += w3[i] * xa;
        acc[3][1] += w3[i + 1] * xb;
        i += 2;
    }
    let mut out = acc.map(|a| a[0] + a[1]);
    if i < n {
        out[0] += w0[i] * x[i];
        out[1] += w1[i] * x[i];
        out[2] += w2[i] * x[i];
        out[3] += w3[i] * x[i];
    }
    out
}

/// Accumulates weight, bias and (optionally) input gradients given the
/// gradient with respect to the post-ReLU output.
#[allow(clippy::too_many_arguments)]
pub fn conv_relu_backward(
    g: &ConvGeometry,
    input: &[f64],
    w: &[f64],
    out: &[f64],
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    din: Option<&mut [f64]>,
) {
    let (k, s, is, os) = (g.kernel, g.stride, g.in_size, g.out_size);
    let per = g.in_channels * k * k;
    let pixels = os * os;
    let cols = im2col(g, input);
    let mut dcols = if din.is_some() { vec![0.0; cols.len()] } else { Vec::new() };
    for o in 0..g.out_channels {
        let wo = &w[o * per..(o + 1) * per];
        let dwo = &mut dw[o * per..(o + 1) * per];
        for p in 0..pixels {
            let idx = o * pixels + p;
            if out[idx] <= 0.0 || dout[idx] == 0.0 {
                continue;
            }
            let grad = dout[idx];
            db[o] += grad;
            axpy(grad, &cols[p * per..(p + 1) * per], dwo);
            if !dcols.is_empty() {
                axpy(grad, wo, &mut dcols[p * per..(p + 1) * per]);
            }
        }
    }
    if let Some(d) = din {
        for oy in 0..os {
            for ox in 0..os {
                let row = &dcols[(oy * os + ox) * per..(oy * os + ox + 1) * per];
                for c in 0..g.in_channels {
                    for ky in 0..k {
                        let dst = c * is * is + (oy * s + ky) * is + ox * s;
                        let src = (c * k + ky) * k;
                        for (di, v) in d[dst..dst + k].iter_mut().zip(&row[src..src + k]) {
                            *di += v;
                        }
                    }
                }
            }
        }
    }
}

/// `out = w * input + b`, `w` is `[out][in]`; ReLU applied when `relu` is set.
pub fn dense_forward(input: &[f64], w: &[f64], b: &[f64], relu: bool, out: &mut [f64]) {
    let n_in = input.len();
    for (o, y) in out.iter_mut().enumerate() {
        let row = &w[o * n_in..(o + 1) * n_in];
        let acc = b[o] + dot(row, input);
        *y = if relu { acc.max(0.0) } else { acc };
    }
}

/// Backward of [`dense_forward`]. With `relu`, `out` is the post-activation used as mask.
#[allow(clippy::too_many_arguments)]
pub fn dense_backward(
    input: &[f64],
    w: &[f64],
    out: &[f64],
    relu: bool,
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut din: Option<&mut [f64]>,
) {
    let n_in = input.len();
    for o in 0..out.len() {
        if relu && out[o] <= 0.0 {
            continue;
        }
        let grad = dout[o];
        if grad == 0.0 {
            continue;
        }
        db[o] += grad;
        let row = o * n_in;
        axpy(grad, input, &mut dw[row..row + n_in]);
        if let Some(d) = din.as_deref_mut() {
            axpy(grad, &w[row..row + n_in], d);
        }
    }
}
