//! Oracles shared by the integration and acceptance tests. Nothing here calls
//! into the code under test for the quantity being checked.

#![allow(dead_code)]

use advdrive::nn::layers::ConvGeometry;
use advdrive::nn::NetworkParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Largest accepted relative error between analytic and numeric gradients.
pub const GRAD_TOL: f64 = 1e-4;
/// Denominator floor so near-zero gradients are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Worst relative error of `analytic` against central differences of `f`
/// over every coordinate of `x`.
pub fn check_vector(x: &mut [f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> (f64, usize) {
    assert_eq!(x.len(), analytic.len());
    let mut worst = 0.0f64;
    let mut at = 0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let up = f(x);
        x[i] = orig - FD_STEP;
        let down = f(x);
        x[i] = orig;
        let e = rel_err(analytic[i], (up - down) / (2.0 * FD_STEP));
        if e > worst {
            worst = e;
            at = i;
        }
    }
    (worst, at)
}

/// Worst relative error over every parameter of `params`; returns the offending tensor name.
pub fn check_params(
    params: &NetworkParams,
    analytic: &NetworkParams,
    mut f: impl FnMut(&NetworkParams) -> f64,
) -> (f64, String) {
    let mut work = params.clone();
    let mut worst = 0.0f64;
    let mut name = String::new();
    for t in 0..params.tensors().len() {
        for i in 0..params.tensors()[t].data.len() {
            let orig = work.tensors()[t].data[i];
            work.tensors_mut()[t].data[i] = orig + FD_STEP;
            let up = f(&work);
            work.tensors_mut()[t].data[i] = orig - FD_STEP;
            let down = f(&work);
            work.tensors_mut()[t].data[i] = orig;
            let e = rel_err(analytic.tensors()[t].data[i], (up - down) / (2.0 * FD_STEP));
            if e > worst {
                worst = e;
                name = format!("{}[{i}]", params.tensors()[t].name);
            }
        }
    }
    (worst, name)
}

/// Direct-definition convolution with ReLU; input `[c][y][x]`, weights `[o][c][ky][kx]`.
pub fn naive_conv_relu(g: &ConvGeometry, input: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    naive_conv(g, input, w, b).into_iter().map(|z| z.max(0.0)).collect()
}

/// Convolution pre-activations.
pub fn naive_conv(g: &ConvGeometry, input: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.output_len()];
    for o in 0..g.out_channels {
        for oy in 0..g.out_size {
            for ox in 0..g.out_size {
                let mut acc = b[o];
                for c in 0..g.in_channels {
                    for ky in 0..g.kernel {
                        for kx in 0..g.kernel {
                            let iy = oy * g.stride + ky;
                            let ix = ox * g.stride + kx;
                            acc += w[((o * g.in_channels + c) * g.kernel + ky) * g.kernel + kx]
                                * input[(c * g.in_size + iy) * g.in_size + ix];
                        }
                    }
                }
                out[(o * g.out_size + oy) * g.out_size + ox] = acc;
            }
        }
    }
    out
}

/// Direct-definition dense layer; weights `[out][in]`.
pub fn naive_dense(input: &[f64], w: &[f64], b: &[f64], relu: bool) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(o, bias)| {
            let acc: f64 = bias + input.iter().enumerate().map(|(i, x)| w[o * input.len() + i] * x).sum::<f64>();
            if relu {
                acc.max(0.0)
            } else {
                acc
            }
        })
        .collect()
}

/// Numerically stable log-softmax written out from the definition.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward pass written from the layer definitions, plus the smallest
/// |pre-activation| over every ReLU unit (distance to the nearest kink).
pub fn naive_forward(params: &NetworkParams, input: &[f64]) -> (Vec<f64>, f64, f64) {
    let t = |name: &str| &params.tensor(name).unwrap_or_else(|| panic!("missing {name}")).data;
    let arch = params.architecture();
    let mut margin = f64::INFINITY;
    let mut x = input.to_vec();
    for (i, g) in arch.conv_geometries().iter().enumerate() {
        let pre = naive_conv(g, &x, t(&format!("conv{}.weight", i + 1)), t(&format!("conv{}.bias", i + 1)));
        margin = pre.iter().fold(margin, |m, z| m.min(z.abs()));
        x = pre.iter().map(|z| z.max(0.0)).collect();
    }
    let pre = naive_dense(&x, t("dense.weight"), t("dense.bias"), false);
    margin = pre.iter().fold(margin, |m, z| m.min(z.abs()));
    let hidden: Vec<f64> = pre.iter().map(|z| z.max(0.0)).collect();
    let logits = naive_dense(&hidden, t("policy.weight"), t("policy.bias"), false);
    let value = naive_dense(&hidden, t("value.weight"), t("value.bias"), false)[0];
    (logits, value, margin)
}
