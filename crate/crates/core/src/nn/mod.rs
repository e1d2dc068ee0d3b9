//! Convolutional actor-critic network with hand-written reverse mode.
//!
//! A shared trunk of ReLU convolutions and one ReLU dense layer feeds two
//! linear heads: action logits and a scalar state value. Parameters are
//! stored as named 64-bit tensors so checkpoints, optimiser moments and
//! gradients all share one layout.

pub mod adam;
pub mod layers;
pub mod policy;

use crate::error::{Error, Result};
use crate::raster::{ObsMode, ObservationImage, CHANNELS};
use layers::{conv_relu_backward, conv_relu_forward, dense_backward, dense_forward, ConvGeometry};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use adam::{adam_update, AdamConfig, AdamState};
pub use policy::{action_command, sample_action, Categorical, SampledAction, ACTION_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_size: usize,
    pub input_channels: usize,
    pub convs: Vec<ConvSpec>,
    pub hidden: usize,
    pub actions: usize,
}

impl Architecture {
    /// 32x8x8/4, 64x4x4/2, 64x3x3/1, 512 dense on the 84x84 image.
    pub fn full84() -> Self {
        Self {
            input_size: 84,
            input_channels: CHANNELS,
            convs: vec![
                ConvSpec { filters: 32, kernel: 8, stride: 4 },
                ConvSpec { filters: 64, kernel: 4, stride: 2 },
                ConvSpec { filters: 64, kernel: 3, stride: 1 },
            ],
            hidden: 512,
            actions: ACTION_COUNT,
        }
    }

    /// Reduced trunk on the 21x21 native samples of a lite observation.
    pub fn lite21() -> Self {
        Self {
            input_size: 21,
            input_channels: CHANNELS,
            convs: vec![
                ConvSpec { filters: 8, kernel: 4, stride: 2 },
                ConvSpec { filters: 16, kernel: 3, stride: 1 },
                ConvSpec { filters: 16, kernel: 3, stride: 1 },
            ],
            hidden: 64,
            actions: ACTION_COUNT,
        }
    }

    pub fn for_mode(mode: ObsMode) -> Self {
        match mode {
            ObsMode::Full84 => Self::full84(),
            ObsMode::Lite21 => Self::lite21(),
        }
    }

    pub fn conv_geometries(&self) -> Vec<ConvGeometry> {
        let mut out = Vec::with_capacity(self.convs.len());
        let (mut c, mut s) = (self.input_channels, self.input_size);
        for spec in &self.convs {
            let g = ConvGeometry::new(c, s, spec.filters, spec.kernel, spec.stride);
            c = g.out_channels;
            s = g.out_size;
            out.push(g);
        }
        out
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_size * self.input_size
    }

    pub fn flat_len(&self) -> usize {
        self.conv_geometries()
            .last()
            .map_or(self.input_len(), |g| g.output_len())
    }

    /// Names and shapes of every parameter tensor in storage order.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = Vec::new();
        for (i, g) in self.conv_geometries().iter().enumerate() {
            specs.push((
                format!("conv{}.weight", i + 1),
                vec![g.out_channels, g.in_channels, g.kernel, g.kernel],
            ));
            specs.push((format!("conv{}.bias", i + 1), vec![g.out_channels]));
        }
        specs.push(("dense.weight".into(), vec![self.hidden, self.flat_len()]));
        specs.push(("dense.bias".into(), vec![self.hidden]));
        specs.push(("policy.weight".into(), vec![self.actions, self.hidden]));
        specs.push(("policy.bias".into(), vec![self.actions]));
        specs.push(("value.weight".into(), vec![1, self.hidden]));
        specs.push(("value.bias".into(), vec![1]));
        specs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// All weights of one agent's network. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    tensors: Vec<Tensor>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    convs: Vec<Vec<f64>>,
    hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    pub value: f64,
    pub cache: ForwardCache,
}

const TRUNK_GAIN: f64 = std::f64::consts::SQRT_2;
const POLICY_GAIN: f64 = 0.01;
const VALUE_GAIN: f64 = 1.0;

impl NetworkParams {
    pub fn zeros(arch: &Architecture) -> Self {
        let tensors = arch
            .tensor_specs()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                Tensor {
                    name,
                    shape,
                    data: vec![0.0; n],
                }
            })
            .collect();
        Self {
            arch: arch.clone(),
            tensors,
        }
    }

    /// Orthogonal weights (gain sqrt(2) in the trunk, 0.01 policy head, 1.0
    /// value head) and zero biases.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let n_conv = arch.convs.len();
        for i in 0..n_conv + 3 {
            let gain = if i < n_conv + 1 {
                TRUNK_GAIN
            } else if i == n_conv + 1 {
                POLICY_GAIN
            } else {
                VALUE_GAIN
            };
            let t = &mut p.tensors[2 * i];
            let rows = t.shape[0];
            let cols = t.data.len() / rows;
            t.data = orthogonal(rows, cols, gain, rng);
        }
        p
    }

    /// Rebuilds from stored tensors, checking names and shapes against `arch`.
    pub fn from_tensors(arch: &Architecture, tensors: Vec<Tensor>) -> Result<Self> {
        let specs = arch.tensor_specs();
        if specs.len() != tensors.len() {
            return Err(Error::Contract(format!(
                "expected {} tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in specs.iter().zip(&tensors) {
            if *name != t.name || *shape != t.shape {
                return Err(crate::error::CheckpointError::Shape {
                    name: t.name.clone(),
                    expected: shape.clone(),
                    found: t.shape.clone(),
                }
                .into());
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Contract(format!("tensor `{name}` has wrong length")));
            }
        }
        Ok(Self {
            arch: arch.clone(),
            tensors,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.arch)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn fill(&mut self, value: f64) {
        for t in &mut self.tensors {
            t.data.fill(value);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// Hex SHA-256 over tensor names, shapes and little-endian values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tensors {
            h.update(t.name.as_bytes());
            for d in &t.shape {
                h.update((*d as u64).to_le_bytes());
            }
            for v in &t.data {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn layer(&self, i: usize) -> (&[f64], &[f64]) {
        (&self.tensors[2 * i].data, &self.tensors[2 * i + 1].data)
    }

    pub fn forward(&self, obs: &ObservationImage) -> Result<ForwardOutput> {
        let input = obs.planar(self.arch.input_size)?;
        self.forward_input(input)
    }

    /// Forward pass on a channel-first input of the architecture's size.
    pub fn forward_input(&self, input: Vec<f64>) -> Result<ForwardOutput> {
        if input.len() != self.arch.input_len() {
            return Err(Error::Contract(format!(
                "network input needs {} values, got {}",
                self.arch.input_len(),
                input.len()
            )));
        }
        let geoms = self.arch.conv_geometries();
        let mut convs: Vec<Vec<f64>> = Vec::with_capacity(geoms.len());
        for (i, g) in geoms.iter().enumerate() {
            let mut out = vec![0.0; g.output_len()];
            let (w, b) = self.layer(i);
            let prev = if i == 0 { &input } else { &convs[i - 1] };
            conv_relu_forward(g, prev, w, b, &mut out);
            convs.push(out);
        }
        let n_conv = geoms.len();
        let flat = convs.last().unwrap_or(&input);
        let mut hidden = vec![0.0; self.arch.hidden];
        let (w, b) = self.layer(n_conv);
        dense_forward(flat, w, b, true, &mut hidden);
        let mut logits = vec![0.0; self.arch.actions];
        let (w, b) = self.layer(n_conv + 1);
        dense_forward(&hidden, w, b, false, &mut logits);
        let mut value = [0.0];
        let (w, b) = self.layer(n_conv + 2);
        dense_forward(&hidden, w, b, false, &mut value);
        Ok(ForwardOutput {
            logits,
            value: value[0],
            cache: ForwardCache {
                input,
                convs,
                hidden,
            },
        })
    }

    /// Accumulates into `grads` the parameter gradient of
    /// `dlogits . logits + dvalue * value` at the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64], dvalue: f64, grads: &mut NetworkParams) {
        debug_assert_eq!(dlogits.len(), self.arch.actions);
        let geoms = self.arch.conv_geometries();
        let n_conv = geoms.len();
        let hidden = &cache.hidden;
        let mut dhidden = vec![0.0; hidden.len()];

        let (wp, _) = self.layer(n_conv + 1);
        let (wv, _) = self.layer(n_conv + 2);
        grads.head_backward(n_conv + 1, hidden, dlogits);
        grads.head_backward(n_conv + 2, hidden, &[dvalue]);
        for (a, g) in dlogits.iter().enumerate() {
            if *g != 0.0 {
                let row = &wp[a * hidden.len()..(a + 1) * hidden.len()];
                for (d, w) in dhidden.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
        if dvalue != 0.0 {
            for (d, w) in dhidden.iter_mut().zip(wv) {
                *d += dvalue * w;
            }
        }

        let flat = cache.convs.last().unwrap_or(&cache.input);
        let mut dflat = vec![0.0; flat.len()];
        {
            let (w, _) = self.layer(n_conv);
            let (dw, db) = grads.layer_mut(n_conv);
            dense_backward(flat, w, hidden, true, &dhidden, dw, db, Some(&mut dflat));
        }

        let mut dout = dflat;
        for i in (0..n_conv).rev() {
            let g = &geoms[i];
            let input = if i == 0 { &cache.input } else { &cache.convs[i - 1] };
            let (w, _) = self.layer(i);
            let mut din = if i > 0 { vec![0.0; g.input_len()] } else { Vec::new() };
            let (dw, db) = grads.layer_mut(i);
            conv_relu_backward(
                g,
                input,
                w,
                &cache.convs[i],
                &dout,
                dw,
                db,
                if i > 0 { Some(&mut din) } else { None },
            );
            dout = din;
        }
    }

    fn layer_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let (a, b) = self.tensors.split_at_mut(2 * i + 1);
        (&mut a[2 * i].data, &mut b[0].data)
    }

    fn head_backward(&mut self, layer: usize, hidden: &[f64], dout: &[f64]) {
        let (dw, db) = self.layer_mut(layer);
        let n = hidden.len();
        for (o, g) in dout.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            db[o] += g;
            for (d, h) in dw[o * n..(o + 1) * n].iter_mut().zip(hidden) {
                *d += g * h;
            }
        }
    }

    /// `self += k * other`
    pub fn add_scaled(&mut self, other: &NetworkParams, k: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += k * y;
            }
        }
    }
}

/// Gaussian matrix orthonormalised along its shorter dimension, times `gain`.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n, m) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut q: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for i in 0..n {
        for j in 0..i {
            let (head, tail) = q.split_at_mut(i);
            let proj: f64 = tail[0].iter().zip(&head[j]).map(|(a, b)| a * b).sum();
            for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                *a -= proj * b;
            }
        }
        let norm = q[i].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        q[i].iter_mut().for_each(|v| *v /= norm);
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = gain * if rows <= cols { q[r][c] } else { q[c][r] };
        }
    }
    out
}
