//! Minimal deterministic tensor/NN engine: 3x3 same-padded convolutions,
//! 2x2 max-pooling, dense layers, batch normalization, pointwise
//! nonlinearities, a full-extent feature-collapsing convolution, reverse-mode
//! gradients for all of them, and Adam.
//!
//! Everything is f64 and purely functional: forward ops return caches that
//! the matching backward ops consume, so gradients cannot be requested for
//! a pass that never ran.

#![allow(clippy::needless_range_loop)]

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fmath::{exp, sqrt};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum NnError {
    DimMismatch { context: &'static str },
    OddSpatialDim { h: usize, w: usize },
    BatchTooSmall { batch: usize },
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::DimMismatch { context } => write!(f, "dimension mismatch in {context}"),
            NnError::OddSpatialDim { h, w } => {
                write!(f, "max-pool needs even spatial dims, got {h}x{w}")
            }
            NnError::BatchTooSmall { batch } => {
                write!(f, "batch normalization needs batch >= 2 in train mode, got {batch}")
            }
        }
    }
}

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            dims.iter().product::<usize>(),
            data.len(),
            "data length must match dims"
        );
        Tensor {
            dims: dims.to_vec(),
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill_uniform(&mut self, rng: &mut Rng, bound: f64) {
        for v in &mut self.data {
            *v = rng.uniform_in(-bound, bound);
        }
    }

    pub fn add_scaled(&mut self, other: &Tensor, factor: f64) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }
}

/// Tensor with a stable name, as stored in checkpoints. Running statistics
/// are carried here too, marked non-trainable.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub trainable: bool,
    pub tensor: Tensor,
}

// ---------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero same-padding.
// ---------------------------------------------------------------------------

fn conv_dims(input: &Tensor, kernels: &Tensor) -> Result<(usize, usize, usize, usize), NnError> {
    if input.dims().len() != 3 || kernels.dims().len() != 4 {
        return Err(NnError::DimMismatch { context: "conv3x3 rank" });
    }
    let (c_in, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let c_out = kernels.dims()[0];
    if kernels.dims()[1] != c_in || kernels.dims()[2] != 3 || kernels.dims()[3] != 3 {
        return Err(NnError::DimMismatch { context: "conv3x3 kernel shape" });
    }
    Ok((c_in, c_out, h, w))
}

/// Shifted-window bounds for a kernel offset in {-1, 0, 1}: iterating
/// `out[h][x0..x1] += k * in[h+oy][x0+ox..x1+ox]` over `h in h0..h1` covers
/// exactly the in-range taps.
#[inline]
fn shift_bounds(extent: usize, offset: isize) -> (usize, usize) {
    if offset < 0 {
        (1, extent)
    } else if offset > 0 {
        (0, extent - 1)
    } else {
        (0, extent)
    }
}

/// Cross-correlation with zero same-padding.
pub fn conv3x3_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &[f64],
) -> Result<Tensor, NnError> {
    let (c_in, c_out, h, w) = conv_dims(input, kernels)?;
    if bias.len() != c_out {
        return Err(NnError::DimMismatch { context: "conv3x3 bias" });
    }
    let mut out = Tensor::zeros(&[c_out, h, w]);
    let plane = h * w;
    for o in 0..c_out {
        let out_plane = &mut out.data_mut()[o * plane..(o + 1) * plane];
        out_plane.fill(bias[o]);
        for ci in 0..c_in {
            let in_plane = &input.data()[ci * plane..(ci + 1) * plane];
            for dy in 0..3usize {
                let oy = dy as isize - 1;
                let (h0, h1) = shift_bounds(h, oy);
                for dx in 0..3usize {
                    let ox = dx as isize - 1;
                    let (x0, x1) = shift_bounds(w, ox);
                    let k = kernels.data()[((o * c_in + ci) * 3 + dy) * 3 + dx];
                    if k == 0.0 {
                        continue;
                    }
                    for row in h0..h1 {
                        let src = ((row as isize + oy) as usize) * w;
                        let sx0 = (x0 as isize + ox) as usize;
                        let dst = row * w;
                        let (orow, irow) = (
                            &mut out_plane[dst + x0..dst + x1],
                            &in_plane[src + sx0..src + sx0 + (x1 - x0)],
                        );
                        for (ov, iv) in orow.iter_mut().zip(irow) {
                            *ov += k * iv;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of the convolution with respect to input, kernels, and bias.
pub fn conv3x3_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Vec<f64>), NnError> {
    let (c_in, c_out, h, w) = conv_dims(input, kernels)?;
    if grad_out.dims() != [c_out, h, w] {
        return Err(NnError::DimMismatch { context: "conv3x3 grad shape" });
    }
    let mut grad_input = Tensor::zeros(&[c_in, h, w]);
    let mut grad_kernels = Tensor::zeros(kernels.dims());
    let mut grad_bias = vec![0.0; c_out];
    let plane = h * w;
    for o in 0..c_out {
        let gout_plane = &grad_out.data()[o * plane..(o + 1) * plane];
        grad_bias[o] = gout_plane.iter().sum();
        for ci in 0..c_in {
            let in_plane = &input.data()[ci * plane..(ci + 1) * plane];
            let gin_plane = &mut grad_input.data_mut()[ci * plane..(ci + 1) * plane];
            for dy in 0..3usize {
                let oy = dy as isize - 1;
                let (h0, h1) = shift_bounds(h, oy);
                for dx in 0..3usize {
                    let ox = dx as isize - 1;
                    let (x0, x1) = shift_bounds(w, ox);
                    let kidx = ((o * c_in + ci) * 3 + dy) * 3 + dx;
                    let k = kernels.data()[kidx];
                    let mut gk = 0.0;
                    for row in h0..h1 {
                        let src = ((row as isize + oy) as usize) * w;
                        let sx0 = (x0 as isize + ox) as usize;
                        let dst = row * w;
                        let gout_row = &gout_plane[dst + x0..dst + x1];
                        let in_row = &in_plane[src + sx0..src + sx0 + (x1 - x0)];
                        let gin_row = &mut gin_plane[src + sx0..src + sx0 + (x1 - x0)];
                        for ((g, iv), gi) in gout_row.iter().zip(in_row).zip(gin_row) {
                            gk += g * iv;
                            *gi += k * g;
                        }
                    }
                    grad_kernels.data_mut()[kidx] = gk;
                }
            }
        }
    }
    Ok((grad_input, grad_kernels, grad_bias))
}

// ---------------------------------------------------------------------------
// 2x2 max-pooling, stride 2.
// ---------------------------------------------------------------------------

/// Per 2x2 block maximum; ties resolved to the first element in row-major
/// block order. Returns flat per-plane argmax indices for the backward pass.
pub fn maxpool2_forward(input: &Tensor) -> Result<(Tensor, Vec<u32>), NnError> {
    if input.dims().len() != 3 {
        return Err(NnError::DimMismatch { context: "maxpool rank" });
    }
    let (c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NnError::OddSpatialDim { h, w });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let mut argmax = vec![0u32; c * oh * ow];
    let plane = h * w;
    for ch in 0..c {
        let in_plane = &input.data()[ch * plane..(ch + 1) * plane];
        for i in 0..oh {
            for j in 0..ow {
                let mut best_idx = (2 * i) * w + 2 * j;
                let mut best = in_plane[best_idx];
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (2 * i + dr) * w + 2 * j + dc;
                    if in_plane[idx] > best {
                        best = in_plane[idx];
                        best_idx = idx;
                    }
                }
                out.data_mut()[(ch * oh + i) * ow + j] = best;
                argmax[(ch * oh + i) * ow + j] = best_idx as u32;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2_backward(grad_out: &Tensor, argmax: &[u32], in_dims: &[usize]) -> Tensor {
    let (c, h, w) = (in_dims[0], in_dims[1], in_dims[2]);
    let mut grad_in = Tensor::zeros(&[c, h, w]);
    let plane = h * w;
    let out_plane = grad_out.dims()[1] * grad_out.dims()[2];
    for ch in 0..c {
        for k in 0..out_plane {
            let g = grad_out.data()[ch * out_plane + k];
            let idx = argmax[ch * out_plane + k] as usize;
            grad_in.data_mut()[ch * plane + idx] += g;
        }
    }
    grad_in
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities.
// ---------------------------------------------------------------------------

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut grad_in = grad_out.clone();
    for (g, &x) in grad_in.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    grad_in
}

pub fn sigmoid_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = 1.0 / (1.0 + exp(-*v));
    }
    out
}

/// Backward through the sigmoid given its forward *output*.
pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut grad_in = grad_out.clone();
    for (g, &y) in grad_in.data_mut().iter_mut().zip(output.data()) {
        *g *= y * (1.0 - y);
    }
    grad_in
}

// ---------------------------------------------------------------------------
// Dense (affine) layer on batched row vectors.
// ---------------------------------------------------------------------------

/// y = x W^T + b for a batch of rows: input [B, in], weights [out, in].
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &[f64]) -> Result<Tensor, NnError> {
    if input.dims().len() != 2 || weights.dims().len() != 2 {
        return Err(NnError::DimMismatch { context: "dense rank" });
    }
    let (b, n_in) = (input.dims()[0], input.dims()[1]);
    let (n_out, w_in) = (weights.dims()[0], weights.dims()[1]);
    if w_in != n_in || bias.len() != n_out {
        return Err(NnError::DimMismatch { context: "dense shapes" });
    }
    let mut out = Tensor::zeros(&[b, n_out]);
    for s in 0..b {
        let x = &input.data()[s * n_in..(s + 1) * n_in];
        let y = &mut out.data_mut()[s * n_out..(s + 1) * n_out];
        for (o, yo) in y.iter_mut().enumerate() {
            let wrow = &weights.data()[o * n_in..(o + 1) * n_in];
            let mut acc = bias[o];
            for (xv, wv) in x.iter().zip(wrow) {
                acc += xv * wv;
            }
            *yo = acc;
        }
    }
    Ok(out)
}

pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Vec<f64>), NnError> {
    let (b, n_in) = (input.dims()[0], input.dims()[1]);
    let (n_out, _) = (weights.dims()[0], weights.dims()[1]);
    if grad_out.dims() != [b, n_out] {
        return Err(NnError::DimMismatch { context: "dense grad shape" });
    }
    let mut grad_in = Tensor::zeros(&[b, n_in]);
    let mut grad_w = Tensor::zeros(weights.dims());
    let mut grad_b = vec![0.0; n_out];
    for s in 0..b {
        let x = &input.data()[s * n_in..(s + 1) * n_in];
        let g = &grad_out.data()[s * n_out..(s + 1) * n_out];
        for (o, &go) in g.iter().enumerate() {
            grad_b[o] += go;
            let wrow = &weights.data()[o * n_in..(o + 1) * n_in];
            let gwrow = &mut grad_w.data_mut()[o * n_in..(o + 1) * n_in];
            let gin = &mut grad_in.data_mut()[s * n_in..(s + 1) * n_in];
            for i in 0..n_in {
                gwrow[i] += go * x[i];
                gin[i] += go * wrow[i];
            }
        }
    }
    Ok((grad_in, grad_w, grad_b))
}

// ---------------------------------------------------------------------------
// Batch normalization over features of a [B, F] batch.
// ---------------------------------------------------------------------------

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

pub struct BnCache {
    inv_std: Vec<f64>,
    xhat: Tensor,
}

/// Train-mode batch normalization; updates running statistics in place.
pub fn batchnorm_forward_train(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &mut [f64],
    running_var: &mut [f64],
) -> Result<(Tensor, BnCache), NnError> {
    let (b, f) = (input.dims()[0], input.dims()[1]);
    if b < 2 {
        return Err(NnError::BatchTooSmall { batch: b });
    }
    if gamma.len() != f || beta.len() != f || running_mean.len() != f || running_var.len() != f {
        return Err(NnError::DimMismatch { context: "batchnorm params" });
    }
    let mut mean = vec![0.0; f];
    let mut var = vec![0.0; f];
    for s in 0..b {
        for (k, m) in mean.iter_mut().enumerate() {
            *m += input.data()[s * f + k];
        }
    }
    for m in mean.iter_mut() {
        *m /= b as f64;
    }
    for s in 0..b {
        for (k, v) in var.iter_mut().enumerate() {
            let d = input.data()[s * f + k] - mean[k];
            *v += d * d;
        }
    }
    for v in var.iter_mut() {
        *v /= b as f64;
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / sqrt(v + BN_EPS)).collect();
    let mut xhat = Tensor::zeros(&[b, f]);
    let mut out = Tensor::zeros(&[b, f]);
    for s in 0..b {
        for k in 0..f {
            let xh = (input.data()[s * f + k] - mean[k]) * inv_std[k];
            xhat.data_mut()[s * f + k] = xh;
            out.data_mut()[s * f + k] = gamma[k] * xh + beta[k];
        }
    }
    for k in 0..f {
        running_mean[k] = BN_MOMENTUM * running_mean[k] + (1.0 - BN_MOMENTUM) * mean[k];
        running_var[k] = BN_MOMENTUM * running_var[k] + (1.0 - BN_MOMENTUM) * var[k];
    }
    Ok((out, BnCache { inv_std, xhat }))
}

/// Eval-mode batch normalization using stored running statistics.
pub fn batchnorm_forward_eval(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) -> Result<Tensor, NnError> {
    let (b, f) = (input.dims()[0], input.dims()[1]);
    if gamma.len() != f || beta.len() != f || running_mean.len() != f || running_var.len() != f {
        return Err(NnError::DimMismatch { context: "batchnorm params" });
    }
    let mut out = Tensor::zeros(&[b, f]);
    for s in 0..b {
        for k in 0..f {
            let xh = (input.data()[s * f + k] - running_mean[k]) / sqrt(running_var[k] + BN_EPS);
            out.data_mut()[s * f + k] = gamma[k] * xh + beta[k];
        }
    }
    Ok(out)
}

pub fn batchnorm_backward(
    grad_out: &Tensor,
    gamma: &[f64],
    cache: &BnCache,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let (b, f) = (grad_out.dims()[0], grad_out.dims()[1]);
    let mut dgamma = vec![0.0; f];
    let mut dbeta = vec![0.0; f];
    for s in 0..b {
        for k in 0..f {
            let g = grad_out.data()[s * f + k];
            dgamma[k] += g * cache.xhat.data()[s * f + k];
            dbeta[k] += g;
        }
    }
    let mut grad_in = Tensor::zeros(&[b, f]);
    let bn = b as f64;
    for s in 0..b {
        for k in 0..f {
            let g = grad_out.data()[s * f + k];
            let xh = cache.xhat.data()[s * f + k];
            grad_in.data_mut()[s * f + k] =
                gamma[k] * cache.inv_std[k] * (g - dbeta[k] / bn - xh * dgamma[k] / bn);
        }
    }
    (grad_in, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// Full-extent convolution collapsing C x H x W to a feature vector.
// ---------------------------------------------------------------------------

/// Valid convolution whose kernel spans the whole feature map: one inner
/// product per output channel.
pub fn final_conv_full_forward(input: &Tensor, kernels: &Tensor) -> Result<Vec<f64>, NnError> {
    if kernels.dims().len() != 4 || input.dims().len() != 3 {
        return Err(NnError::DimMismatch { context: "final conv rank" });
    }
    if kernels.dims()[1..] != *input.dims() {
        return Err(NnError::DimMismatch { context: "final conv kernel extent" });
    }
    let c_out = kernels.dims()[0];
    let n = input.len();
    let mut out = vec![0.0; c_out];
    for (o, val) in out.iter_mut().enumerate() {
        let krow = &kernels.data()[o * n..(o + 1) * n];
        let mut acc = 0.0;
        for (x, k) in input.data().iter().zip(krow) {
            acc += x * k;
        }
        *val = acc;
    }
    Ok(out)
}

pub fn final_conv_full_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &[f64],
) -> Result<(Tensor, Tensor), NnError> {
    let c_out = kernels.dims()[0];
    if grad_out.len() != c_out {
        return Err(NnError::DimMismatch { context: "final conv grad" });
    }
    let n = input.len();
    let mut grad_in = Tensor::zeros(input.dims());
    let mut grad_k = Tensor::zeros(kernels.dims());
    for (o, &g) in grad_out.iter().enumerate() {
        let krow = &kernels.data()[o * n..(o + 1) * n];
        let gkrow = &mut grad_k.data_mut()[o * n..(o + 1) * n];
        for i in 0..n {
            gkrow[i] = g * input.data()[i];
            grad_in.data_mut()[i] += g * krow[i];
        }
    }
    Ok((grad_in, grad_k))
}

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct AdamState {
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step_count: u64,
    pub learning_rate: f64,
    pub decay1: f64,
    pub decay2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &[NamedTensor], learning_rate: f64) -> Self {
        AdamState {
            first_moment: params.iter().map(|p| Tensor::zeros(p.tensor.dims())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.tensor.dims())).collect(),
            step_count: 0,
            learning_rate,
            decay1: 0.9,
            decay2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One Adam update with bias correction. Gradients align index-for-index
    /// with `params`; non-trainable tensors are skipped.
    pub fn step(&mut self, params: &mut [NamedTensor], grads: &[Tensor]) -> Result<(), NnError> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(NnError::DimMismatch { context: "adam param/grad count" });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - crate::fmath::powi(self.decay1, t);
        let bc2 = 1.0 - crate::fmath::powi(self.decay2, t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(&mut self.second_moment))
        {
            if !param.trainable {
                continue;
            }
            if param.tensor.dims() != grad.dims() {
                return Err(NnError::DimMismatch { context: "adam grad shape" });
            }
            for i in 0..grad.len() {
                let g = grad.data()[i];
                let mi = self.decay1 * m.data()[i] + (1.0 - self.decay1) * g;
                let vi = self.decay2 * v.data()[i] + (1.0 - self.decay2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                param.tensor.data_mut()[i] -=
                    self.learning_rate * m_hat / (sqrt(v_hat) + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Fan-balanced uniform initialization bound.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    sqrt(6.0 / (fan_in + fan_out) as f64)
}


#[cfg(test)]
mod running_stats_tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn train_mode_updates_running_statistics_with_momentum() {
        let mut rng = Rng::new(70);
        let mut x = Tensor::zeros(&[6, 3]);
        for v in x.data_mut() {
            *v = rng.normal() * 2.0 + 1.0;
        }
        let gamma = vec![1.0; 3];
        let beta = vec![0.0; 3];
        let mut rmean = vec![0.5; 3];
        let mut rvar = vec![2.0; 3];
        let (_, _) =
            batchnorm_forward_train(&x, &gamma, &beta, &mut rmean, &mut rvar).unwrap();
        for k in 0..3 {
            let mut mean = 0.0;
            for s in 0..6 {
                mean += x.data()[s * 3 + k];
            }
            mean /= 6.0;
            let mut var = 0.0;
            for s in 0..6 {
                let d = x.data()[s * 3 + k] - mean;
                var += d * d;
            }
            var /= 6.0;
            assert!((rmean[k] - (0.9 * 0.5 + 0.1 * mean)).abs() < 1e-12);
            assert!((rvar[k] - (0.9 * 2.0 + 0.1 * var)).abs() < 1e-12);
        }
        // Eval mode then uses exactly these statistics.
        let y = batchnorm_forward_eval(&x, &gamma, &beta, &rmean, &rvar).unwrap();
        let expect = (x.data()[0] - rmean[0]) / libm::sqrt(rvar[0] + BN_EPS);
        assert!((y.data()[0] - expect).abs() < 1e-12);
    }
}
