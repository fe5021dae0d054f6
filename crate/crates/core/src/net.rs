//! Three-branch shape-parameter regression network.
//!
//! Two convolutional encoders digest the short-axis stack and the long-axis
//! view down to 1024- and 256-feature vectors, a small MLP encodes the
//! 11-value metadata vector to 128 features, and a four-layer fully
//! connected head (batch-normalized, ReLU/ReLU/Sigmoid/Sigmoid) maps the
//! concatenation to k unit-interval shape parameters. Training minimizes
//! the mode-weighted absolute error with Adam; every step is a
//! deterministic function of the seed, so reruns produce bit-identical
//! checkpoints regardless of how the per-sample work is mapped to threads.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fmath::sqrt;
use crate::mesh::{BiventricularShape, MeshError};
use crate::nn::{
    batchnorm_forward_eval, batchnorm_forward_train, batchnorm_backward, conv3x3_backward,
    conv3x3_forward, dense_backward, dense_forward,
    final_conv_full_forward, glorot_bound, maxpool2_backward, maxpool2_forward, relu_backward,
    relu_forward, sigmoid_backward, sigmoid_forward, AdamState, BnCache, NamedTensor, NnError,
    Tensor,
};
use crate::pdm::{PdmError, PointDistributionModel};
use crate::preprocess::SubjectSample;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum NetError {
    BadArchitecture(String),
    Dim { context: &'static str },
    EmptyDataset,
    DatasetSmallerThanBatch { dataset: usize, batch: usize },
    MissingReference { index: usize },
    ReferenceLength { index: usize, got: usize, expected: usize },
    Nn(NnError),
    Pdm(PdmError),
    Mesh(MeshError),
}

impl fmt::Display for NetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetError::BadArchitecture(msg) => write!(f, "bad architecture: {msg}"),
            NetError::Dim { context } => write!(f, "dimension mismatch in {context}"),
            NetError::EmptyDataset => write!(f, "dataset is empty"),
            NetError::DatasetSmallerThanBatch { dataset, batch } => {
                write!(f, "dataset of {dataset} smaller than batch size {batch}")
            }
            NetError::MissingReference { index } => {
                write!(f, "sample {index} has no reference parameters")
            }
            NetError::ReferenceLength { index, got, expected } => {
                write!(f, "sample {index} reference has {got} values, expected {expected}")
            }
            NetError::Nn(e) => write!(f, "{e}"),
            NetError::Pdm(e) => write!(f, "{e}"),
            NetError::Mesh(e) => write!(f, "{e}"),
        }
    }
}

impl From<NnError> for NetError {
    fn from(e: NnError) -> Self {
        NetError::Nn(e)
    }
}

impl From<PdmError> for NetError {
    fn from(e: PdmError) -> Self {
        NetError::Pdm(e)
    }
}

impl From<MeshError> for NetError {
    fn from(e: MeshError) -> Self {
        NetError::Mesh(e)
    }
}

// ---------------------------------------------------------------------------
// Architecture.
// ---------------------------------------------------------------------------

/// Sizes of every sub-network. Encoder stages run two 3x3 convolutions and
/// a 2x2 max-pool each; a full-extent convolution then collapses the last
/// feature map into the branch's feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureConfig {
    pub sax_slices: usize,
    pub sax_size: usize,
    /// Activation maps per SAX stage; the length is the encoder depth.
    pub sax_channels: Vec<usize>,
    pub sax_features: usize,
    pub lax_size: usize,
    pub lax_channels: Vec<usize>,
    pub lax_features: usize,
    pub meta_inputs: usize,
    pub mlp_hidden: [usize; 3],
    pub mlp_output: usize,
    pub head_hidden: [usize; 3],
    /// Retained PCA mode count k; the head emits this many sigmoids.
    pub mode_count: usize,
    pub use_metadata: bool,
}

impl ArchitectureConfig {
    /// Full-scale configuration: 9x64x64 SAX stack at encoder depth 4,
    /// 80x80 LAX at depth 2, 1024/256/128 branch features, 1408-wide fusion.
    pub fn full_scale(mode_count: usize) -> Self {
        ArchitectureConfig {
            sax_slices: 9,
            sax_size: 64,
            sax_channels: vec![8, 16, 32, 64],
            sax_features: 1024,
            lax_size: 80,
            lax_channels: vec![8, 16],
            lax_features: 256,
            meta_inputs: 11,
            mlp_hidden: [16, 32, 64],
            mlp_output: 128,
            head_hidden: [512, 128, 32],
            mode_count,
            use_metadata: true,
        }
    }

    /// Small configuration for gradient checks and fast tests.
    pub fn toy(mode_count: usize) -> Self {
        ArchitectureConfig {
            sax_slices: 3,
            sax_size: 16,
            sax_channels: vec![4, 6],
            sax_features: 12,
            lax_size: 16,
            lax_channels: vec![3, 5],
            lax_features: 8,
            meta_inputs: 11,
            mlp_hidden: [3, 4, 5],
            mlp_output: 6,
            head_hidden: [10, 8, 6],
            mode_count,
            use_metadata: true,
        }
    }

    pub fn fusion_size(&self) -> usize {
        self.sax_features
            + self.lax_features
            + if self.use_metadata { self.mlp_output } else { 0 }
    }

    fn final_spatial(size: usize, depth: usize) -> usize {
        size >> depth
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let err = |msg: &str| Err(NetError::BadArchitecture(String::from(msg)));
        if self.sax_channels.is_empty() || self.lax_channels.is_empty() {
            return err("encoders need at least one stage");
        }
        if !self.sax_size.is_multiple_of(1 << self.sax_channels.len()) {
            return err("SAX size must be divisible by 2^depth");
        }
        if !self.lax_size.is_multiple_of(1 << self.lax_channels.len()) {
            return err("LAX size must be divisible by 2^depth");
        }
        if self.mode_count == 0 {
            return err("mode count must be positive");
        }
        if self.sax_features == 0 || self.lax_features == 0 || self.mlp_output == 0 {
            return err("feature sizes must be positive");
        }
        Ok(())
    }
}

/// Unit-interval shape parameters predicted by the head.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedParams {
    pub values: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Mode-weighted loss.
// ---------------------------------------------------------------------------

/// Decreasing weight of mode `i` (1-based) out of `k`: sqrt((k-i+1)/k).
pub fn mode_weight(i: usize, k: usize) -> f64 {
    assert!(i >= 1 && i <= k, "mode index {i} out of 1..={k}");
    sqrt((k - i + 1) as f64 / k as f64)
}

/// Sum of |predicted - reference| per mode, weighted by [`mode_weight`].
pub fn weighted_loss(predicted: &[f64], reference: &[f64]) -> Result<f64, NetError> {
    if predicted.len() != reference.len() {
        return Err(NetError::Dim { context: "weighted loss lengths" });
    }
    let k = predicted.len();
    Ok(predicted
        .iter()
        .zip(reference)
        .enumerate()
        .map(|(i, (p, r))| (p - r).abs() * mode_weight(i + 1, k))
        .sum())
}

// ---------------------------------------------------------------------------
// Parameters.
// ---------------------------------------------------------------------------

/// Named tensor collection for both encoders, the MLP, and the fusion head.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub tensors: Vec<NamedTensor>,
}

impl NetworkParams {
    /// Seeded fan-balanced uniform initialization; biases start at zero,
    /// batch-norm scale at one.
    pub fn init(arch: &ArchitectureConfig, seed: u64) -> Result<Self, NetError> {
        arch.validate()?;
        fn add(
            tensors: &mut Vec<NamedTensor>,
            seed: u64,
            name: String,
            trainable: bool,
            dims: &[usize],
            bound: f64,
        ) {
            let index = tensors.len() as u64;
            let mut tensor = Tensor::zeros(dims);
            if bound > 0.0 {
                tensor.fill_uniform(&mut Rng::derive(seed, index + 1), bound);
            }
            tensors.push(NamedTensor {
                name,
                trainable,
                tensor,
            });
        }
        fn encoder(
            tensors: &mut Vec<NamedTensor>,
            seed: u64,
            prefix: &str,
            in_ch: usize,
            channels: &[usize],
            size: usize,
            features: usize,
        ) {
            let mut cin = in_ch;
            for (s, &cout) in channels.iter().enumerate() {
                for (conv, ci) in [(0, cin), (1, cout)] {
                    add(
                        tensors,
                        seed,
                        format!("{prefix}.enc{s}.conv{conv}.w"),
                        true,
                        &[cout, ci, 3, 3],
                        glorot_bound(ci * 9, cout * 9),
                    );
                    add(tensors, seed, format!("{prefix}.enc{s}.conv{conv}.b"), true, &[cout], 0.0);
                }
                cin = cout;
            }
            let spatial = ArchitectureConfig::final_spatial(size, channels.len());
            add(
                tensors,
                seed,
                format!("{prefix}.final.w"),
                true,
                &[features, cin, spatial, spatial],
                glorot_bound(cin * spatial * spatial, features),
            );
        }

        let mut tensors = Vec::new();
        encoder(
            &mut tensors,
            seed,
            "sax",
            arch.sax_slices,
            &arch.sax_channels,
            arch.sax_size,
            arch.sax_features,
        );
        encoder(
            &mut tensors,
            seed,
            "lax",
            1,
            &arch.lax_channels,
            arch.lax_size,
            arch.lax_features,
        );

        if arch.use_metadata {
            let mut sizes = vec![arch.meta_inputs];
            sizes.extend_from_slice(&arch.mlp_hidden);
            sizes.push(arch.mlp_output);
            for layer in 0..sizes.len() - 1 {
                add(
                    &mut tensors,
                    seed,
                    format!("mlp.fc{layer}.w"),
                    true,
                    &[sizes[layer + 1], sizes[layer]],
                    glorot_bound(sizes[layer], sizes[layer + 1]),
                );
                add(&mut tensors, seed, format!("mlp.fc{layer}.b"), true, &[sizes[layer + 1]], 0.0);
            }
        }

        let mut sizes = vec![arch.fusion_size()];
        sizes.extend_from_slice(&arch.head_hidden);
        sizes.push(arch.mode_count);
        for layer in 0..sizes.len() - 1 {
            add(
                &mut tensors,
                seed,
                format!("head.fc{layer}.w"),
                true,
                &[sizes[layer + 1], sizes[layer]],
                glorot_bound(sizes[layer], sizes[layer + 1]),
            );
            add(&mut tensors, seed, format!("head.fc{layer}.b"), true, &[sizes[layer + 1]], 0.0);
            let f = sizes[layer + 1];
            let mut gamma = Tensor::zeros(&[f]);
            gamma.data_mut().fill(1.0);
            tensors.push(NamedTensor {
                name: format!("head.bn{layer}.gamma"),
                trainable: true,
                tensor: gamma,
            });
            tensors.push(NamedTensor {
                name: format!("head.bn{layer}.beta"),
                trainable: true,
                tensor: Tensor::zeros(&[f]),
            });
            tensors.push(NamedTensor {
                name: format!("head.bn{layer}.rmean"),
                trainable: false,
                tensor: Tensor::zeros(&[f]),
            });
            let mut rvar = Tensor::zeros(&[f]);
            rvar.data_mut().fill(1.0);
            tensors.push(NamedTensor {
                name: format!("head.bn{layer}.rvar"),
                trainable: false,
                tensor: rvar,
            });
        }

        Ok(NetworkParams { tensors })
    }

    pub fn index_of(&self, name: &str) -> usize {
        self.tensors
            .iter()
            .position(|t| t.name == name)
            .unwrap_or_else(|| panic!("no tensor named {name}"))
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.tensors[self.index_of(name)].tensor
    }

    pub fn has(&self, name: &str) -> bool {
        self.tensors.iter().any(|t| t.name == name)
    }

    /// Zero gradient buffers aligned with the tensor list.
    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.tensors
            .iter()
            .map(|t| Tensor::zeros(t.tensor.dims()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Training samples.
// ---------------------------------------------------------------------------

/// Network inputs for one subject, already as tensors.
#[derive(Clone, Debug)]
pub struct TrainSample {
    /// [slices, H, W]
    pub sax: Tensor,
    /// [1, H, W]
    pub lax: Tensor,
    pub meta: Vec<f64>,
    /// Unit-encoded reference parameters (training/test loss only).
    pub reference: Option<Vec<f64>>,
}

impl TrainSample {
    pub fn from_subject(sample: &SubjectSample) -> Self {
        let slices = sample.sax.slices();
        let h = slices[0].pixels.height;
        let w = slices[0].pixels.width;
        let mut sax = Vec::with_capacity(slices.len() * h * w);
        for s in slices {
            sax.extend_from_slice(&s.pixels.data);
        }
        let lax_h = sample.lax.pixels.height;
        let lax_w = sample.lax.pixels.width;
        TrainSample {
            sax: Tensor::from_vec(&[slices.len(), h, w], sax),
            lax: Tensor::from_vec(&[1, lax_h, lax_w], sample.lax.pixels.data.clone()),
            meta: sample.meta.0.to_vec(),
            reference: sample.reference_params.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Encoder and MLP forward/backward.
// ---------------------------------------------------------------------------

struct StageCache {
    input: Tensor,
    conv0_pre: Tensor,
    conv0_post: Tensor,
    conv1_pre: Tensor,
    pooled_in: Tensor,
    argmax: Vec<u32>,
}

struct EncoderCache {
    stages: Vec<StageCache>,
    final_input: Tensor,
    final_pre: Vec<f64>,
}

fn encoder_forward(
    params: &NetworkParams,
    prefix: &str,
    channels: &[usize],
    input: &Tensor,
) -> Result<(Vec<f64>, EncoderCache), NetError> {
    let mut stages = Vec::with_capacity(channels.len());
    let mut x = input.clone();
    for s in 0..channels.len() {
        let w0 = params.get(&format!("{prefix}.enc{s}.conv0.w"));
        let b0 = params.get(&format!("{prefix}.enc{s}.conv0.b"));
        let w1 = params.get(&format!("{prefix}.enc{s}.conv1.w"));
        let b1 = params.get(&format!("{prefix}.enc{s}.conv1.b"));
        let conv0_pre = conv3x3_forward(&x, w0, b0.data())?;
        let conv0_post = relu_forward(&conv0_pre);
        let conv1_pre = conv3x3_forward(&conv0_post, w1, b1.data())?;
        let pooled_in = relu_forward(&conv1_pre);
        let (pooled, argmax) = maxpool2_forward(&pooled_in)?;
        stages.push(StageCache {
            input: x,
            conv0_pre,
            conv0_post,
            conv1_pre,
            pooled_in,
            argmax,
        });
        x = pooled;
    }
    let wf = params.get(&format!("{prefix}.final.w"));
    let final_pre = final_conv_full_forward(&x, wf)?;
    let features = final_pre.iter().map(|&v| v.max(0.0)).collect();
    Ok((
        features,
        EncoderCache {
            stages,
            final_input: x,
            final_pre,
        },
    ))
}

/// Backward through one encoder. Kernel gradients of the big final
/// convolution are not materialized here; the pre-ReLU feature gradient is
/// returned so the caller can accumulate the outer product against the
/// cached final input, keeping per-sample buffers small.
fn encoder_backward(
    params: &NetworkParams,
    prefix: &str,
    channels: &[usize],
    cache: &EncoderCache,
    d_features: &[f64],
    grads: &mut SparseGrads,
) -> Result<Vec<f64>, NetError> {
    // ReLU over the final feature vector.
    let d_pre: Vec<f64> = d_features
        .iter()
        .zip(&cache.final_pre)
        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
        .collect();
    let wf = params.get(&format!("{prefix}.final.w"));
    let mut d_x = final_conv_input_grad(&cache.final_input, wf, &d_pre)?;

    for s in (0..channels.len()).rev() {
        let stage = &cache.stages[s];
        let d_pooled_in = maxpool2_backward(&d_x, &stage.argmax, stage.pooled_in.dims());
        let d_conv1_pre = relu_backward(&stage.conv1_pre, &d_pooled_in);
        let w1 = params.get(&format!("{prefix}.enc{s}.conv1.w"));
        let (d_conv0_post, d_w1, d_b1) = conv3x3_backward(&stage.conv0_post, w1, &d_conv1_pre)?;
        grads.add(params.index_of(&format!("{prefix}.enc{s}.conv1.w")), d_w1);
        grads.add_vec(params.index_of(&format!("{prefix}.enc{s}.conv1.b")), d_b1);
        let d_conv0_pre = relu_backward(&stage.conv0_pre, &d_conv0_post);
        let w0 = params.get(&format!("{prefix}.enc{s}.conv0.w"));
        let (d_input, d_w0, d_b0) = conv3x3_backward(&stage.input, w0, &d_conv0_pre)?;
        grads.add(params.index_of(&format!("{prefix}.enc{s}.conv0.w")), d_w0);
        grads.add_vec(params.index_of(&format!("{prefix}.enc{s}.conv0.b")), d_b0);
        d_x = d_input;
    }
    Ok(d_pre)
}

/// Input gradient of the full-extent convolution without building the
/// kernel gradient.
fn final_conv_input_grad(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &[f64],
) -> Result<Tensor, NetError> {
    let n = input.len();
    let mut grad_in = Tensor::zeros(input.dims());
    for (o, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let krow = &kernels.data()[o * n..(o + 1) * n];
        for (gi, k) in grad_in.data_mut().iter_mut().zip(krow) {
            *gi += g * k;
        }
    }
    Ok(grad_in)
}

/// grad_k[o, ...] += grad_out[o] * input, flattened.
fn final_conv_kernel_grad_into(acc: &mut Tensor, input: &Tensor, grad_out: &[f64]) {
    let n = input.len();
    for (o, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &mut acc.data_mut()[o * n..(o + 1) * n];
        for (a, x) in row.iter_mut().zip(input.data()) {
            *a += g * x;
        }
    }
}

struct MlpCache {
    // Per layer: input row and pre-activation row.
    layers: Vec<(Tensor, Tensor)>,
}

fn mlp_forward(
    params: &NetworkParams,
    meta: &[f64],
) -> Result<(Vec<f64>, MlpCache), NetError> {
    let mut x = Tensor::from_vec(&[1, meta.len()], meta.to_vec());
    let mut layers = Vec::new();
    let mut layer = 0;
    loop {
        let wname = format!("mlp.fc{layer}.w");
        if !params.has(&wname) {
            break;
        }
        let w = params.get(&wname);
        let b = params.get(&format!("mlp.fc{layer}.b"));
        let pre = dense_forward(&x, w, b.data())?;
        let post = relu_forward(&pre);
        layers.push((x, pre));
        x = post;
        layer += 1;
    }
    Ok((x.data().to_vec(), MlpCache { layers }))
}

fn mlp_backward(
    params: &NetworkParams,
    cache: &MlpCache,
    d_out: &[f64],
    grads: &mut SparseGrads,
) -> Result<(), NetError> {
    let mut d_x = Tensor::from_vec(&[1, d_out.len()], d_out.to_vec());
    for layer in (0..cache.layers.len()).rev() {
        let (input, pre) = &cache.layers[layer];
        let d_pre = relu_backward(pre, &d_x);
        let w = params.get(&format!("mlp.fc{layer}.w"));
        let (d_input, d_w, d_b) = dense_backward(input, w, &d_pre)?;
        grads.add(params.index_of(&format!("mlp.fc{layer}.w")), d_w);
        grads.add_vec(params.index_of(&format!("mlp.fc{layer}.b")), d_b);
        d_x = d_input;
    }
    Ok(())
}

/// Per-sample gradient contributions, stored only for touched tensors.
#[derive(Default)]
struct SparseGrads {
    entries: Vec<(usize, Tensor)>,
}

impl SparseGrads {
    fn add(&mut self, index: usize, grad: Tensor) {
        match self.entries.iter_mut().find(|(i, _)| *i == index) {
            Some((_, acc)) => acc.add_scaled(&grad, 1.0),
            None => self.entries.push((index, grad)),
        }
    }

    fn add_vec(&mut self, index: usize, grad: Vec<f64>) {
        let dims = [grad.len()];
        self.add(index, Tensor::from_vec(&dims, grad));
    }

    fn merge_into(self, grads: &mut [Tensor]) {
        for (index, g) in self.entries {
            grads[index].add_scaled(&g, 1.0);
        }
    }
}

// ---------------------------------------------------------------------------
// Head.
// ---------------------------------------------------------------------------

const HEAD_LAYERS: usize = 4;

/// Activation per head layer: ReLU on the first two, Sigmoid on the last two.
fn head_activation(layer: usize) -> bool {
    layer < 2
}

struct HeadLayerCache {
    input: Tensor,
    bn: BnCache,
    bn_out: Tensor,
    act_out: Tensor,
}

fn head_forward_train(
    params: &mut NetworkParams,
    fusion: Tensor,
) -> Result<(Tensor, Vec<HeadLayerCache>), NetError> {
    let mut caches = Vec::with_capacity(HEAD_LAYERS);
    let mut x = fusion;
    for layer in 0..HEAD_LAYERS {
        let w_idx = params.index_of(&format!("head.fc{layer}.w"));
        let b_idx = params.index_of(&format!("head.fc{layer}.b"));
        let gamma_idx = params.index_of(&format!("head.bn{layer}.gamma"));
        let beta_idx = params.index_of(&format!("head.bn{layer}.beta"));
        let rmean_idx = params.index_of(&format!("head.bn{layer}.rmean"));
        let rvar_idx = params.index_of(&format!("head.bn{layer}.rvar"));
        let affine = dense_forward(
            &x,
            &params.tensors[w_idx].tensor,
            params.tensors[b_idx].tensor.data(),
        )?;
        let gamma = params.tensors[gamma_idx].tensor.data().to_vec();
        let beta = params.tensors[beta_idx].tensor.data().to_vec();
        // Running statistics update in place.
        let (rmean_idx, rvar_idx) = (rmean_idx, rvar_idx);
        let mut rmean = params.tensors[rmean_idx].tensor.clone();
        let mut rvar = params.tensors[rvar_idx].tensor.clone();
        let (bn_out, bn) =
            batchnorm_forward_train(&affine, &gamma, &beta, rmean.data_mut(), rvar.data_mut())?;
        params.tensors[rmean_idx].tensor = rmean;
        params.tensors[rvar_idx].tensor = rvar;
        let act_out = if head_activation(layer) {
            relu_forward(&bn_out)
        } else {
            sigmoid_forward(&bn_out)
        };
        caches.push(HeadLayerCache {
            input: x,
            bn,
            bn_out,
            act_out: act_out.clone(),
        });
        x = act_out;
    }
    Ok((x, caches))
}

fn head_forward_eval(params: &NetworkParams, fusion: Tensor) -> Result<Tensor, NetError> {
    let mut x = fusion;
    for layer in 0..HEAD_LAYERS {
        let w = params.get(&format!("head.fc{layer}.w"));
        let b = params.get(&format!("head.fc{layer}.b"));
        let gamma = params.get(&format!("head.bn{layer}.gamma"));
        let beta = params.get(&format!("head.bn{layer}.beta"));
        let rmean = params.get(&format!("head.bn{layer}.rmean"));
        let rvar = params.get(&format!("head.bn{layer}.rvar"));
        let affine = dense_forward(&x, w, b.data())?;
        let bn_out = batchnorm_forward_eval(
            &affine,
            gamma.data(),
            beta.data(),
            rmean.data(),
            rvar.data(),
        )?;
        x = if head_activation(layer) {
            relu_forward(&bn_out)
        } else {
            sigmoid_forward(&bn_out)
        };
    }
    Ok(x)
}

fn head_backward(
    params: &NetworkParams,
    caches: &[HeadLayerCache],
    d_out: Tensor,
    grads: &mut [Tensor],
) -> Result<Tensor, NetError> {
    let mut d_x = d_out;
    for layer in (0..HEAD_LAYERS).rev() {
        let cache = &caches[layer];
        let d_bn_out = if head_activation(layer) {
            relu_backward(&cache.bn_out, &d_x)
        } else {
            sigmoid_backward(&cache.act_out, &d_x)
        };
        let gamma = params.get(&format!("head.bn{layer}.gamma"));
        let (d_affine, d_gamma, d_beta) = batchnorm_backward(&d_bn_out, gamma.data(), &cache.bn);
        add_into(&mut grads[params.index_of(&format!("head.bn{layer}.gamma"))], &d_gamma);
        add_into(&mut grads[params.index_of(&format!("head.bn{layer}.beta"))], &d_beta);
        let w = params.get(&format!("head.fc{layer}.w"));
        let (d_input, d_w, d_b) = dense_backward(&cache.input, w, &d_affine)?;
        grads[params.index_of(&format!("head.fc{layer}.w"))].add_scaled(&d_w, 1.0);
        add_into(&mut grads[params.index_of(&format!("head.fc{layer}.b"))], &d_b);
        d_x = d_input;
    }
    Ok(d_x)
}

fn add_into(acc: &mut Tensor, values: &[f64]) {
    for (a, v) in acc.data_mut().iter_mut().zip(values) {
        *a += v;
    }
}

// ---------------------------------------------------------------------------
// Full forward (inference) and prediction.
// ---------------------------------------------------------------------------

fn check_sample_dims(arch: &ArchitectureConfig, sample: &TrainSample) -> Result<(), NetError> {
    if sample.sax.dims() != [arch.sax_slices, arch.sax_size, arch.sax_size] {
        return Err(NetError::Dim { context: "SAX input" });
    }
    if sample.lax.dims() != [1, arch.lax_size, arch.lax_size] {
        return Err(NetError::Dim { context: "LAX input" });
    }
    if arch.use_metadata && sample.meta.len() != arch.meta_inputs {
        return Err(NetError::Dim { context: "metadata input" });
    }
    Ok(())
}

fn fuse(arch: &ArchitectureConfig, sax: &[f64], lax: &[f64], meta: &[f64]) -> Vec<f64> {
    let mut fusion = Vec::with_capacity(arch.fusion_size());
    fusion.extend_from_slice(sax);
    fusion.extend_from_slice(lax);
    if arch.use_metadata {
        fusion.extend_from_slice(meta);
    }
    fusion
}

/// Inference forward pass (batch-norm in eval mode). Outputs are strictly
/// inside (0,1) by the sigmoid head.
pub fn forward(
    params: &NetworkParams,
    arch: &ArchitectureConfig,
    sample: &TrainSample,
) -> Result<PredictedParams, NetError> {
    check_sample_dims(arch, sample)?;
    let (sax_feat, _) = encoder_forward(params, "sax", &arch.sax_channels, &sample.sax)?;
    let (lax_feat, _) = encoder_forward(params, "lax", &arch.lax_channels, &sample.lax)?;
    let meta_feat = if arch.use_metadata {
        mlp_forward(params, &sample.meta)?.0
    } else {
        Vec::new()
    };
    let fusion = fuse(arch, &sax_feat, &lax_feat, &meta_feat);
    let out = head_forward_eval(params, Tensor::from_vec(&[1, fusion.len()], fusion))?;
    Ok(PredictedParams {
        values: out.data().to_vec(),
    })
}

/// Mean weighted loss of a sample set under the current parameters
/// (inference mode).
pub fn mean_loss(
    params: &NetworkParams,
    arch: &ArchitectureConfig,
    samples: &[TrainSample],
) -> Result<f64, NetError> {
    if samples.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let reference = s
            .reference
            .as_ref()
            .ok_or(NetError::MissingReference { index: i })?;
        let p = forward(params, arch, s)?;
        total += weighted_loss(&p.values, reference)?;
    }
    Ok(total / samples.len() as f64)
}

/// Full shape prediction: network output, unit decoding, clamping, linear
/// synthesis, and mesh reconstruction on the template topology.
pub fn predict_shape(
    params: &NetworkParams,
    arch: &ArchitectureConfig,
    sample: &TrainSample,
    pdm: &PointDistributionModel,
    template: &BiventricularShape,
) -> Result<BiventricularShape, NetError> {
    if pdm.mode_count() < arch.mode_count {
        return Err(NetError::Dim { context: "model has fewer modes than the head" });
    }
    let predicted = forward(params, arch, sample)?;
    let b = pdm.decode_unit(&predicted.values)?;
    let clamped = pdm.clamp(&b);
    let shape_vec = pdm.synthesize(&clamped)?;
    Ok(BiventricularShape::from_vector(&shape_vec, template)?)
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 10,
            iterations: 50_000,
            seed: 0,
        }
    }
}

/// Maps independent per-sample jobs to results in index order. The serial
/// implementation lives here; a thread-pool implementation must preserve
/// the output ordering so training stays bit-identical.
pub trait BatchMap {
    fn run<T: Send>(&self, jobs: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T>;
}

pub struct SerialMap;

impl BatchMap for SerialMap {
    fn run<T: Send>(&self, jobs: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        (0..jobs).map(f).collect()
    }
}

struct SampleForward {
    sax: Result<(Vec<f64>, EncoderCache), NetError>,
    lax: Result<(Vec<f64>, EncoderCache), NetError>,
    mlp: Result<Option<(Vec<f64>, MlpCache)>, NetError>,
}

struct SampleBackward {
    grads: SparseGrads,
    d_sax_pre: Vec<f64>,
    d_lax_pre: Vec<f64>,
}

/// Batch loss and full gradient set in train mode. Per-sample encoder work
/// runs through the mapper; results are reduced in sample order so the
/// gradients do not depend on the thread count. Updates the head's running
/// statistics as a side effect.
pub fn batch_gradients<M: BatchMap>(
    params: &mut NetworkParams,
    arch: &ArchitectureConfig,
    batch: &[&TrainSample],
    mapper: &M,
) -> Result<(f64, Vec<Tensor>), NetError> {
    let b = batch.len();
    let f = arch.fusion_size();

    // Phase 1: encoder forwards, parallel over samples.
    let fwd: Vec<SampleForward> = {
        let params_ref: &NetworkParams = params;
        mapper.run(b, &|i| {
            let sample = batch[i];
            SampleForward {
                sax: encoder_forward(params_ref, "sax", &arch.sax_channels, &sample.sax),
                lax: encoder_forward(params_ref, "lax", &arch.lax_channels, &sample.lax),
                mlp: if arch.use_metadata {
                    mlp_forward(params_ref, &sample.meta).map(Some)
                } else {
                    Ok(None)
                },
            }
        })
    };
    let mut sax_caches = Vec::with_capacity(b);
    let mut lax_caches = Vec::with_capacity(b);
    let mut mlp_caches = Vec::with_capacity(b);
    let mut fusion = Tensor::zeros(&[b, f]);
    for (i, s) in fwd.into_iter().enumerate() {
        let (sax_feat, sax_cache) = s.sax?;
        let (lax_feat, lax_cache) = s.lax?;
        let mlp = s.mlp?;
        let meta_feat = mlp.as_ref().map(|m| m.0.clone()).unwrap_or_default();
        let row = fuse(arch, &sax_feat, &lax_feat, &meta_feat);
        fusion.data_mut()[i * f..(i + 1) * f].copy_from_slice(&row);
        sax_caches.push(sax_cache);
        lax_caches.push(lax_cache);
        mlp_caches.push(mlp.map(|m| m.1));
    }

    // Phase 2: head forward in train mode (updates running stats), the
    // weighted loss with mean batch reduction, head backward.
    let (out, head_caches) = head_forward_train(params, fusion)?;
    let k = arch.mode_count;
    let mut loss = 0.0;
    let mut d_out = Tensor::zeros(out.dims());
    for (i, sample) in batch.iter().enumerate() {
        let reference = sample
            .reference
            .as_ref()
            .ok_or(NetError::MissingReference { index: i })?;
        if reference.len() != k {
            return Err(NetError::ReferenceLength {
                index: i,
                got: reference.len(),
                expected: k,
            });
        }
        for (m, &r) in reference.iter().enumerate() {
            let p = out.data()[i * k + m];
            let w = mode_weight(m + 1, k);
            loss += (p - r).abs() * w;
            let sign = if p > r {
                1.0
            } else if p < r {
                -1.0
            } else {
                0.0
            };
            d_out.data_mut()[i * k + m] = sign * w / b as f64;
        }
    }
    loss /= b as f64;

    let mut grads = params.zero_grads();
    let d_fusion = head_backward(params, &head_caches, d_out, &mut grads)?;

    // Phase 3: encoder backwards, parallel over samples, reduced in order.
    // The heavyweight final-convolution kernel gradients are built during
    // the reduction as outer products against the cached final inputs.
    let per_sample: Vec<Result<SampleBackward, NetError>> = {
        let params_ref: &NetworkParams = params;
        let d_fusion_ref = &d_fusion;
        let sax_ref = &sax_caches;
        let lax_ref = &lax_caches;
        let mlp_ref = &mlp_caches;
        mapper.run(b, &|i| {
            let row = &d_fusion_ref.data()[i * f..(i + 1) * f];
            let mut local = SparseGrads::default();
            let sax_d = &row[..arch.sax_features];
            let lax_d = &row[arch.sax_features..arch.sax_features + arch.lax_features];
            let d_sax_pre =
                encoder_backward(params_ref, "sax", &arch.sax_channels, &sax_ref[i], sax_d, &mut local)?;
            let d_lax_pre =
                encoder_backward(params_ref, "lax", &arch.lax_channels, &lax_ref[i], lax_d, &mut local)?;
            if let Some(mlp_cache) = &mlp_ref[i] {
                let meta_d = &row[arch.sax_features + arch.lax_features..];
                mlp_backward(params_ref, mlp_cache, meta_d, &mut local)?;
            }
            Ok(SampleBackward {
                grads: local,
                d_sax_pre,
                d_lax_pre,
            })
        })
    };
    let sax_final = params.index_of("sax.final.w");
    let lax_final = params.index_of("lax.final.w");
    for (i, s) in per_sample.into_iter().enumerate() {
        let s = s?;
        s.grads.merge_into(&mut grads);
        final_conv_kernel_grad_into(&mut grads[sax_final], &sax_caches[i].final_input, &s.d_sax_pre);
        final_conv_kernel_grad_into(&mut grads[lax_final], &lax_caches[i].final_input, &s.d_lax_pre);
    }
    Ok((loss, grads))
}

/// One optimizer step over a batch; returns the batch loss.
fn train_step<M: BatchMap>(
    params: &mut NetworkParams,
    adam: &mut AdamState,
    arch: &ArchitectureConfig,
    batch: &[&TrainSample],
    mapper: &M,
) -> Result<f64, NetError> {
    let (loss, grads) = batch_gradients(params, arch, batch, mapper)?;
    adam.step(&mut params.tensors, &grads)?;
    Ok(loss)
}

/// Trains the network with seeded-shuffle mini-batches.
///
/// One iteration is one Adam step on one batch; epochs reshuffle the sample
/// order and partial trailing batches are dropped. The observer sees every
/// iteration and the current parameters (for loss logs and checkpoints).
pub fn train<M: BatchMap>(
    dataset: &[TrainSample],
    arch: &ArchitectureConfig,
    tc: &TrainConfig,
    mapper: &M,
    observer: &mut dyn FnMut(usize, f64, &NetworkParams),
) -> Result<NetworkParams, NetError> {
    arch.validate()?;
    if dataset.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    if dataset.len() < tc.batch_size {
        return Err(NetError::DatasetSmallerThanBatch {
            dataset: dataset.len(),
            batch: tc.batch_size,
        });
    }
    for (i, s) in dataset.iter().enumerate() {
        check_sample_dims(arch, s)?;
        match &s.reference {
            None => return Err(NetError::MissingReference { index: i }),
            Some(r) if r.len() != arch.mode_count => {
                return Err(NetError::ReferenceLength {
                    index: i,
                    got: r.len(),
                    expected: arch.mode_count,
                })
            }
            _ => {}
        }
    }

    let mut params = NetworkParams::init(arch, tc.seed)?;
    let mut adam = AdamState::new(&params.tensors, tc.learning_rate);
    let mut shuffle_rng = Rng::derive(tc.seed, 0);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    shuffle_rng.shuffle(&mut order);
    let mut cursor = 0usize;
    for iteration in 1..=tc.iterations {
        if cursor + tc.batch_size > order.len() {
            shuffle_rng.shuffle(&mut order);
            cursor = 0;
        }
        let batch: Vec<&TrainSample> = order[cursor..cursor + tc.batch_size]
            .iter()
            .map(|&i| &dataset[i])
            .collect();
        cursor += tc.batch_size;
        let loss = train_step(&mut params, &mut adam, arch, &batch, mapper)?;
        observer(iteration, loss, &params);
    }
    Ok(params)
}
