//! Runtime oracle suite behind `ventric verify`.
//!
//! Each check recomputes its expected values through an independent route
//! (explicit double loops, central finite differences, exhaustive scans,
//! analytic solids) and compares the production path against it. The
//! acceptance test suite drives the same functions.

#![allow(clippy::needless_range_loop)]

use std::time::Instant;

use ventric_core::align::residual;
use ventric_core::mesh::primitives::{icosphere, unit_cube, uv_ellipsoid};
use ventric_core::mesh::{Mesh, ShapeVector, MM3_PER_ML};
use ventric_core::metrics::{
    dice, directed_vertex_distances, point_triangle_distance_sq, surface_distances, voxelize,
    GridFrame,
};
use ventric_core::nalgebra::{DMatrix, Point3, Vector3};
use ventric_core::net::{
    batch_gradients, mode_weight, weighted_loss, ArchitectureConfig, NetworkParams, SerialMap,
    TrainSample,
};
use ventric_core::nn::Tensor;
use ventric_core::pdm::{PointDistributionModel, DEFAULT_BETA};
use ventric_core::rng::Rng;

pub type Check = (&'static str, fn() -> Result<(), String>);

/// Every oracle check, in reporting order.
pub fn all_checks() -> Vec<Check> {
    vec![
        ("mean and covariance vs brute force", check_mean_covariance),
        ("projection round trip", check_projection_round_trip),
        ("loss weighting values", check_loss_values),
        ("layer gradients vs finite differences", check_layer_gradients),
        ("composed network gradients", check_composed_gradients),
        ("point drift self and warp recovery", check_cpd),
        ("dice voxel oracles", check_dice),
        ("surface distances vs exhaustive scan", check_surface_distances),
        ("sphere volume", check_sphere_volume),
    ]
}

/// Runs every check, printing one line each; returns the failure count.
pub fn run_all() -> usize {
    let mut failures = 0;
    for (name, check) in all_checks() {
        let start = Instant::now();
        match check() {
            Ok(()) => {
                eprintln!("[verify] PASS {name} ({:.2?})", start.elapsed());
            }
            Err(msg) => {
                eprintln!("[verify] FAIL {name}: {msg}");
                failures += 1;
            }
        }
    }
    failures
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Mean and covariance of a 5-shape, 4-point cohort against an explicit
/// double-loop computation with 1/(M-1) normalization, to 1e-12.
pub fn check_mean_covariance() -> Result<(), String> {
    let mut rng = Rng::new(2024);
    let m = 5;
    let dim = 12;
    let cohort: Vec<ShapeVector> = (0..m)
        .map(|_| ShapeVector::new((0..dim).map(|_| rng.normal() * 4.0).collect()))
        .collect();
    let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA)
        .map_err(|e| e.to_string())?;

    let mut mean = vec![0.0; dim];
    for s in &cohort {
        for (acc, v) in mean.iter_mut().zip(s.coords()) {
            *acc += v;
        }
    }
    for acc in mean.iter_mut() {
        *acc /= m as f64;
    }
    for (a, b) in mean.iter().zip(model.mean_shape().coords()) {
        ensure((a - b).abs() < 1e-12, format!("mean entry {a} vs {b}"))?;
    }

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for s in &cohort {
        for r in 0..dim {
            for c in 0..dim {
                cov[(r, c)] +=
                    (s.coords()[r] - mean[r]) * (s.coords()[c] - mean[c]) / (m as f64 - 1.0);
            }
        }
    }
    // Full-rank model reproduces the rank-(M-1) covariance exactly.
    let mut rebuilt = DMatrix::<f64>::zeros(dim, dim);
    for j in 0..model.mode_count() {
        let col = model.mode(j);
        for r in 0..dim {
            for c in 0..dim {
                rebuilt[(r, c)] += model.eigenvalues()[j] * col[r] * col[c];
            }
        }
    }
    for r in 0..dim {
        for c in 0..dim {
            ensure(
                (rebuilt[(r, c)] - cov[(r, c)]).abs() < 1e-12,
                format!("covariance ({r},{c}): {} vs {}", rebuilt[(r, c)], cov[(r, c)]),
            )?;
        }
    }
    Ok(())
}

/// Full-rank synthesize(project(s)) reproduces every training shape within
/// 1e-8 relative; project(mean) vanishes to 1e-12.
pub fn check_projection_round_trip() -> Result<(), String> {
    let mut rng = Rng::new(31337);
    let cohort: Vec<ShapeVector> = (0..6)
        .map(|_| ShapeVector::new((0..18).map(|_| rng.normal() * 7.0).collect()))
        .collect();
    let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA)
        .map_err(|e| e.to_string())?;
    for (i, s) in cohort.iter().enumerate() {
        let recon = model
            .synthesize(&model.project(s).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let err = residual(&recon, s).sqrt();
        let norm = s.coords().iter().map(|v| v * v).sum::<f64>().sqrt();
        ensure(
            err <= 1e-8 * norm,
            format!("shape {i}: reconstruction error {err:e} vs norm {norm:e}"),
        )?;
    }
    let b = model.project(model.mean_shape()).map_err(|e| e.to_string())?;
    for (i, v) in b.0.iter().enumerate() {
        ensure(v.abs() < 1e-12, format!("project(mean)[{i}] = {v:e}"))?;
    }
    Ok(())
}

/// Weight formula values and the k=4 all-unit-error loss.
pub fn check_loss_values() -> Result<(), String> {
    for k in [1, 4, 28] {
        ensure(
            (mode_weight(1, k) - 1.0).abs() < 1e-15,
            format!("w(1,{k}) != 1"),
        )?;
    }
    let w28 = mode_weight(28, 28);
    let expect = (1.0_f64 / 28.0).sqrt();
    ensure(
        (w28 - expect).abs() < 1e-12,
        format!("w(28,28) = {w28}, expected {expect}"),
    )?;
    let loss = weighted_loss(&[1.0; 4], &[0.0; 4]).map_err(|e| e.to_string())?;
    let expect = 1.0 + 0.75_f64.sqrt() + 0.5_f64.sqrt() + 0.25_f64.sqrt();
    ensure(
        (loss - expect).abs() < 1e-12,
        format!("k=4 unit-error loss {loss} vs {expect}"),
    )?;
    for k in [4, 28] {
        for i in 1..k {
            ensure(
                mode_weight(i, k) > mode_weight(i + 1, k),
                format!("weights not strictly decreasing at i={i}, k={k}"),
            )?;
        }
    }
    Ok(())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

const FD_H: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

/// Per-layer central finite differences for the convolution, dense layer,
/// batch normalization, and the pooled/sigmoid/final-conv composite.
pub fn check_layer_gradients() -> Result<(), String> {
    use ventric_core::nn::*;

    let mut rng = Rng::new(404);
    let rand_tensor = |rng: &mut Rng, dims: &[usize]| {
        let mut t = Tensor::zeros(dims);
        for v in t.data_mut() {
            *v = rng.normal();
        }
        t
    };

    // Convolution.
    {
        let input = rand_tensor(&mut rng, &[2, 4, 4]);
        let kernels = rand_tensor(&mut rng, &[3, 2, 3, 3]);
        let bias = [0.2, -0.4, 0.1];
        let targets: Vec<f64> = (0..48).map(|_| rng.normal()).collect();
        let loss = |x: &Tensor, k: &Tensor, b: &[f64]| -> f64 {
            let out = conv3x3_forward(x, k, b).unwrap();
            out.data()
                .iter()
                .zip(&targets)
                .map(|(o, t)| (o - t) * (o - t))
                .sum()
        };
        let out = conv3x3_forward(&input, &kernels, &bias).unwrap();
        let mut gout = Tensor::zeros(out.dims());
        for i in 0..out.len() {
            gout.data_mut()[i] = 2.0 * (out.data()[i] - targets[i]);
        }
        let (gin, gk, gb) = conv3x3_backward(&input, &kernels, &gout).unwrap();
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus.data_mut()[i] += FD_H;
            let mut minus = input.clone();
            minus.data_mut()[i] -= FD_H;
            let num = (loss(&plus, &kernels, &bias) - loss(&minus, &kernels, &bias)) / (2.0 * FD_H);
            ensure(
                rel_err(num, gin.data()[i]) < FD_TOL,
                format!("conv input grad {i}: {num} vs {}", gin.data()[i]),
            )?;
        }
        for i in 0..kernels.len() {
            let mut plus = kernels.clone();
            plus.data_mut()[i] += FD_H;
            let mut minus = kernels.clone();
            minus.data_mut()[i] -= FD_H;
            let num = (loss(&input, &plus, &bias) - loss(&input, &minus, &bias)) / (2.0 * FD_H);
            ensure(
                rel_err(num, gk.data()[i]) < FD_TOL,
                format!("conv kernel grad {i}"),
            )?;
        }
        for i in 0..bias.len() {
            let mut plus = bias;
            plus[i] += FD_H;
            let mut minus = bias;
            minus[i] -= FD_H;
            let num = (loss(&input, &kernels, &plus) - loss(&input, &kernels, &minus)) / (2.0 * FD_H);
            ensure(rel_err(num, gb[i]) < FD_TOL, format!("conv bias grad {i}"))?;
        }
    }

    // Dense.
    {
        let input = rand_tensor(&mut rng, &[3, 5]);
        let weights = rand_tensor(&mut rng, &[4, 5]);
        let bias: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let targets: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let loss = |x: &Tensor, w: &Tensor, b: &[f64]| -> f64 {
            dense_forward(x, w, b)
                .unwrap()
                .data()
                .iter()
                .zip(&targets)
                .map(|(o, t)| (o - t) * (o - t))
                .sum()
        };
        let out = dense_forward(&input, &weights, &bias).unwrap();
        let mut gout = Tensor::zeros(out.dims());
        for i in 0..out.len() {
            gout.data_mut()[i] = 2.0 * (out.data()[i] - targets[i]);
        }
        let (_, gw, _) = dense_backward(&input, &weights, &gout).unwrap();
        for i in 0..weights.len() {
            let mut plus = weights.clone();
            plus.data_mut()[i] += FD_H;
            let mut minus = weights.clone();
            minus.data_mut()[i] -= FD_H;
            let num = (loss(&input, &plus, &bias) - loss(&input, &minus, &bias)) / (2.0 * FD_H);
            ensure(
                rel_err(num, gw.data()[i]) < FD_TOL,
                format!("dense weight grad {i}"),
            )?;
        }
    }

    // Batch normalization.
    {
        let input = rand_tensor(&mut rng, &[5, 4]);
        let gamma: Vec<f64> = (0..4).map(|_| 1.0 + 0.2 * rng.normal()).collect();
        let beta: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let targets: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
        let loss = |x: &Tensor, g: &[f64], b: &[f64]| -> f64 {
            let mut rm = vec![0.0; 4];
            let mut rv = vec![1.0; 4];
            let (y, _) = batchnorm_forward_train(x, g, b, &mut rm, &mut rv).unwrap();
            y.data()
                .iter()
                .zip(&targets)
                .map(|(o, t)| (o - t) * (o - t))
                .sum()
        };
        let mut rm = vec![0.0; 4];
        let mut rv = vec![1.0; 4];
        let (y, cache) = batchnorm_forward_train(&input, &gamma, &beta, &mut rm, &mut rv).unwrap();
        let mut gout = Tensor::zeros(y.dims());
        for i in 0..y.len() {
            gout.data_mut()[i] = 2.0 * (y.data()[i] - targets[i]);
        }
        let (gin, dgamma, _) = batchnorm_backward(&gout, &gamma, &cache);
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus.data_mut()[i] += FD_H;
            let mut minus = input.clone();
            minus.data_mut()[i] -= FD_H;
            let num = (loss(&plus, &gamma, &beta) - loss(&minus, &gamma, &beta)) / (2.0 * FD_H);
            ensure(
                rel_err(num, gin.data()[i]) < FD_TOL,
                format!("batchnorm input grad {i}"),
            )?;
        }
        for i in 0..gamma.len() {
            let mut plus = gamma.clone();
            plus[i] += FD_H;
            let mut minus = gamma.clone();
            minus[i] -= FD_H;
            let num = (loss(&input, &plus, &beta) - loss(&input, &minus, &beta)) / (2.0 * FD_H);
            ensure(
                rel_err(num, dgamma[i]) < FD_TOL,
                format!("batchnorm gamma grad {i}"),
            )?;
        }
    }

    // ReLU / max-pool / sigmoid / full-extent convolution composite.
    {
        let input = rand_tensor(&mut rng, &[2, 4, 4]);
        let kernels = rand_tensor(&mut rng, &[3, 2, 2, 2]);
        let targets: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let forward = |x: &Tensor, k: &Tensor| {
            let a = relu_forward(x);
            let (p, argmax) = maxpool2_forward(&a).unwrap();
            let s = sigmoid_forward(&p);
            let out = final_conv_full_forward(&s, k).unwrap();
            (out, a, argmax, s)
        };
        let loss = |x: &Tensor, k: &Tensor| -> f64 {
            forward(x, k)
                .0
                .iter()
                .zip(&targets)
                .map(|(o, t)| (o - t) * (o - t))
                .sum()
        };
        let (out, a, argmax, s) = forward(&input, &kernels);
        let gout: Vec<f64> = out
            .iter()
            .zip(&targets)
            .map(|(o, t)| 2.0 * (o - t))
            .collect();
        let (gs, gk) = final_conv_full_backward(&s, &kernels, &gout).unwrap();
        let gp = sigmoid_backward(&s, &gs);
        let ga = maxpool2_backward(&gp, &argmax, a.dims());
        let gin = relu_backward(&input, &ga);
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus.data_mut()[i] += FD_H;
            let mut minus = input.clone();
            minus.data_mut()[i] -= FD_H;
            let num = (loss(&plus, &kernels) - loss(&minus, &kernels)) / (2.0 * FD_H);
            if num.abs() < 1e-10 && gin.data()[i].abs() < 1e-10 {
                continue;
            }
            ensure(
                rel_err(num, gin.data()[i]) < FD_TOL,
                format!("composite input grad {i}"),
            )?;
        }
        for i in 0..kernels.len() {
            let mut plus = kernels.clone();
            plus.data_mut()[i] += FD_H;
            let mut minus = kernels.clone();
            minus.data_mut()[i] -= FD_H;
            let num = (loss(&input, &plus) - loss(&input, &minus)) / (2.0 * FD_H);
            ensure(
                rel_err(num, gk.data()[i]) < FD_TOL,
                format!("composite kernel grad {i}"),
            )?;
        }
    }
    Ok(())
}

fn toy_sample(rng: &mut Rng, arch: &ArchitectureConfig) -> TrainSample {
    let mut sax = Tensor::zeros(&[arch.sax_slices, arch.sax_size, arch.sax_size]);
    for v in sax.data_mut() {
        *v = rng.uniform();
    }
    let mut lax = Tensor::zeros(&[1, arch.lax_size, arch.lax_size]);
    for v in lax.data_mut() {
        *v = rng.uniform();
    }
    TrainSample {
        sax,
        lax,
        meta: (0..arch.meta_inputs).map(|_| rng.uniform()).collect(),
        reference: Some((0..arch.mode_count).map(|_| rng.uniform()).collect()),
    }
}

/// Finite-difference check of the fully composed toy network (16x16
/// inputs, k = 4), probing fixed entries of every trainable tensor.
pub fn check_composed_gradients() -> Result<(), String> {
    let arch = ArchitectureConfig::toy(4);
    let mut rng = Rng::new(1818);
    let dataset: Vec<TrainSample> = (0..3).map(|_| toy_sample(&mut rng, &arch)).collect();
    let batch: Vec<&TrainSample> = dataset.iter().collect();
    let mut params = NetworkParams::init(&arch, 2121).map_err(|e| e.to_string())?;
    // Move off the exact ReLU kinks the zero-bias initialization creates.
    let mut jitter = Rng::new(8);
    for t in params.tensors.iter_mut() {
        if t.trainable {
            for v in t.tensor.data_mut() {
                *v += jitter.uniform_in(-0.05, 0.05);
            }
        }
    }
    let loss_of = |p: &NetworkParams| -> f64 {
        let mut p = p.clone();
        batch_gradients(&mut p, &arch, &batch, &SerialMap).unwrap().0
    };
    let mut p0 = params.clone();
    let (_, grads) = batch_gradients(&mut p0, &arch, &batch, &SerialMap).map_err(|e| e.to_string())?;
    let mut checked = 0usize;
    for (ti, t) in params.tensors.iter().enumerate() {
        if !t.trainable {
            continue;
        }
        let len = t.tensor.len();
        for &pi in &[0, len / 2, len - 1] {
            let mut plus = params.clone();
            plus.tensors[ti].tensor.data_mut()[pi] += FD_H;
            let mut minus = params.clone();
            minus.tensors[ti].tensor.data_mut()[pi] -= FD_H;
            let num = (loss_of(&plus) - loss_of(&minus)) / (2.0 * FD_H);
            let ana = grads[ti].data()[pi];
            if num.abs() < 1e-10 && ana.abs() < 1e-10 {
                continue;
            }
            ensure(
                rel_err(num, ana) < FD_TOL,
                format!("{} [{pi}]: numeric {num:e} vs analytic {ana:e}", t.name),
            )?;
            checked += 1;
        }
    }
    ensure(checked > 40, format!("only {checked} entries checked"))?;
    Ok(())
}

/// Self-registration displacement, sinusoidal warp recovery on a 200-point
/// grid, and EM objective monotonicity.
pub fn check_cpd() -> Result<(), String> {
    use ventric_core::cpd::{register_nonrigid, CpdConfig};

    let mut template = Vec::new();
    for i in 0..20 {
        for j in 0..10 {
            template.push(Point3::new(i as f64 * 4.0, j as f64 * 4.0, 0.0));
        }
    }
    let config = CpdConfig::default();

    let self_fit = register_nonrigid(&template, &template, &config).map_err(|e| e.to_string())?;
    let max_move = template
        .iter()
        .zip(&self_fit.deformed_template)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0_f64, f64::max);
    ensure(max_move < 1e-6, format!("self-registration moved {max_move} mm"))?;

    let warped: Vec<Point3<f64>> = template
        .iter()
        .map(|p| {
            Point3::new(
                p.x,
                p.y,
                p.z + 2.0 * (p.x / 15.0).sin() * (p.y / 20.0).cos(),
            )
        })
        .collect();
    let fit = register_nonrigid(&template, &warped, &config).map_err(|e| e.to_string())?;
    let rms = (fit
        .deformed_template
        .iter()
        .zip(&warped)
        .map(|(p, q)| (p - q).norm_squared())
        .sum::<f64>()
        / template.len() as f64)
        .sqrt();
    ensure(rms < 0.1, format!("warp recovery RMS {rms} mm"))?;
    for w in fit.objective_trace.windows(2) {
        ensure(
            w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()),
            format!("objective increased {} -> {}", w[0], w[1]),
        )?;
    }
    Ok(())
}

fn translated(mesh: &Mesh, d: Vector3<f64>) -> Mesh {
    mesh.with_vertices(mesh.vertices().iter().map(|p| p + d).collect())
        .unwrap()
}

/// Dice identity/disjoint/half-overlap against brute-force voxel counts.
pub fn check_dice() -> Result<(), String> {
    let cube = unit_cube();
    let frame = GridFrame::covering(&cube, &cube, 0.25).map_err(|e| e.to_string())?;
    let grid = voxelize(&cube, &frame).map_err(|e| e.to_string())?;
    let same = dice(&grid, &grid).map_err(|e| e.to_string())?;
    ensure(same == 1.0, format!("self dice {same}"))?;

    let far = translated(&cube, Vector3::new(4.0, 0.0, 0.0));
    let frame = GridFrame::covering(&cube, &far, 0.25).map_err(|e| e.to_string())?;
    let a = voxelize(&cube, &frame).map_err(|e| e.to_string())?;
    let b = voxelize(&far, &frame).map_err(|e| e.to_string())?;
    let disjoint = dice(&a, &b).map_err(|e| e.to_string())?;
    ensure(disjoint == 0.0, format!("disjoint dice {disjoint}"))?;

    // Half-overlap cubes, offset so faces fall between voxel centers.
    let base = translated(&cube, Vector3::new(0.0131, 0.0131, 0.0131));
    let half = translated(&base, Vector3::new(0.5, 0.0, 0.0));
    let frame = GridFrame::covering(&base, &half, 0.125).map_err(|e| e.to_string())?;
    let ga = voxelize(&base, &frame).map_err(|e| e.to_string())?;
    let gb = voxelize(&half, &frame).map_err(|e| e.to_string())?;
    let mut inter = 0usize;
    for k in 0..frame.dims[2] {
        for j in 0..frame.dims[1] {
            for i in 0..frame.dims[0] {
                if ga.get(i, j, k) && gb.get(i, j, k) {
                    inter += 1;
                }
            }
        }
    }
    let expect = 2.0 * inter as f64 / (ga.occupied_count() + gb.occupied_count()) as f64;
    let d = dice(&ga, &gb).map_err(|e| e.to_string())?;
    ensure(d == expect, format!("dice {d} vs voxel count {expect}"))?;
    ensure((d - 0.5).abs() < 0.02, format!("half-overlap dice {d}"))?;
    Ok(())
}

/// Pruned closest-point search vs the O(n*m) scan, bit for bit, plus the
/// Hausdorff >= mean ordering on 100 random pairs.
pub fn check_surface_distances() -> Result<(), String> {
    let mut rng = Rng::new(5150);
    // Perturbed 7x8 latitude/longitude spheres: exactly 50 vertices.
    let random_mesh = |rng: &mut Rng, extent: f64| {
        let base = uv_ellipsoid(Point3::origin(), [extent, extent, extent], 7, 8);
        let verts = base
            .vertices()
            .iter()
            .map(|p| {
                let f = 1.0 + 0.3 * (rng.uniform() - 0.5);
                Point3::from(
                    p.coords * f + Vector3::new(rng.normal(), rng.normal(), rng.normal()) * 0.2,
                )
            })
            .collect();
        base.with_vertices(verts).unwrap()
    };
    for round in 0..3 {
        let a = random_mesh(&mut rng, 9.0 + round as f64);
        let b = random_mesh(&mut rng, 10.0);
        debug_assert_eq!(a.vertices().len(), 50);
        let fast = directed_vertex_distances(a.vertices(), &b).map_err(|e| e.to_string())?;
        for (vi, p) in a.vertices().iter().enumerate() {
            let mut best = f64::INFINITY;
            for ti in 0..b.faces().len() {
                let d = point_triangle_distance_sq(p, &b.triangle(ti));
                if d < best {
                    best = d;
                }
            }
            ensure(
                fast[vi] == best.sqrt(),
                format!("round {round} vertex {vi}: {} vs {}", fast[vi], best.sqrt()),
            )?;
        }
    }
    for _ in 0..100 {
        let a = random_mesh(&mut rng, 8.0);
        let b = random_mesh(&mut rng, 8.5);
        let (msd, hd) = surface_distances(&a, &b).map_err(|e| e.to_string())?;
        ensure(hd >= msd - 1e-12, format!("hausdorff {hd} < mean {msd}"))?;
    }
    Ok(())
}

/// Icosphere volume at subdivision 3 within 1 % of the analytic sphere.
pub fn check_sphere_volume() -> Result<(), String> {
    let r = 10.0;
    let sphere = icosphere(Point3::origin(), r, 3);
    let vol = sphere.enclosed_volume().map_err(|e| e.to_string())? * MM3_PER_ML;
    let analytic = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
    ensure(
        (vol - analytic).abs() / analytic < 0.01,
        format!("sphere volume {vol} vs {analytic}"),
    )
}
