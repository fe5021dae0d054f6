//! Cross-module integration: template fitting on phantom contours, shape
//! model construction on a generated cohort, and brute-force covariance
//! equivalence on a tiny cohort.

use nalgebra::{DMatrix, Point3};

use ventric_core::align::{generalized_procrustes, procrustes_pair, GPA_DEFAULT_MAX_ITER, GPA_DEFAULT_TOL};
use ventric_core::cpd::{fit_template_to_contours, CpdConfig, CpdError};
use ventric_core::mesh::ShapeVector;
use ventric_core::metrics::surface_distances;
use ventric_core::pdm::{PointDistributionModel, DEFAULT_BETA};
use ventric_core::phantom::{
    contours_by_structure, generate_subject, make_phantom, slice_contours, PhantomConfig,
};
use ventric_core::rng::Rng;

#[test]
fn template_fit_recovers_contour_sampled_surfaces() {
    // Contours sampled exactly from the template's own surfaces: the fit
    // must stay within 0.1 mm mean surface distance of the template.
    let config = PhantomConfig::default();
    let template = make_phantom(&config, &[0.0; 4]).unwrap();
    let endo_count = template.lv_endo_count();
    let lv_count = template.lv().vertices().len();
    let contours = ventric_core::cpd::LabeledContours {
        lv_endo: template.lv().vertices()[..endo_count].to_vec(),
        lv_epi: template.lv().vertices()[endo_count..lv_count].to_vec(),
        rv: template.rv().vertices().to_vec(),
    };
    let fitted = fit_template_to_contours(&template, &contours, &CpdConfig::default()).unwrap();
    let (msd_endo, _) =
        surface_distances(&fitted.lv_endo_mesh(), &template.lv_endo_mesh()).unwrap();
    let (msd_epi, _) = surface_distances(&fitted.lv_epi_mesh(), &template.lv_epi_mesh()).unwrap();
    let (msd_rv, _) = surface_distances(fitted.rv(), template.rv()).unwrap();
    assert!(msd_endo < 0.1, "LV endo self-fit msd {msd_endo} mm");
    assert!(msd_epi < 0.1, "LV epi self-fit msd {msd_epi} mm");
    assert!(msd_rv < 0.1, "RV self-fit msd {msd_rv} mm");
}

#[test]
fn template_fit_reaches_phantom_ground_truth_within_one_mm() {
    let config = PhantomConfig::default();
    let template = make_phantom(&config, &[0.0; 4]).unwrap();
    let latents = [0.6, -0.5, 0.4, 0.7];
    let subject = make_phantom(&config, &latents).unwrap();
    let contours =
        contours_by_structure(&slice_contours(&config, &latents, &subject).unwrap());
    let fitted = fit_template_to_contours(&template, &contours, &CpdConfig::default()).unwrap();

    // Topology preserved exactly.
    assert!(ventric_core::metrics::same_topology(&fitted, &template));

    let (msd_endo, _) = surface_distances(&fitted.lv_endo_mesh(), &subject.lv_endo_mesh()).unwrap();
    let (msd_epi, _) = surface_distances(&fitted.lv_epi_mesh(), &subject.lv_epi_mesh()).unwrap();
    let (msd_rv, _) = surface_distances(fitted.rv(), subject.rv()).unwrap();
    assert!(msd_endo < 1.0, "LV endo msd {msd_endo} mm");
    assert!(msd_epi < 1.0, "LV epi msd {msd_epi} mm");
    assert!(msd_rv < 1.0, "RV msd {msd_rv} mm");
}

#[test]
fn template_fit_requires_every_structure() {
    let config = PhantomConfig::default();
    let template = make_phantom(&config, &[0.0; 4]).unwrap();
    let mut contours =
        contours_by_structure(&slice_contours(&config, &[0.0; 4], &template).unwrap());
    contours.rv.clear();
    assert!(matches!(
        fit_template_to_contours(&template, &contours, &CpdConfig::default()),
        Err(CpdError::TooFewContourPoints { .. })
    ));
}

#[test]
fn shape_model_spans_the_latent_directions() {
    // A model built on a generated cohort must explain latent-perturbation
    // shape differences within its 99.7 % modes. The global-scale direction
    // is removed by the similarity alignment and is skipped when the
    // aligned difference degenerates.
    let config = PhantomConfig {
        subject_count: 40,
        ..Default::default()
    };
    let shapes: Vec<ShapeVector> = (0..40)
        .map(|i| generate_subject(&config, i).unwrap().shape.to_vector())
        .collect();
    let gpa =
        generalized_procrustes(&shapes, true, GPA_DEFAULT_TOL, GPA_DEFAULT_MAX_ITER).unwrap();
    let model = PointDistributionModel::build(&gpa.aligned, 0.997, DEFAULT_BETA).unwrap();
    assert!(model.mode_count() >= 3, "modes: {}", model.mode_count());

    let consensus_norm: f64 = gpa
        .consensus
        .coords()
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    for axis in 0..4 {
        let mut plus = [0.0; 4];
        plus[axis] = 0.6;
        let mut minus = [0.0; 4];
        minus[axis] = -0.6;
        let align = |l: &[f64; 4]| {
            let v = make_phantom(&config, l).unwrap().to_vector();
            let t = procrustes_pair(&v, &gpa.consensus, true).unwrap();
            t.apply(&v)
        };
        let a = align(&plus);
        let b = align(&minus);
        let diff: Vec<f64> = a
            .coords()
            .iter()
            .zip(b.coords())
            .map(|(x, y)| x - y)
            .collect();
        let norm: f64 = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-6 * consensus_norm {
            continue; // direction removed by the alignment (global scale)
        }
        // Projection residual onto the mode span.
        let mut residual = diff.clone();
        for j in 0..model.mode_count() {
            let col = model.mode(j);
            let dot: f64 = diff.iter().zip(col.iter()).map(|(d, m)| d * m).sum();
            for (r, m) in residual.iter_mut().zip(col.iter()) {
                *r -= dot * m;
            }
        }
        let res_norm: f64 = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            res_norm / norm < 0.05,
            "axis {axis}: residual fraction {}",
            res_norm / norm
        );
    }
}

#[test]
fn model_matches_brute_force_covariance_eigendecomposition() {
    // Tiny cohort (3N = 12 <= 30): materialize the covariance with an
    // explicit double loop and compare eigenvalues and the reconstructed
    // covariance against the SVD-built model.
    let mut rng = Rng::new(123);
    let m = 5;
    let dim = 12;
    let cohort: Vec<ShapeVector> = (0..m)
        .map(|_| ShapeVector::new((0..dim).map(|_| rng.normal() * 3.0).collect()))
        .collect();
    let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();

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
        assert!((a - b).abs() < 1e-12);
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
    let eigen = cov.clone().symmetric_eigen();
    let mut brute: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
    brute.sort_by(|a, b| b.partial_cmp(a).unwrap());

    for (j, lambda) in model.eigenvalues().iter().enumerate() {
        assert!(
            (lambda - brute[j]).abs() < 1e-8 * brute[0],
            "eigenvalue {j}: {lambda} vs {}",
            brute[j]
        );
    }

    // Rank M-1 covariance is reproduced exactly by the full-rank model.
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
            assert!(
                (rebuilt[(r, c)] - cov[(r, c)]).abs() < 1e-12 * brute[0].max(1.0),
                "covariance mismatch at ({r},{c})"
            );
        }
    }
}

#[test]
fn registered_cohort_supports_round_trip_projection() {
    // Fit the template to several phantom subjects, build a model on the
    // fits, and confirm the training shapes project and synthesize back.
    let config = PhantomConfig {
        subject_count: 8,
        noise_sigma: 0.0,
        ..Default::default()
    };
    let template = make_phantom(&config, &[0.0; 4]).unwrap();
    let cpd = CpdConfig::default();
    let mut fitted = Vec::new();
    for i in 0..8 {
        let subject = generate_subject(&config, i).unwrap();
        let contours = contours_by_structure(&subject.contours);
        fitted.push(
            fit_template_to_contours(&template, &contours, &cpd)
                .unwrap()
                .to_vector(),
        );
    }
    let gpa =
        generalized_procrustes(&fitted, true, GPA_DEFAULT_TOL, GPA_DEFAULT_MAX_ITER).unwrap();
    let model = PointDistributionModel::build(&gpa.aligned, 1.0, DEFAULT_BETA).unwrap();
    for s in &gpa.aligned {
        let recon = model.synthesize(&model.project(s).unwrap()).unwrap();
        let err: f64 = recon
            .coords()
            .iter()
            .zip(s.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = s.coords().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-8 * norm);
    }
}

#[test]
fn rigid_motion_does_not_change_fitted_anatomy() {
    // Moving both template and contours by one rigid motion moves the fit
    // with them.
    let config = PhantomConfig::default();
    let template = make_phantom(&config, &[0.0; 4]).unwrap();
    let latents = [0.3, 0.2, -0.4, 0.1];
    let subject = make_phantom(&config, &latents).unwrap();
    let contours =
        contours_by_structure(&slice_contours(&config, &latents, &subject).unwrap());
    let fit0 = fit_template_to_contours(&template, &contours, &CpdConfig::default()).unwrap();

    let angle: f64 = 0.4;
    let (s, c) = (angle.sin(), angle.cos());
    let motion = |p: &Point3<f64>| {
        Point3::new(c * p.x - s * p.y + 25.0, s * p.x + c * p.y - 10.0, p.z + 5.0)
    };
    let template2 = template.map_vertices(|p| motion(p));
    let mut contours2 = contours.clone();
    for set in [&mut contours2.lv_endo, &mut contours2.lv_epi, &mut contours2.rv] {
        for p in set.iter_mut() {
            *p = motion(p);
        }
    }
    let fit1 = fit_template_to_contours(&template2, &contours2, &CpdConfig::default()).unwrap();
    for (a, b) in fit0
        .lv()
        .vertices()
        .iter()
        .chain(fit0.rv().vertices())
        .zip(fit1.lv().vertices().iter().chain(fit1.rv().vertices()))
    {
        assert!((motion(a) - b).norm() < 1e-5, "{a:?} vs {b:?}");
    }
}

#[test]
fn midpoint_network_output_predicts_the_mean_shape() {
    // Zeroing the last batch-norm scale and shift makes the head emit
    // sigmoid(0) = 0.5 exactly for every mode, which decodes to b = 0 and
    // synthesizes the mean shape on the template topology.
    use ventric_core::net::{predict_shape, ArchitectureConfig, NetworkParams, TrainSample};
    use ventric_core::nn::Tensor;

    let config = PhantomConfig {
        subject_count: 8,
        ..Default::default()
    };
    let shapes: Vec<ShapeVector> = (0..8)
        .map(|i| generate_subject(&config, i).unwrap().shape.to_vector())
        .collect();
    let gpa =
        generalized_procrustes(&shapes, true, GPA_DEFAULT_TOL, GPA_DEFAULT_MAX_ITER).unwrap();
    let model = PointDistributionModel::build(&gpa.aligned, 1.0, DEFAULT_BETA).unwrap();
    let template = make_phantom(&config, &[0.0; 4]).unwrap();
    let k = 3.min(model.mode_count());

    let arch = ArchitectureConfig {
        mode_count: k,
        ..ArchitectureConfig::toy(k)
    };
    let mut params = NetworkParams::init(&arch, 5).unwrap();
    let gamma_idx = params.index_of("head.bn3.gamma");
    let beta_idx = params.index_of("head.bn3.beta");
    params.tensors[gamma_idx].tensor.data_mut().fill(0.0);
    params.tensors[beta_idx].tensor.data_mut().fill(0.0);

    let mut rng = Rng::new(3);
    let mut sax = Tensor::zeros(&[arch.sax_slices, arch.sax_size, arch.sax_size]);
    for v in sax.data_mut() {
        *v = rng.uniform();
    }
    let mut lax = Tensor::zeros(&[1, arch.lax_size, arch.lax_size]);
    for v in lax.data_mut() {
        *v = rng.uniform();
    }
    let sample = TrainSample {
        sax,
        lax,
        meta: (0..arch.meta_inputs).map(|_| rng.uniform()).collect(),
        reference: None,
    };
    let predicted = predict_shape(&params, &arch, &sample, &model, &template).unwrap();
    let mean_shape =
        ventric_core::mesh::BiventricularShape::from_vector(model.mean_shape(), &template).unwrap();
    for (a, b) in predicted
        .to_vector()
        .coords()
        .iter()
        .zip(mean_shape.to_vector().coords())
    {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}
