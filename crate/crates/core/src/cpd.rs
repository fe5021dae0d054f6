//! Coherent point drift: non-rigid registration of a template point set
//! onto a target cloud.
//!
//! The template points act as centroids of a Gaussian mixture with an extra
//! uniform outlier component; EM alternates soft correspondence (E-step)
//! with a coupled-motion update (M-step) solving for kernel coefficients W
//! so the template moves as `T = Y + G W`, where G is the Gaussian gram
//! matrix over template points. Both sets are moved to a common zero-mean,
//! unit-RMS frame for conditioning and mapped back afterwards.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, Point3, Vector3};

use crate::fmath::{exp, ln, powf, sqrt};
use crate::mesh::{BiventricularShape, MeshError};

#[derive(Clone, Debug, PartialEq)]
pub struct CpdConfig {
    /// Gaussian kernel bandwidth over template points, in units of the
    /// normalized (unit-RMS) frame.
    pub kernel_width: f64,
    /// Motion-coherence weight on tr(W' G W).
    pub regularization_weight: f64,
    /// Uniform outlier mixture weight, in [0, 1).
    pub outlier_weight: f64,
    pub max_iter: usize,
    /// Stop when the change in sigma^2 (normalized frame) drops below this.
    pub sigma_tol: f64,
}

impl Default for CpdConfig {
    fn default() -> Self {
        CpdConfig {
            kernel_width: 2.0,
            regularization_weight: 3.0,
            outlier_weight: 0.1,
            max_iter: 150,
            sigma_tol: 1e-8,
        }
    }
}

impl CpdConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN-rejecting on purpose
    pub fn validate(&self) -> Result<(), CpdError> {
        if !(self.kernel_width > 0.0)
            || !(self.regularization_weight > 0.0)
            || !(0.0..1.0).contains(&self.outlier_weight)
            || self.max_iter == 0
            || !(self.sigma_tol > 0.0)
        {
            return Err(CpdError::BadConfig);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CpdError {
    BadConfig,
    EmptyPointSet,
    NonFinitePoint { index: usize },
    SingularSystem { conditioning: f64 },
    TooFewContourPoints { structure: String, points: usize },
    Mesh(MeshError),
}

impl fmt::Display for CpdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CpdError::BadConfig => write!(f, "invalid registration configuration"),
            CpdError::EmptyPointSet => write!(f, "point set is empty"),
            CpdError::NonFinitePoint { index } => {
                write!(f, "point {index} has a non-finite coordinate")
            }
            CpdError::SingularSystem { conditioning } => {
                write!(f, "singular M-step system (conditioning estimate {conditioning:e})")
            }
            CpdError::TooFewContourPoints { structure, points } => {
                write!(f, "structure {structure} has only {points} contour points (need 10)")
            }
            CpdError::Mesh(e) => write!(f, "mesh error: {e}"),
        }
    }
}

impl From<MeshError> for CpdError {
    fn from(e: MeshError) -> Self {
        CpdError::Mesh(e)
    }
}

#[derive(Clone, Debug)]
pub struct NonRigidResult {
    /// Template points after deformation, in the input (mm) frame.
    pub deformed_template: Vec<Point3<f64>>,
    /// Kernel coefficients in the input frame; together with
    /// `kernel_width_mm` they satisfy `deformed = template + G W`.
    pub coefficients: DMatrix<f64>,
    /// Kernel bandwidth expressed in input units.
    pub kernel_width_mm: f64,
    /// Final mixture variance in input units squared.
    pub final_sigma2: f64,
    pub iterations_used: usize,
    /// Penalized negative log-likelihood before each EM update
    /// (normalized frame); non-increasing up to round-off.
    pub objective_trace: Vec<f64>,
}

/// Gaussian gram matrix of a point set.
pub fn gaussian_gram(points: &[Point3<f64>], width: f64) -> DMatrix<f64> {
    let m = points.len();
    let inv = -0.5 / (width * width);
    DMatrix::from_fn(m, m, |i, j| {
        exp((points[i] - points[j]).norm_squared() * inv)
    })
}

fn check_finite(points: &[Point3<f64>]) -> Result<(), CpdError> {
    if points.is_empty() {
        return Err(CpdError::EmptyPointSet);
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(CpdError::NonFinitePoint { index: i });
        }
    }
    Ok(())
}

/// Registers `template` onto `target` non-rigidly.
pub fn register_nonrigid(
    template: &[Point3<f64>],
    target: &[Point3<f64>],
    config: &CpdConfig,
) -> Result<NonRigidResult, CpdError> {
    config.validate()?;
    check_finite(template)?;
    check_finite(target)?;

    // Common normalization so the result is equivariant under shared rigid
    // motions of both sets.
    let m = template.len();
    let n = target.len();
    let mut center = Vector3::zeros();
    for p in template.iter().chain(target) {
        center += p.coords;
    }
    center /= (m + n) as f64;
    let mut rms = 0.0;
    for p in template.iter().chain(target) {
        rms += (p.coords - center).norm_squared();
    }
    rms = sqrt(rms / (m + n) as f64).max(1e-12);

    let y: Vec<Vector3<f64>> = template.iter().map(|p| (p.coords - center) / rms).collect();
    let x: Vec<Vector3<f64>> = target.iter().map(|p| (p.coords - center) / rms).collect();

    let y_pts: Vec<Point3<f64>> = y.iter().map(|v| Point3::from(*v)).collect();
    let gram = gaussian_gram(&y_pts, config.kernel_width);

    let mut sigma2 = {
        let mut sum = 0.0;
        for yi in &y {
            for xj in &x {
                sum += (yi - xj).norm_squared();
            }
        }
        sum / (3 * m * n) as f64
    };

    let lambda = config.regularization_weight;
    let w_out = config.outlier_weight;
    let mut coeff = DMatrix::<f64>::zeros(m, 3);
    let mut moved: Vec<Vector3<f64>> = y.clone();
    let mut objective_trace = Vec::new();
    let mut iterations_used = config.max_iter;
    let mut p = DMatrix::<f64>::zeros(m, n);

    for iter in 1..=config.max_iter {
        // E-step: posteriors and the penalized objective at current state.
        let two_pi_sigma = powf(2.0 * core::f64::consts::PI * sigma2, 1.5);
        let c_outlier = two_pi_sigma * w_out / (1.0 - w_out) * m as f64 / n as f64;
        let mut nll = 0.0;
        for j in 0..n {
            let mut col_sum = 0.0;
            for i in 0..m {
                let d2 = (moved[i] - x[j]).norm_squared();
                let v = exp(-d2 / (2.0 * sigma2));
                p[(i, j)] = v;
                col_sum += v;
            }
            let denom = col_sum + c_outlier;
            if denom > 0.0 {
                for i in 0..m {
                    p[(i, j)] /= denom;
                }
            }
            let density =
                (1.0 - w_out) / (m as f64 * two_pi_sigma) * col_sum + w_out / n as f64;
            nll -= ln(density.max(1e-300));
        }
        let mut reg = 0.0;
        for c in 0..3 {
            let gc = &gram * coeff.column(c);
            reg += coeff.column(c).dot(&gc);
        }
        objective_trace.push(nll + 0.5 * lambda * reg);

        // M-step: solve for W, move the template, update sigma^2.
        let mut p1 = alloc::vec![0.0; m];
        let mut pt1 = alloc::vec![0.0; n];
        let mut px = DMatrix::<f64>::zeros(m, 3);
        for i in 0..m {
            for j in 0..n {
                let v = p[(i, j)];
                p1[i] += v;
                pt1[j] += v;
                px[(i, 0)] += v * x[j].x;
                px[(i, 1)] += v * x[j].y;
                px[(i, 2)] += v * x[j].z;
            }
        }
        let np: f64 = p1.iter().sum();
        let mut system = gram.clone();
        for i in 0..m {
            for k in 0..m {
                system[(i, k)] *= p1[i];
            }
            system[(i, i)] += lambda * sigma2;
        }
        let mut rhs = px.clone();
        for i in 0..m {
            rhs[(i, 0)] -= p1[i] * y[i].x;
            rhs[(i, 1)] -= p1[i] * y[i].y;
            rhs[(i, 2)] -= p1[i] * y[i].z;
        }
        let lu = system.lu();
        let diag = lu.u().diagonal();
        let (mut dmin, mut dmax) = (f64::INFINITY, 0.0_f64);
        for d in diag.iter() {
            dmin = dmin.min(d.abs());
            dmax = dmax.max(d.abs());
        }
        let conditioning = if dmax > 0.0 { dmin / dmax } else { 0.0 };
        coeff = lu
            .solve(&rhs)
            .ok_or(CpdError::SingularSystem { conditioning })?;

        let gw = &gram * &coeff;
        for i in 0..m {
            moved[i] = y[i] + Vector3::new(gw[(i, 0)], gw[(i, 1)], gw[(i, 2)]);
        }

        let x_part: f64 = (0..n).map(|j| pt1[j] * x[j].norm_squared()).sum();
        let cross: f64 = (0..m)
            .map(|i| {
                px[(i, 0)] * moved[i].x + px[(i, 1)] * moved[i].y + px[(i, 2)] * moved[i].z
            })
            .sum();
        let t_part: f64 = (0..m).map(|i| p1[i] * moved[i].norm_squared()).sum();
        let sigma2_new = ((x_part - 2.0 * cross + t_part) / (3.0 * np)).max(1e-14);

        let delta = (sigma2_new - sigma2).abs();
        sigma2 = sigma2_new;
        if delta < config.sigma_tol {
            iterations_used = iter;
            break;
        }
    }

    let deformed_template: Vec<Point3<f64>> = moved
        .iter()
        .map(|v| Point3::from(v * rms + center))
        .collect();
    Ok(NonRigidResult {
        deformed_template,
        coefficients: coeff * rms,
        kernel_width_mm: config.kernel_width * rms,
        final_sigma2: sigma2 * rms * rms,
        iterations_used,
        objective_trace,
    })
}

/// Contour point clouds labelled by cardiac structure.
#[derive(Clone, Debug, Default)]
pub struct LabeledContours {
    pub lv_endo: Vec<Point3<f64>>,
    pub lv_epi: Vec<Point3<f64>>,
    pub rv: Vec<Point3<f64>>,
}

pub const MIN_CONTOUR_POINTS: usize = 10;

/// Deforms the biventricular template onto labelled contour clouds.
///
/// A centroid translation pre-aligns the template, then each structure
/// (LV endo, LV epi, RV) is registered separately; only vertex positions
/// move, so the output keeps the template's topology and point
/// correspondence exactly.
pub fn fit_template_to_contours(
    template: &BiventricularShape,
    contours: &LabeledContours,
    config: &CpdConfig,
) -> Result<BiventricularShape, CpdError> {
    for (name, pts) in [
        ("lv_endo", &contours.lv_endo),
        ("lv_epi", &contours.lv_epi),
        ("rv", &contours.rv),
    ] {
        if pts.len() < MIN_CONTOUR_POINTS {
            return Err(CpdError::TooFewContourPoints {
                structure: String::from(name),
                points: pts.len(),
            });
        }
    }

    // Rigid pre-alignment: move the template centroid onto the centroid of
    // the full contour cloud. Orientation is left to the contour frame;
    // the mixture variance starts wide enough to absorb moderate rotation.
    let mut contour_centroid = Vector3::zeros();
    let total = contours.lv_endo.len() + contours.lv_epi.len() + contours.rv.len();
    for p in contours
        .lv_endo
        .iter()
        .chain(&contours.lv_epi)
        .chain(&contours.rv)
    {
        contour_centroid += p.coords;
    }
    contour_centroid /= total as f64;
    let mut template_centroid = Vector3::zeros();
    for p in template.lv().vertices().iter().chain(template.rv().vertices()) {
        template_centroid += p.coords;
    }
    template_centroid /= template.point_count() as f64;
    let shift = contour_centroid - template_centroid;

    let endo_count = template.lv_endo_count();
    let moved: Vec<Point3<f64>> = template
        .lv()
        .vertices()
        .iter()
        .chain(template.rv().vertices())
        .map(|p| p + shift)
        .collect();
    let lv_count = template.lv().vertices().len();

    let endo = register_nonrigid(&moved[..endo_count], &contours.lv_endo, config)?;
    let epi = register_nonrigid(&moved[endo_count..lv_count], &contours.lv_epi, config)?;
    let rv = register_nonrigid(&moved[lv_count..], &contours.rv, config)?;

    let mut lv_vertices = endo.deformed_template;
    lv_vertices.extend_from_slice(&epi.deformed_template);
    let lv = template.lv().with_vertices(lv_vertices)?;
    let rv_mesh = template.rv().with_vertices(rv.deformed_template)?;
    Ok(BiventricularShape::new(lv, rv_mesh, endo_count)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec::Vec;

    fn grid_cloud(nx: usize, ny: usize, spacing: f64) -> Vec<Point3<f64>> {
        let mut pts = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                pts.push(Point3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        pts
    }

    fn rms_error(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
        let sum: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_squared()).sum();
        sqrt(sum / a.len() as f64)
    }

    #[test]
    fn self_registration_stays_put() {
        let cloud = grid_cloud(10, 10, 4.0);
        let result = register_nonrigid(&cloud, &cloud, &CpdConfig::default()).unwrap();
        let max_move = cloud
            .iter()
            .zip(&result.deformed_template)
            .map(|(p, q)| (p - q).norm())
            .fold(0.0_f64, f64::max);
        assert!(max_move < 1e-6, "moved by {max_move} mm");

        // Posterior is identity-dominant at the final variance.
        let sigma2 = result.final_sigma2.max(1e-12);
        for (i, t) in result.deformed_template.iter().enumerate() {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (j, xj) in cloud.iter().enumerate() {
                let v = -(t - xj).norm_squared() / (2.0 * sigma2);
                if v > best_v {
                    best_v = v;
                    best = j;
                }
            }
            assert_eq!(best, i);
        }
    }

    #[test]
    fn recovers_smooth_sinusoidal_warp() {
        let template = grid_cloud(20, 10, 4.0);
        let warped: Vec<Point3<f64>> = template
            .iter()
            .map(|p| {
                let dz = 2.0 * libm::sin(p.x / 15.0) * libm::cos(p.y / 20.0);
                Point3::new(p.x, p.y, p.z + dz)
            })
            .collect();
        assert_eq!(template.len(), 200);
        let result = register_nonrigid(&template, &warped, &CpdConfig::default()).unwrap();
        let rms = rms_error(&result.deformed_template, &warped);
        assert!(rms < 0.1, "rms recovery error {rms} mm");
    }

    #[test]
    fn objective_is_monotone_non_increasing() {
        let template = grid_cloud(12, 8, 5.0);
        let warped: Vec<Point3<f64>> = template
            .iter()
            .map(|p| Point3::new(p.x + libm::sin(p.y / 10.0), p.y, p.z + libm::cos(p.x / 12.0)))
            .collect();
        let result = register_nonrigid(&template, &warped, &CpdConfig::default()).unwrap();
        assert!(result.objective_trace.len() >= 3);
        for w in result.objective_trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()),
                "objective increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn clutter_degrades_gracefully_with_outlier_weight() {
        let template = grid_cloud(14, 10, 4.0);
        let warp = |p: &Point3<f64>| {
            Point3::new(p.x, p.y + 1.5 * libm::sin(p.x / 18.0), p.z)
        };
        let clean: Vec<Point3<f64>> = template.iter().map(warp).collect();
        let mut rng = Rng::new(77);
        let mut cluttered = clean.clone();
        let n_clutter = template.len() / 5;
        for _ in 0..n_clutter {
            cluttered.push(Point3::new(
                rng.uniform_in(-10.0, 66.0),
                rng.uniform_in(-10.0, 50.0),
                rng.uniform_in(-8.0, 8.0),
            ));
        }
        let clean_cfg = CpdConfig::default();
        let clean_fit = register_nonrigid(&template, &clean, &clean_cfg).unwrap();
        let clean_rms = rms_error(&clean_fit.deformed_template, &clean);

        let clutter_cfg = CpdConfig {
            outlier_weight: 0.3,
            ..CpdConfig::default()
        };
        let fit = register_nonrigid(&template, &cluttered, &clutter_cfg).unwrap();
        let rms = rms_error(&fit.deformed_template, &clean);
        assert!(
            rms < 2.0 * clean_rms.max(0.05),
            "clutter rms {rms} vs clean {clean_rms}"
        );
    }

    #[test]
    fn deformed_equals_template_plus_kernel_times_coefficients() {
        let template = grid_cloud(8, 6, 6.0);
        let target: Vec<Point3<f64>> = template
            .iter()
            .map(|p| Point3::new(p.x + 1.0, p.y - 0.5, p.z + libm::sin(p.x / 10.0)))
            .collect();
        let result = register_nonrigid(&template, &target, &CpdConfig::default()).unwrap();
        let gram = gaussian_gram(&template, result.kernel_width_mm);
        let gw = gram * &result.coefficients;
        for (i, (p, d)) in template.iter().zip(&result.deformed_template).enumerate() {
            let rebuilt = Point3::new(
                p.x + gw[(i, 0)],
                p.y + gw[(i, 1)],
                p.z + gw[(i, 2)],
            );
            assert!((rebuilt - d).norm() < 1e-9, "point {i}");
        }
    }

    #[test]
    fn registration_is_equivariant_under_common_rigid_motion() {
        let template = grid_cloud(9, 7, 5.0);
        let target: Vec<Point3<f64>> = template
            .iter()
            .map(|p| Point3::new(p.x, p.y + libm::sin(p.x / 11.0), p.z + 0.8))
            .collect();
        let base = register_nonrigid(&template, &target, &CpdConfig::default()).unwrap();

        let angle: f64 = 0.6;
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        let motion = |p: &Point3<f64>| {
            Point3::new(c * p.x - s * p.y + 14.0, s * p.x + c * p.y - 6.0, p.z + 3.0)
        };
        let template2: Vec<Point3<f64>> = template.iter().map(&motion).collect();
        let target2: Vec<Point3<f64>> = target.iter().map(&motion).collect();
        let moved = register_nonrigid(&template2, &target2, &CpdConfig::default()).unwrap();
        for (p, q) in base.deformed_template.iter().zip(&moved.deformed_template) {
            let expect = motion(p);
            assert!((expect - q).norm() < 1e-6, "{expect:?} vs {q:?}");
        }
    }

    #[test]
    fn empty_and_non_finite_inputs_are_rejected() {
        let cloud = grid_cloud(4, 4, 3.0);
        assert!(matches!(
            register_nonrigid(&[], &cloud, &CpdConfig::default()),
            Err(CpdError::EmptyPointSet)
        ));
        let mut bad = cloud.clone();
        bad[3].y = f64::NAN;
        assert!(matches!(
            register_nonrigid(&cloud, &bad, &CpdConfig::default()),
            Err(CpdError::NonFinitePoint { index: 3 })
        ));
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = CpdConfig {
            outlier_weight: 1.0,
            ..CpdConfig::default()
        };
        assert_eq!(cfg.validate(), Err(CpdError::BadConfig));
    }
}
