//! Pairwise and generalized Procrustes alignment.
//!
//! Pairwise alignment is the closed-form least-squares superimposition via
//! the SVD of the 3x3 cross-covariance, with reflections excluded. The
//! generalized form iterates align-to-mean / recompute-mean until the mean
//! stops moving; with scaling enabled the iteration works on unit-size
//! preshapes (mean renormalized each round so the set cannot shrink) and the
//! result is rescaled to the cohort's mean centroid size at the end.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::fmath::sqrt;
use crate::mesh::ShapeVector;

pub const GPA_DEFAULT_TOL: f64 = 1e-10;
pub const GPA_DEFAULT_MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub enum AlignError {
    LengthMismatch { a: usize, b: usize },
    TooFewPoints { points: usize },
    DegenerateGeometry,
    TooFewShapes { shapes: usize },
    NoConvergence { iterations: usize, residual: f64 },
}

impl fmt::Display for AlignError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlignError::LengthMismatch { a, b } => {
                write!(f, "shape vectors have {a} and {b} coordinates")
            }
            AlignError::TooFewPoints { points } => {
                write!(f, "alignment needs at least 3 points, got {points}")
            }
            AlignError::DegenerateGeometry => {
                write!(f, "point set is collinear or coincident")
            }
            AlignError::TooFewShapes { shapes } => {
                write!(f, "generalized alignment needs at least 2 shapes, got {shapes}")
            }
            AlignError::NoConvergence { iterations, residual } => {
                write!(f, "mean still moving by {residual:e} after {iterations} iterations")
            }
        }
    }
}

/// Similarity transform `p -> scale * rotation * p + translation` with a
/// proper rotation (det +1); scale is 1 when scaling is disabled.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn translation_only(t: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: t,
            scale: 1.0,
        }
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }

    pub fn apply(&self, shape: &ShapeVector) -> ShapeVector {
        let mut out = shape.clone();
        for i in 0..shape.point_count() {
            out.set_point(i, self.apply_point(&shape.point(i)));
        }
        out
    }

    /// Max deviation of `rotation` from orthonormality plus det error.
    pub fn rotation_defect(&self) -> f64 {
        let gram = self.rotation.transpose() * self.rotation;
        let ortho = (gram - Matrix3::identity()).abs().max();
        let det = (self.rotation.determinant() - 1.0).abs();
        ortho.max(det)
    }
}

/// Sum of squared distances between corresponding points.
pub fn residual(a: &ShapeVector, b: &ShapeVector) -> f64 {
    a.coords()
        .iter()
        .zip(b.coords())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Least-squares transform taking `source` onto `target`.
///
/// Reflections are excluded: the determinant is forced to +1 even when a
/// mirror image would fit better.
pub fn procrustes_pair(
    source: &ShapeVector,
    target: &ShapeVector,
    with_scale: bool,
) -> Result<RigidTransform, AlignError> {
    if source.coords().len() != target.coords().len() {
        return Err(AlignError::LengthMismatch {
            a: source.coords().len(),
            b: target.coords().len(),
        });
    }
    let n = source.point_count();
    if n < 3 {
        return Err(AlignError::TooFewPoints { points: n });
    }
    let src_centroid = source.centroid();
    let tgt_centroid = target.centroid();
    let mut cross = Matrix3::zeros();
    let mut src_norm2 = 0.0;
    for i in 0..n {
        let x = source.point(i).coords - src_centroid;
        let y = target.point(i).coords - tgt_centroid;
        cross += x * y.transpose();
        src_norm2 += x.norm_squared();
    }
    if src_norm2 == 0.0 {
        return Err(AlignError::DegenerateGeometry);
    }
    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let sv = svd.singular_values;
    if sv[1] <= 1e-12 * sv[0] {
        return Err(AlignError::DegenerateGeometry);
    }
    let det_sign = if (v_t.transpose() * u.transpose()).determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det_sign));
    let rotation = v_t.transpose() * d * u.transpose();
    let scale = if with_scale {
        (sv[0] + sv[1] + det_sign * sv[2]) / src_norm2
    } else {
        1.0
    };
    let translation = tgt_centroid - scale * (rotation * src_centroid);
    Ok(RigidTransform {
        rotation,
        translation,
        scale,
    })
}

/// Aligned cohort plus its consensus (arithmetic) mean.
#[derive(Clone, Debug)]
pub struct GpaResult {
    pub aligned: Vec<ShapeVector>,
    pub consensus: ShapeVector,
    pub iterations: usize,
    /// Sum of squared distances to the mean after each iteration.
    pub residual_trace: Vec<f64>,
}

/// Generalized Procrustes alignment of a cohort.
///
/// With `with_scale` the output is rescaled so the consensus has the mean
/// centroid size of the inputs; pose is inherited from the first shape.
pub fn generalized_procrustes(
    shapes: &[ShapeVector],
    with_scale: bool,
    tol: f64,
    max_iter: usize,
) -> Result<GpaResult, AlignError> {
    if shapes.len() < 2 {
        return Err(AlignError::TooFewShapes { shapes: shapes.len() });
    }
    let len = shapes[0].coords().len();
    for s in shapes {
        if s.coords().len() != len {
            return Err(AlignError::LengthMismatch {
                a: len,
                b: s.coords().len(),
            });
        }
    }
    let mean_size = shapes.iter().map(|s| s.centroid_size()).sum::<f64>() / shapes.len() as f64;
    if mean_size == 0.0 {
        return Err(AlignError::DegenerateGeometry);
    }

    let centered: Vec<ShapeVector> = shapes
        .iter()
        .map(|s| {
            let centroid = s.centroid();
            let mut c = s.clone();
            for i in 0..c.point_count() {
                c.set_point(i, Point3::from(s.point(i).coords - centroid));
            }
            if with_scale {
                let size = c.centroid_size();
                for x in c.coords_mut() {
                    *x /= size;
                }
            }
            c
        })
        .collect();

    // Scale differences are removed up front by the preshape normalization,
    // so the iteration itself only rotates; re-aligning to the mean and
    // recomputing it each decrease the total residual, making the trace
    // monotone. The mean is renormalized to unit size every round (it can
    // only shrink, never the shapes).
    let mut mean = centered[0].clone();
    let mut aligned = centered.clone();
    let mut residual_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut movement = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        for (a, c) in aligned.iter_mut().zip(&centered) {
            let t = procrustes_pair(c, &mean, false)?;
            *a = t.apply(c);
        }
        let mut new_mean = mean_of(&aligned);
        residual_trace.push(aligned.iter().map(|a| residual(a, &new_mean)).sum());
        if with_scale {
            let size = new_mean.centroid_size();
            for x in new_mean.coords_mut() {
                *x /= size;
            }
        }
        movement = sqrt(residual(&new_mean, &mean)) / mean.centroid_size();
        mean = new_mean;
        if movement < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(AlignError::NoConvergence {
            iterations,
            residual: movement,
        });
    }
    // Final pass against the converged mean, then report the actual mean of
    // the returned set as the consensus.
    for (a, c) in aligned.iter_mut().zip(&centered) {
        let t = procrustes_pair(c, &mean, false)?;
        *a = t.apply(c);
    }
    let mut consensus = mean_of(&aligned);
    if with_scale {
        for shape in aligned.iter_mut() {
            for x in shape.coords_mut() {
                *x *= mean_size;
            }
        }
        for x in consensus.coords_mut() {
            *x *= mean_size;
        }
    }
    Ok(GpaResult {
        aligned,
        consensus,
        iterations,
        residual_trace,
    })
}

fn mean_of(shapes: &[ShapeVector]) -> ShapeVector {
    let mut mean = alloc::vec![0.0; shapes[0].coords().len()];
    for s in shapes {
        for (m, x) in mean.iter_mut().zip(s.coords()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= shapes.len() as f64;
    }
    ShapeVector::new(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec;
    use alloc::vec::Vec;

    fn rotation_z(angle: f64) -> Matrix3<f64> {
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    fn random_rotation(rng: &mut Rng) -> Matrix3<f64> {
        // Random axis-angle via Rodrigues.
        let axis = Vector3::new(rng.normal(), rng.normal(), rng.normal()).normalize();
        let angle = rng.uniform_in(0.0, core::f64::consts::PI);
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        let k = Matrix3::new(
            0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0,
        );
        Matrix3::identity() + s * k + (1.0 - c) * (k * k)
    }

    fn random_shape(rng: &mut Rng, points: usize) -> ShapeVector {
        ShapeVector::new((0..3 * points).map(|_| rng.normal() * 10.0).collect())
    }

    #[test]
    fn identity_for_equal_shapes() {
        let mut rng = Rng::new(1);
        let s = random_shape(&mut rng, 20);
        let t = procrustes_pair(&s, &s, true).unwrap();
        assert!(t.rotation_defect() < 1e-12);
        assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-9);
        assert!(t.translation.norm() < 1e-9);
        assert!((t.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_known_rigid_motion() {
        let mut rng = Rng::new(2);
        let source = random_shape(&mut rng, 25);
        let rot = rotation_z(30.0_f64.to_radians());
        let shift = Vector3::new(5.0, 0.0, 0.0);
        let expected = RigidTransform {
            rotation: rot,
            translation: shift,
            scale: 1.0,
        };
        let target = expected.apply(&source);
        let t = procrustes_pair(&source, &target, false).unwrap();
        let moved = t.apply(&source);
        assert!(residual(&moved, &target) < 1e-18);
        assert!((t.rotation - rot).abs().max() < 1e-9);
        assert!((t.translation - shift).norm() < 1e-9);
    }

    #[test]
    fn recovers_similarity_with_scale() {
        let mut rng = Rng::new(3);
        let source = random_shape(&mut rng, 25);
        let expected = RigidTransform {
            rotation: random_rotation(&mut rng),
            translation: Vector3::new(-3.0, 8.0, 1.0),
            scale: 1.4,
        };
        let target = expected.apply(&source);
        let t = procrustes_pair(&source, &target, true).unwrap();
        assert!((t.scale - 1.4).abs() < 1e-9);
        assert!(residual(&t.apply(&source), &target) < 1e-16);
    }

    #[test]
    fn mirrored_target_still_gets_proper_rotation() {
        // 4-point asymmetric set; target is its mirror image.
        let source = ShapeVector::new(vec![
            0.0, 0.0, 0.0, //
            3.0, 0.0, 0.0, //
            0.0, 2.0, 0.0, //
            0.5, 0.7, 1.9,
        ]);
        let mut mirrored = source.clone();
        for i in 0..source.point_count() {
            let p = source.point(i);
            mirrored.set_point(i, Point3::new(-p.x, p.y, p.z));
        }
        let t = procrustes_pair(&source, &mirrored, false).unwrap();
        assert!((t.rotation.determinant() - 1.0).abs() < 1e-9);
        let best = residual(&t.apply(&source), &mirrored);
        assert!(best > 1e-3);
        // No sampled proper rotation beats the closed-form optimum.
        let mut rng = Rng::new(9);
        let src_centroid = source.centroid();
        let tgt_centroid = mirrored.centroid();
        for _ in 0..2000 {
            let rot = random_rotation(&mut rng);
            let cand = RigidTransform {
                rotation: rot,
                translation: tgt_centroid - rot * src_centroid,
                scale: 1.0,
            };
            let r = residual(&cand.apply(&source), &mirrored);
            assert!(r >= best - 1e-9, "sampled rotation beat the optimum: {r} < {best}");
        }
    }

    #[test]
    fn degenerate_sets_are_rejected() {
        let collinear = ShapeVector::new(vec![
            0.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, //
            2.0, 0.0, 0.0, //
            3.0, 0.0, 0.0,
        ]);
        assert_eq!(
            procrustes_pair(&collinear, &collinear, false),
            Err(AlignError::DegenerateGeometry)
        );
        let two = ShapeVector::new(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            procrustes_pair(&two, &two, false),
            Err(AlignError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn transform_beats_identity() {
        let mut rng = Rng::new(4);
        let source = random_shape(&mut rng, 30);
        let target = random_shape(&mut rng, 30);
        let t = procrustes_pair(&source, &target, false).unwrap();
        assert!(residual(&t.apply(&source), &target) <= residual(&source, &target) + 1e-9);
    }

    #[test]
    fn gpa_collapses_rigid_copies() {
        let mut rng = Rng::new(5);
        let base = random_shape(&mut rng, 40);
        let shapes: Vec<ShapeVector> = (0..5)
            .map(|_| {
                let t = RigidTransform {
                    rotation: random_rotation(&mut rng),
                    translation: Vector3::new(
                        rng.uniform_in(-20.0, 20.0),
                        rng.uniform_in(-20.0, 20.0),
                        rng.uniform_in(-20.0, 20.0),
                    ),
                    scale: 1.0,
                };
                t.apply(&base)
            })
            .collect();
        let gpa =
            generalized_procrustes(&shapes, true, GPA_DEFAULT_TOL, GPA_DEFAULT_MAX_ITER).unwrap();
        for a in &gpa.aligned {
            for (x, y) in a.coords().iter().zip(gpa.aligned[0].coords()) {
                assert!((x - y).abs() < 1e-8, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn gpa_consensus_is_midpoint_for_two_shapes() {
        let mut rng = Rng::new(6);
        let a = random_shape(&mut rng, 15);
        let mut b = a.clone();
        // Perturb slightly so the two shapes differ.
        for x in b.coords_mut() {
            *x += rng.uniform_in(-0.01, 0.01);
        }
        let gpa =
            generalized_procrustes(&[a, b], false, GPA_DEFAULT_TOL, GPA_DEFAULT_MAX_ITER).unwrap();
        let mid = mean_of(&gpa.aligned);
        for (x, y) in gpa.consensus.coords().iter().zip(mid.coords()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gpa_rejects_single_shape() {
        let mut rng = Rng::new(7);
        let a = random_shape(&mut rng, 10);
        assert!(matches!(
            generalized_procrustes(&[a], true, 1e-10, 50),
            Err(AlignError::TooFewShapes { .. })
        ));
    }

    #[test]
    fn gpa_residual_trace_is_non_increasing() {
        let mut rng = Rng::new(8);
        let base = random_shape(&mut rng, 30);
        let shapes: Vec<ShapeVector> = (0..6)
            .map(|_| {
                let t = RigidTransform {
                    rotation: random_rotation(&mut rng),
                    translation: Vector3::new(rng.normal(), rng.normal(), rng.normal()) * 5.0,
                    scale: rng.uniform_in(0.8, 1.25),
                };
                let mut s = t.apply(&base);
                for x in s.coords_mut() {
                    *x += rng.normal() * 0.3;
                }
                s
            })
            .collect();
        let gpa =
            generalized_procrustes(&shapes, true, GPA_DEFAULT_TOL, GPA_DEFAULT_MAX_ITER).unwrap();
        for w in gpa.residual_trace.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-9) + 1e-12,
                "residual increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn gpa_output_matches_under_common_rigid_motion() {
        // The aligned configuration is reproduced up to the common motion:
        // the two consensus shapes agree after pairwise alignment.
        let mut rng = Rng::new(10);
        let base = random_shape(&mut rng, 25);
        let shapes: Vec<ShapeVector> = (0..4)
            .map(|_| {
                let mut s = base.clone();
                for x in s.coords_mut() {
                    *x += rng.normal();
                }
                s
            })
            .collect();
        let common = RigidTransform {
            rotation: random_rotation(&mut rng),
            translation: Vector3::new(4.0, -7.0, 2.0),
            scale: 1.0,
        };
        let moved: Vec<ShapeVector> = shapes.iter().map(|s| common.apply(s)).collect();
        let g0 = generalized_procrustes(&shapes, true, 1e-12, 200).unwrap();
        let g1 = generalized_procrustes(&moved, true, 1e-12, 200).unwrap();
        let t = procrustes_pair(&g1.consensus, &g0.consensus, false).unwrap();
        let mapped = t.apply(&g1.consensus);
        for (x, y) in mapped.coords().iter().zip(g0.consensus.coords()) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }
}
