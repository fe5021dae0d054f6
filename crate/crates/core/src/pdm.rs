//! Point distribution model: mean shape plus orthonormal PCA modes.
//!
//! Built from Procrustes-aligned shape vectors through a thin SVD of the
//! mean-centred data matrix (the covariance itself is never materialized);
//! eigenvalues carry the 1/(M-1) sample normalization. Mode signs are fixed
//! so that each column's largest-magnitude entry is positive, making builds
//! reproducible bit for bit.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::fmath::sqrt;
use crate::mesh::ShapeVector;

/// Mode-coordinate bound multiplier: |b_i| <= beta * sqrt(lambda_i).
pub const DEFAULT_BETA: f64 = 3.0;

/// Eigenvalues below this fraction of the leading one are numerical noise.
const DEGENERATE_MODE_RATIO: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum PdmError {
    TooFewShapes { shapes: usize },
    LengthMismatch { expected: usize, got: usize },
    NoModes,
    TooManyParams { got: usize, modes: usize },
    UnitValueOutOfRange { index: usize, value: f64 },
    NotClamped { index: usize, value: f64, bound: f64 },
    BadVarianceFraction { value: f64 },
}

impl fmt::Display for PdmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PdmError::TooFewShapes { shapes } => {
                write!(f, "model needs at least 2 shapes, got {shapes}")
            }
            PdmError::LengthMismatch { expected, got } => {
                write!(f, "shape vector length {got}, expected {expected}")
            }
            PdmError::NoModes => write!(f, "shapes are identical; covariance has no modes"),
            PdmError::TooManyParams { got, modes } => {
                write!(f, "{got} parameters for a model with {modes} modes")
            }
            PdmError::UnitValueOutOfRange { index, value } => {
                write!(f, "unit-encoded value {value} at index {index} outside [0,1]")
            }
            PdmError::NotClamped { index, value, bound } => {
                write!(f, "parameter {value} at index {index} exceeds bound {bound}")
            }
            PdmError::BadVarianceFraction { value } => {
                write!(f, "variance fraction {value} outside (0,1]")
            }
        }
    }
}

/// Mode coordinates of a shape in the model basis.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeParams(pub Vec<f64>);

impl ShapeParams {
    pub fn zeros(len: usize) -> Self {
        ShapeParams(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointDistributionModel {
    mean: ShapeVector,
    /// 3N x l, orthonormal columns, one per retained mode.
    modes: DMatrix<f64>,
    /// Non-increasing, all positive.
    eigenvalues: Vec<f64>,
    beta: f64,
    training_count: usize,
}

impl PointDistributionModel {
    /// Builds the model from aligned shapes, keeping the smallest mode count
    /// whose cumulative eigenvalue share reaches `variance_fraction`.
    pub fn build(
        aligned: &[ShapeVector],
        variance_fraction: f64,
        beta: f64,
    ) -> Result<Self, PdmError> {
        if aligned.len() < 2 {
            return Err(PdmError::TooFewShapes { shapes: aligned.len() });
        }
        if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
            return Err(PdmError::BadVarianceFraction {
                value: variance_fraction,
            });
        }
        let dim = aligned[0].coords().len();
        for s in aligned {
            if s.coords().len() != dim {
                return Err(PdmError::LengthMismatch {
                    expected: dim,
                    got: s.coords().len(),
                });
            }
        }
        let m = aligned.len();
        let mut mean = vec![0.0; dim];
        for s in aligned {
            for (acc, x) in mean.iter_mut().zip(s.coords()) {
                *acc += x;
            }
        }
        for acc in mean.iter_mut() {
            *acc /= m as f64;
        }
        let centered = DMatrix::from_fn(dim, m, |r, c| aligned[c].coords()[r] - mean[r]);
        let svd = centered.svd(true, false);
        let u = svd.u.expect("svd requested u");
        let sv = svd.singular_values;

        // Order modes by decreasing eigenvalue (stable on ties).
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| {
            sv[b].partial_cmp(&sv[a]).unwrap().then(a.cmp(&b))
        });
        let rank_cap = dim.min(m - 1);
        let lead = sv[order[0]] * sv[order[0]] / (m as f64 - 1.0);
        if lead <= 0.0 {
            return Err(PdmError::NoModes);
        }
        let mut eigenvalues = Vec::new();
        let mut kept_columns = Vec::new();
        for &j in order.iter().take(rank_cap) {
            let lambda = sv[j] * sv[j] / (m as f64 - 1.0);
            if lambda < DEGENERATE_MODE_RATIO * lead {
                break;
            }
            eigenvalues.push(lambda);
            kept_columns.push(j);
        }
        let total: f64 = eigenvalues.iter().sum();
        let mut l = eigenvalues.len();
        let mut cum = 0.0;
        for (i, lambda) in eigenvalues.iter().enumerate() {
            cum += lambda;
            if cum >= variance_fraction * total - 1e-12 * total {
                l = i + 1;
                break;
            }
        }
        eigenvalues.truncate(l);
        let mut modes = DMatrix::zeros(dim, l);
        for (out_col, &in_col) in kept_columns.iter().take(l).enumerate() {
            let col = u.column(in_col);
            // Sign convention: largest-magnitude entry positive.
            let mut pivot = 0;
            for r in 1..dim {
                if col[r].abs() > col[pivot].abs() {
                    pivot = r;
                }
            }
            let flip = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
            for r in 0..dim {
                modes[(r, out_col)] = flip * col[r];
            }
        }
        Ok(PointDistributionModel {
            mean: ShapeVector::new(mean),
            modes,
            eigenvalues,
            beta,
            training_count: m,
        })
    }

    /// Reassembles a model from stored parts, revalidating basic invariants.
    pub fn from_parts(
        mean: ShapeVector,
        modes: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        beta: f64,
        training_count: usize,
    ) -> Result<Self, PdmError> {
        if modes.nrows() != mean.coords().len() {
            return Err(PdmError::LengthMismatch {
                expected: mean.coords().len(),
                got: modes.nrows(),
            });
        }
        if modes.ncols() != eigenvalues.len() || eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(PdmError::NoModes);
        }
        Ok(PointDistributionModel {
            mean,
            modes,
            eigenvalues,
            beta,
            training_count,
        })
    }

    pub fn mean_shape(&self) -> &ShapeVector {
        &self.mean
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mode(&self, j: usize) -> DVectorView<'_, f64> {
        self.modes.column(j)
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn training_count(&self) -> usize {
        self.training_count
    }

    pub fn point_count(&self) -> usize {
        self.mean.point_count()
    }

    /// Cumulative eigenvalue fraction per mode count, for reporting.
    pub fn cumulative_variance(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        let mut cum = 0.0;
        self.eigenvalues
            .iter()
            .map(|l| {
                cum += l;
                cum / total
            })
            .collect()
    }

    /// Linear generative model: mean + modes * b. Missing trailing
    /// coordinates are treated as zero.
    pub fn synthesize(&self, params: &ShapeParams) -> Result<ShapeVector, PdmError> {
        if params.len() > self.mode_count() {
            return Err(PdmError::TooManyParams {
                got: params.len(),
                modes: self.mode_count(),
            });
        }
        let mut out = self.mean.coords().to_vec();
        for (j, &b) in params.0.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let col = self.modes.column(j);
            for (r, o) in out.iter_mut().enumerate() {
                *o += b * col[r];
            }
        }
        Ok(ShapeVector::new(out))
    }

    /// Projection coefficients of the mean-centred shape; no clamping.
    pub fn project(&self, shape: &ShapeVector) -> Result<ShapeParams, PdmError> {
        if shape.coords().len() != self.mean.coords().len() {
            return Err(PdmError::LengthMismatch {
                expected: self.mean.coords().len(),
                got: shape.coords().len(),
            });
        }
        let centered = DVector::from_fn(shape.coords().len(), |r, _| {
            shape.coords()[r] - self.mean.coords()[r]
        });
        let b = self.modes.transpose() * centered;
        Ok(ShapeParams(b.iter().copied().collect()))
    }

    /// Clips each coordinate into [-beta sqrt(lambda), +beta sqrt(lambda)].
    pub fn clamp(&self, params: &ShapeParams) -> ShapeParams {
        assert!(
            params.len() <= self.mode_count(),
            "params longer than mode count"
        );
        ShapeParams(
            params
                .0
                .iter()
                .enumerate()
                .map(|(i, &b)| {
                    let bound = self.beta * sqrt(self.eigenvalues[i]);
                    b.clamp(-bound, bound)
                })
                .collect(),
        )
    }

    /// Maps clamped parameters onto [0,1] per mode:
    /// `(b + beta sqrt(lambda)) / (2 beta sqrt(lambda))`.
    pub fn encode_unit(&self, params: &ShapeParams) -> Result<Vec<f64>, PdmError> {
        if params.len() > self.mode_count() {
            return Err(PdmError::TooManyParams {
                got: params.len(),
                modes: self.mode_count(),
            });
        }
        params
            .0
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let bound = self.beta * sqrt(self.eigenvalues[i]);
                if b.abs() > bound * (1.0 + 1e-12) {
                    return Err(PdmError::NotClamped {
                        index: i,
                        value: b,
                        bound,
                    });
                }
                Ok(((b + bound) / (2.0 * bound)).clamp(0.0, 1.0))
            })
            .collect()
    }

    /// Inverse of [`Self::encode_unit`].
    pub fn decode_unit(&self, unit: &[f64]) -> Result<ShapeParams, PdmError> {
        if unit.len() > self.mode_count() {
            return Err(PdmError::TooManyParams {
                got: unit.len(),
                modes: self.mode_count(),
            });
        }
        unit.iter()
            .enumerate()
            .map(|(i, &v)| {
                if !(0.0..=1.0).contains(&v) {
                    return Err(PdmError::UnitValueOutOfRange { index: i, value: v });
                }
                let bound = self.beta * sqrt(self.eigenvalues[i]);
                Ok((2.0 * v - 1.0) * bound)
            })
            .collect::<Result<Vec<f64>, PdmError>>()
            .map(ShapeParams)
    }

    /// Max deviation of the mode basis from orthonormality.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.modes.transpose() * &self.modes;
        let mut defect: f64 = 0.0;
        for r in 0..gram.nrows() {
            for c in 0..gram.ncols() {
                let expect = if r == c { 1.0 } else { 0.0 };
                defect = defect.max((gram[(r, c)] - expect).abs());
            }
        }
        defect
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_cohort(rng: &mut Rng, shapes: usize, points: usize) -> Vec<ShapeVector> {
        (0..shapes)
            .map(|_| ShapeVector::new((0..3 * points).map(|_| rng.normal() * 5.0).collect()))
            .collect()
    }

    #[test]
    fn two_shapes_give_single_mode_with_doubled_eigenvalue() {
        let base = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let dev = vec![0.5, -0.25, 0.75, 0.1, -0.6, 0.3];
        let plus = ShapeVector::new(base.iter().zip(&dev).map(|(b, d)| b + d).collect());
        let minus = ShapeVector::new(base.iter().zip(&dev).map(|(b, d)| b - d).collect());
        let model = PointDistributionModel::build(&[plus, minus], 1.0, DEFAULT_BETA).unwrap();
        assert_eq!(model.mode_count(), 1);
        let dev_norm2: f64 = dev.iter().map(|d| d * d).sum();
        assert!((model.eigenvalues()[0] - 2.0 * dev_norm2).abs() < 1e-12);
        // Mode is the unit deviation direction up to the fixed sign rule.
        let unit: Vec<f64> = dev.iter().map(|d| d / libm::sqrt(dev_norm2)).collect();
        let col = model.mode(0);
        let dot: f64 = unit.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_shapes_have_no_modes() {
        let s = ShapeVector::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let cohort = [s.clone(), s.clone(), s.clone(), s.clone(), s];
        assert_eq!(
            PointDistributionModel::build(&cohort, 0.997, DEFAULT_BETA),
            Err(PdmError::NoModes)
        );
    }

    #[test]
    fn fewer_than_two_shapes_is_an_error() {
        let s = ShapeVector::new(vec![0.0; 6]);
        assert!(matches!(
            PointDistributionModel::build(&[s], 1.0, DEFAULT_BETA),
            Err(PdmError::TooFewShapes { .. })
        ));
    }

    #[test]
    fn mean_projects_to_zero() {
        let mut rng = Rng::new(20);
        let cohort = random_cohort(&mut rng, 5, 4);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        let b = model.project(model.mean_shape()).unwrap();
        for v in &b.0 {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn synthesize_zero_returns_mean_exactly() {
        let mut rng = Rng::new(21);
        let cohort = random_cohort(&mut rng, 5, 4);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        let s = model.synthesize(&ShapeParams::zeros(model.mode_count())).unwrap();
        assert_eq!(s.coords(), model.mean_shape().coords());
    }

    #[test]
    fn single_mode_synthesis_is_linear() {
        let mut rng = Rng::new(22);
        let cohort = random_cohort(&mut rng, 6, 5);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        let amp = libm::sqrt(model.eigenvalues()[0]);
        let mut params = ShapeParams::zeros(model.mode_count());
        params.0[0] = amp;
        let s = model.synthesize(&params).unwrap();
        for r in 0..s.coords().len() {
            let expect = model.mean_shape().coords()[r] + amp * model.mode(0)[r];
            assert!((s.coords()[r] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_picks_out_mode_coordinates() {
        let mut rng = Rng::new(23);
        let cohort = random_cohort(&mut rng, 6, 5);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        assert!(model.mode_count() >= 2);
        let amp = 2.0 * libm::sqrt(model.eigenvalues()[1]);
        let mut params = ShapeParams::zeros(model.mode_count());
        params.0[1] = amp;
        let s = model.synthesize(&params).unwrap();
        let b = model.project(&s).unwrap();
        for (i, v) in b.0.iter().enumerate() {
            let expect = if i == 1 { amp } else { 0.0 };
            assert!((v - expect).abs() < 1e-10, "mode {i}: {v} vs {expect}");
        }
    }

    #[test]
    fn full_rank_round_trip_reproduces_training_shapes() {
        let mut rng = Rng::new(24);
        let cohort = random_cohort(&mut rng, 5, 6);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        for s in &cohort {
            let recon = model.synthesize(&model.project(s).unwrap()).unwrap();
            let err: f64 = crate::align::residual(&recon, s);
            let norm: f64 = s.coords().iter().map(|x| x * x).sum();
            assert!(libm::sqrt(err) <= 1e-8 * libm::sqrt(norm));
        }
    }

    #[test]
    fn out_of_span_residual_is_orthogonal_to_modes() {
        let mut rng = Rng::new(25);
        let cohort = random_cohort(&mut rng, 4, 6);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        for _ in 0..10 {
            let probe =
                ShapeVector::new((0..cohort[0].coords().len()).map(|_| rng.normal()).collect());
            let recon = model.synthesize(&model.project(&probe).unwrap()).unwrap();
            for j in 0..model.mode_count() {
                let col = model.mode(j);
                let dot: f64 = probe
                    .coords()
                    .iter()
                    .zip(recon.coords())
                    .zip(col.iter())
                    .map(|((p, r), m)| (p - r) * m)
                    .sum();
                assert!(dot.abs() < 1e-8, "mode {j} dot {dot}");
            }
        }
    }

    #[test]
    fn clamp_clips_to_three_sigma_by_default() {
        let mut rng = Rng::new(26);
        let cohort = random_cohort(&mut rng, 5, 4);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        let sigma1 = libm::sqrt(model.eigenvalues()[0]);
        let mut params = ShapeParams::zeros(model.mode_count());
        params.0[0] = 10.0 * sigma1;
        let clamped = model.clamp(&params);
        assert!((clamped.0[0] - 3.0 * sigma1).abs() < 1e-12);
        // Inside the bounds nothing changes.
        let mut small = ShapeParams::zeros(model.mode_count());
        small.0[0] = 0.5 * sigma1;
        assert_eq!(model.clamp(&small), small);
    }

    #[test]
    fn zero_beta_clamps_everything_to_zero() {
        let mut rng = Rng::new(27);
        let cohort = random_cohort(&mut rng, 5, 4);
        let model = PointDistributionModel::build(&cohort, 1.0, 0.0).unwrap();
        let mut params = ShapeParams::zeros(model.mode_count());
        params.0[0] = 1.0;
        let clamped = model.clamp(&params);
        assert!(clamped.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_encoding_maps_bounds_to_zero_half_one() {
        let mut rng = Rng::new(28);
        let cohort = random_cohort(&mut rng, 5, 4);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        let l = model.mode_count();
        let zero = model.encode_unit(&ShapeParams::zeros(l)).unwrap();
        assert!(zero.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let mut top = ShapeParams::zeros(l);
        top.0[0] = model.beta() * libm::sqrt(model.eigenvalues()[0]);
        let encoded = model.encode_unit(&top).unwrap();
        assert!((encoded[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unit_round_trip_is_tight() {
        let mut rng = Rng::new(29);
        let cohort = random_cohort(&mut rng, 6, 5);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        let l = model.mode_count();
        for _ in 0..50 {
            let raw = ShapeParams(
                (0..l)
                    .map(|i| {
                        let bound = model.beta() * libm::sqrt(model.eigenvalues()[i]);
                        rng.uniform_in(-bound, bound)
                    })
                    .collect(),
            );
            let b = model.clamp(&raw);
            let back = model.decode_unit(&model.encode_unit(&b).unwrap()).unwrap();
            for (x, y) in b.0.iter().zip(&back.0) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decode_rejects_values_outside_unit_interval() {
        let mut rng = Rng::new(30);
        let cohort = random_cohort(&mut rng, 5, 4);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        assert!(matches!(
            model.decode_unit(&[1.5]),
            Err(PdmError::UnitValueOutOfRange { .. })
        ));
    }

    #[test]
    fn modes_are_orthonormal() {
        let mut rng = Rng::new(31);
        let cohort = random_cohort(&mut rng, 8, 6);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        assert!(model.orthonormality_defect() < 1e-8);
    }

    #[test]
    fn eigenvalue_sum_matches_covariance_trace() {
        let mut rng = Rng::new(32);
        let cohort = random_cohort(&mut rng, 7, 5);
        let model = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        let mean = model.mean_shape();
        let trace: f64 = cohort
            .iter()
            .map(|s| crate::align::residual(s, mean))
            .sum::<f64>()
            / (cohort.len() as f64 - 1.0);
        let sum: f64 = model.eigenvalues().iter().sum();
        assert!((sum - trace).abs() / trace < 1e-8, "{sum} vs {trace}");
    }

    #[test]
    fn truncated_reconstruction_error_equals_discarded_eigenvalues() {
        let mut rng = Rng::new(33);
        let cohort = random_cohort(&mut rng, 9, 5);
        let full = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        // Keep just enough modes for 60 % of the variance.
        let partial = PointDistributionModel::build(&cohort, 0.6, DEFAULT_BETA).unwrap();
        let l = partial.mode_count();
        assert!(l < full.mode_count());
        let discarded: f64 = full.eigenvalues()[l..].iter().sum();
        let recon_err: f64 = cohort
            .iter()
            .map(|s| {
                let recon = partial.synthesize(&partial.project(s).unwrap()).unwrap();
                crate::align::residual(&recon, s)
            })
            .sum::<f64>()
            / (cohort.len() as f64 - 1.0);
        assert!(
            (recon_err - discarded).abs() / discarded < 1e-8,
            "{recon_err} vs {discarded}"
        );
    }

    #[test]
    fn variance_fraction_picks_minimal_mode_count() {
        let mut rng = Rng::new(34);
        let cohort = random_cohort(&mut rng, 10, 6);
        let full = PointDistributionModel::build(&cohort, 1.0, DEFAULT_BETA).unwrap();
        let vf = 0.9;
        let partial = PointDistributionModel::build(&cohort, vf, DEFAULT_BETA).unwrap();
        let total: f64 = full.eigenvalues().iter().sum();
        let l = partial.mode_count();
        let cum_l: f64 = full.eigenvalues()[..l].iter().sum();
        assert!(cum_l / total >= vf - 1e-12);
        if l > 1 {
            let cum_prev: f64 = full.eigenvalues()[..l - 1].iter().sum();
            assert!(cum_prev / total < vf);
        }
    }

    #[test]
    fn builds_are_bit_reproducible() {
        let mut rng = Rng::new(35);
        let cohort = random_cohort(&mut rng, 6, 5);
        let a = PointDistributionModel::build(&cohort, 0.997, DEFAULT_BETA).unwrap();
        let b = PointDistributionModel::build(&cohort, 0.997, DEFAULT_BETA).unwrap();
        assert_eq!(a, b);
    }
}
