//! Image intensity/spatial normalization and metadata encoding.
//!
//! Slice intensities are saturated at the 99.8th percentile (linear
//! interpolation between order statistics) and mapped to [0,1]. Regions of
//! interest are resampled on a rotated 2 mm grid with bilinear
//! interpolation and zero fill outside the source image. Metadata becomes
//! an 11-vector in [0,1]: eight min-max scaled continuous fields followed
//! by sex, smoking, and alcohol.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fmath::{cos, floor, sin};

pub const SAX_SLICE_COUNT: usize = 9;
pub const SAX_SIZE: usize = 64;
pub const LAX_HEIGHT: usize = 80;
pub const LAX_RAW_WIDTH: usize = 60;
pub const LAX_WIDTH: usize = 80;
pub const STANDARD_SPACING_MM: f64 = 2.0;
pub const SATURATE_PERCENTILE: f64 = 99.8;
pub const METADATA_LEN: usize = 11;
pub const CONTINUOUS_FIELDS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub enum PreprocessError {
    EmptyGrid,
    NonFiniteValue,
    NonPositiveSpacing,
    WrongSize { expected: (usize, usize), got: (usize, usize) },
    WrongSliceCount { expected: usize, got: usize },
    BadBounds { field: usize },
}

impl fmt::Display for PreprocessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreprocessError::EmptyGrid => write!(f, "image grid is empty"),
            PreprocessError::NonFiniteValue => write!(f, "image contains a non-finite value"),
            PreprocessError::NonPositiveSpacing => write!(f, "pixel spacing must be positive"),
            PreprocessError::WrongSize { expected, got } => {
                write!(f, "image is {}x{}, expected {}x{}", got.0, got.1, expected.0, expected.1)
            }
            PreprocessError::WrongSliceCount { expected, got } => {
                write!(f, "stack has {got} slices, expected {expected}")
            }
            PreprocessError::BadBounds { field } => {
                write!(f, "scaling bounds for continuous field {field} have max <= min")
            }
        }
    }
}

/// Row-major 2D grid of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2 {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Grid2 {
    pub fn zeros(height: usize, width: usize) -> Self {
        Grid2 {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Grid2 { height, width, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.width + c] = v;
    }
}

/// Intensity-normalized slice on an isotropic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceImage {
    pub pixels: Grid2,
    pub spacing_mm: f64,
}

impl SliceImage {
    pub fn unit_range_defect(&self) -> f64 {
        self.pixels
            .data
            .iter()
            .map(|&v| (-v).max(v - 1.0).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Nine-slice short-axis stack, 64x64 at 2 mm.
#[derive(Clone, Debug, PartialEq)]
pub struct SaxStack {
    slices: Vec<SliceImage>,
}

impl SaxStack {
    pub fn new(slices: Vec<SliceImage>) -> Result<Self, PreprocessError> {
        if slices.len() != SAX_SLICE_COUNT {
            return Err(PreprocessError::WrongSliceCount {
                expected: SAX_SLICE_COUNT,
                got: slices.len(),
            });
        }
        for s in &slices {
            if s.pixels.height != SAX_SIZE || s.pixels.width != SAX_SIZE {
                return Err(PreprocessError::WrongSize {
                    expected: (SAX_SIZE, SAX_SIZE),
                    got: (s.pixels.height, s.pixels.width),
                });
            }
        }
        Ok(SaxStack { slices })
    }

    pub fn slices(&self) -> &[SliceImage] {
        &self.slices
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sex {
    Female,
    Male,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoking {
    Never,
    Previous,
    Current,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alcohol {
    No,
    Yes,
}

/// Raw per-subject metadata (Table-style fields).
#[derive(Clone, Debug, PartialEq)]
pub struct MetadataRecord {
    pub age_years: f64,
    pub weight_kg: f64,
    pub height_cm: f64,
    pub bmi: f64,
    pub bsa_m2: f64,
    pub heart_rate_bpm: f64,
    pub diastolic_bp: f64,
    pub systolic_bp: f64,
    pub sex: Sex,
    pub smoking: Smoking,
    pub alcohol: Alcohol,
}

impl MetadataRecord {
    pub fn continuous(&self) -> [f64; CONTINUOUS_FIELDS] {
        [
            self.age_years,
            self.weight_kg,
            self.height_cm,
            self.bmi,
            self.bsa_m2,
            self.heart_rate_bpm,
            self.diastolic_bp,
            self.systolic_bp,
        ]
    }
}

/// Min/max scaling bounds per continuous field, taken from the training
/// cohort and persisted with the network checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct MetadataBounds {
    pub min: [f64; CONTINUOUS_FIELDS],
    pub max: [f64; CONTINUOUS_FIELDS],
}

impl MetadataBounds {
    pub fn from_records<'a>(records: impl Iterator<Item = &'a MetadataRecord>) -> Self {
        let mut min = [f64::INFINITY; CONTINUOUS_FIELDS];
        let mut max = [f64::NEG_INFINITY; CONTINUOUS_FIELDS];
        for rec in records {
            for (k, v) in rec.continuous().iter().enumerate() {
                min[k] = min[k].min(*v);
                max[k] = max[k].max(*v);
            }
        }
        MetadataBounds { min, max }
    }
}

/// 11 reals in [0,1]: continuous fields then sex, smoking, alcohol.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedMetadata(pub [f64; METADATA_LEN]);

/// Network-ready subject: image tensors, encoded metadata, and (for
/// training) the unit-encoded reference shape parameters.
#[derive(Clone, Debug)]
pub struct SubjectSample {
    pub sax: SaxStack,
    pub lax: SliceImage,
    pub meta: EncodedMetadata,
    pub reference_params: Option<Vec<f64>>,
}

/// Percentile by linear interpolation between order statistics.
pub fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (n as f64 - 1.0);
    let lo = floor(rank) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Saturates the top 0.2 % of intensities and scales to [0,1].
///
/// A constant image maps to all zeros.
pub fn intensity_normalize(raw: &Grid2, spacing_mm: f64) -> Result<SliceImage, PreprocessError> {
    if raw.data.is_empty() {
        return Err(PreprocessError::EmptyGrid);
    }
    if raw.data.iter().any(|v| !v.is_finite()) {
        return Err(PreprocessError::NonFiniteValue);
    }
    if spacing_mm <= 0.0 {
        return Err(PreprocessError::NonPositiveSpacing);
    }
    let mut sorted = raw.data.clone();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = sorted[0];
    let cap = percentile_linear(&sorted, SATURATE_PERCENTILE);
    let range = cap - lo;
    let data = if range <= 0.0 {
        vec![0.0; raw.data.len()]
    } else {
        raw.data
            .iter()
            .map(|&v| (v.min(cap) - lo) / range)
            .collect()
    };
    Ok(SliceImage {
        pixels: Grid2 {
            height: raw.height,
            width: raw.width,
            data,
        },
        spacing_mm,
    })
}

/// Resamples a rotated region of interest on an isotropic output grid.
///
/// Output pixel (i, j) is sampled at
/// `center + R(angle) * ((j - (w-1)/2) * s, (i - (h-1)/2) * s)` by bilinear
/// interpolation; samples outside the source are zero. Input pixel (r, c)
/// sits at mm coordinates (c * in_spacing, r * in_spacing).
#[allow(clippy::too_many_arguments)]
pub fn extract_roi(
    input: &Grid2,
    in_spacing: f64,
    center_mm: (f64, f64),
    angle_rad: f64,
    out_height: usize,
    out_width: usize,
    out_spacing: f64,
) -> Result<SliceImage, PreprocessError> {
    if in_spacing <= 0.0 || out_spacing <= 0.0 {
        return Err(PreprocessError::NonPositiveSpacing);
    }
    if input.data.is_empty() {
        return Err(PreprocessError::EmptyGrid);
    }
    let (ca, sa) = (cos(angle_rad), sin(angle_rad));
    let half_w = (out_width as f64 - 1.0) / 2.0;
    let half_h = (out_height as f64 - 1.0) / 2.0;
    let pixels = Grid2::from_fn(out_height, out_width, |i, j| {
        let u = (j as f64 - half_w) * out_spacing;
        let v = (i as f64 - half_h) * out_spacing;
        let x = center_mm.0 + ca * u - sa * v;
        let y = center_mm.1 + sa * u + ca * v;
        bilinear(input, x / in_spacing, y / in_spacing)
    });
    Ok(SliceImage {
        pixels,
        spacing_mm: out_spacing,
    })
}

/// Bilinear sample at fractional pixel coordinates (column, row); zero
/// outside the grid.
fn bilinear(grid: &Grid2, col: f64, row: f64) -> f64 {
    let c0 = floor(col);
    let r0 = floor(row);
    let fc = col - c0;
    let fr = row - r0;
    let mut acc = 0.0;
    for (dr, wr) in [(0.0, 1.0 - fr), (1.0, fr)] {
        for (dc, wc) in [(0.0, 1.0 - fc), (1.0, fc)] {
            let w = wr * wc;
            if w == 0.0 {
                continue;
            }
            let r = r0 + dr;
            let c = c0 + dc;
            if r >= 0.0 && c >= 0.0 && (r as usize) < grid.height && (c as usize) < grid.width {
                acc += w * grid.get(r as usize, c as usize);
            }
        }
    }
    acc
}

/// Zero-pads an 80x60 long-axis image to 80x80 (10 columns each side).
pub fn pad_lax(img: &SliceImage) -> Result<SliceImage, PreprocessError> {
    if img.pixels.height != LAX_HEIGHT || img.pixels.width != LAX_RAW_WIDTH {
        return Err(PreprocessError::WrongSize {
            expected: (LAX_HEIGHT, LAX_RAW_WIDTH),
            got: (img.pixels.height, img.pixels.width),
        });
    }
    let pad = (LAX_WIDTH - LAX_RAW_WIDTH) / 2;
    let mut out = Grid2::zeros(LAX_HEIGHT, LAX_WIDTH);
    for r in 0..LAX_HEIGHT {
        for c in 0..LAX_RAW_WIDTH {
            out.set(r, c + pad, img.pixels.get(r, c));
        }
    }
    Ok(SliceImage {
        pixels: out,
        spacing_mm: img.spacing_mm,
    })
}

/// Scales a metadata record into [0,1]^11.
///
/// Continuous fields are min-max scaled against the training bounds and
/// clipped; sex maps female=0/male=1, smoking never=0/previous=0.5/
/// current=1, alcohol no=0/yes=1.
pub fn encode_metadata(
    rec: &MetadataRecord,
    bounds: &MetadataBounds,
) -> Result<EncodedMetadata, PreprocessError> {
    let mut out = [0.0; METADATA_LEN];
    let values = rec.continuous();
    for k in 0..CONTINUOUS_FIELDS {
        if bounds.max[k] <= bounds.min[k] {
            return Err(PreprocessError::BadBounds { field: k });
        }
        out[k] = ((values[k] - bounds.min[k]) / (bounds.max[k] - bounds.min[k])).clamp(0.0, 1.0);
    }
    out[8] = match rec.sex {
        Sex::Female => 0.0,
        Sex::Male => 1.0,
    };
    out[9] = match rec.smoking {
        Smoking::Never => 0.0,
        Smoking::Previous => 0.5,
        Smoking::Current => 1.0,
    };
    out[10] = match rec.alcohol {
        Alcohol::No => 0.0,
        Alcohol::Yes => 1.0,
    };
    Ok(EncodedMetadata(out))
}
