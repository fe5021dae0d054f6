//! Deterministic synthetic biventricular cohort with known ground truth.
//!
//! Each subject is built from four latent values in [-1, 1]: global scale,
//! LV wall thickness, long-axis length, and RV breadth. The LV is a pair of
//! concentric ellipsoid shells (watertight, fixed tessellation), the RV an
//! open kidney-profile tube with two planar boundary rings. Analytic
//! volumes of all regions are available as oracles. Slice images label the
//! LV blood pool 0.9, myocardium 0.5, and background 0.1 by point-in-mesh
//! ray casting; the RV is left unrendered so its breadth is recoverable
//! only from the metadata, which encodes it through the heart rate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::Point3;

use crate::cpd::LabeledContours;
use crate::fmath::{cos, powf, sin, sqrt};
use crate::mesh::{primitives::uv_ellipsoid, BiventricularShape, Mesh, MeshError};
use crate::preprocess::{
    intensity_normalize, pad_lax, Alcohol, Grid2, MetadataRecord, SaxStack, Sex, SliceImage,
    Smoking, LAX_HEIGHT, LAX_RAW_WIDTH, SAX_SIZE, SAX_SLICE_COUNT, STANDARD_SPACING_MM,
};
use crate::rng::Rng;

// Base geometry (mm) before latent modulation.
const ENDO_RADIUS: f64 = 22.0;
const ENDO_LENGTH: f64 = 38.0;
const WALL_BASE: f64 = 9.0;
const WALL_APEX_FACTOR: f64 = 0.75;
const RV_CENTER_X: f64 = -68.0;
const RV_RADIUS: f64 = 24.0;
const RV_LENGTH: f64 = 42.0;
const RV_KAPPA: f64 = 0.55;
const RV_ZLO_FRAC: f64 = -0.75;
const RV_ZHI_FRAC: f64 = 0.62;

// Fixed tessellation: identical topology for every subject.
const LV_N_LAT: usize = 24;
const LV_N_LON: usize = 32;
const RV_N_RINGS: usize = 22;
const RV_N_SEGS: usize = 28;

const BLOOD_POOL: f64 = 0.9;
const MYOCARDIUM: f64 = 0.5;
const BACKGROUND: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub enum PhantomError {
    NonFiniteLatent,
    SelfIntersecting { detail: String },
    Mesh(MeshError),
    Render(crate::preprocess::PreprocessError),
}

impl fmt::Display for PhantomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhantomError::NonFiniteLatent => write!(f, "latent vector has non-finite entries"),
            PhantomError::SelfIntersecting { detail } => {
                write!(f, "latents produce self-intersecting anatomy: {detail}")
            }
            PhantomError::Mesh(e) => write!(f, "{e}"),
            PhantomError::Render(e) => write!(f, "{e}"),
        }
    }
}

impl From<MeshError> for PhantomError {
    fn from(e: MeshError) -> Self {
        PhantomError::Mesh(e)
    }
}

impl From<crate::preprocess::PreprocessError> for PhantomError {
    fn from(e: crate::preprocess::PreprocessError) -> Self {
        PhantomError::Render(e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomConfig {
    pub subject_count: usize,
    /// Sensitivities of [scale, wall, long-axis, RV breadth] to the unit
    /// latents.
    pub latent_amplitudes: [f64; 4],
    /// Gaussian image noise level, applied before normalization.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            subject_count: 234,
            latent_amplitudes: [0.05, 0.30, 0.10, 0.25],
            noise_sigma: 0.05,
            seed: 7,
        }
    }
}

/// Analytic description of one subject's anatomy.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomGeometry {
    pub scale: f64,
    pub endo_semi: [f64; 3],
    pub epi_semi: [f64; 3],
    pub rv_center_x: f64,
    pub rv_radius: f64,
    pub rv_kappa: f64,
    pub rv_half_length: f64,
    pub rv_zlo: f64,
    pub rv_zhi: f64,
}

impl PhantomGeometry {
    pub fn endo_volume_ml(&self) -> f64 {
        ellipsoid_volume(self.endo_semi)
    }

    pub fn epi_volume_ml(&self) -> f64 {
        ellipsoid_volume(self.epi_semi)
    }

    pub fn myocardial_mass_g(&self) -> f64 {
        (self.epi_volume_ml() - self.endo_volume_ml()) * crate::mesh::MYOCARDIAL_DENSITY_G_PER_ML
    }

    /// Volume of the capped RV cavity: the kidney-profile cross-section
    /// area integrates in closed form.
    pub fn rv_volume_ml(&self) -> f64 {
        let c = self.rv_half_length;
        let anti = |z: f64| z - z * z * z / (3.0 * c * c);
        let profile_integral = anti(self.rv_zhi) - anti(self.rv_zlo);
        let area_factor = core::f64::consts::PI
            * self.rv_radius
            * self.rv_radius
            * (1.0 + self.rv_kappa * self.rv_kappa / 2.0);
        area_factor * profile_integral / crate::mesh::MM3_PER_ML
    }

    fn rv_profile(&self, z: f64) -> f64 {
        let t = z / self.rv_half_length;
        sqrt((1.0 - t * t).max(0.0))
    }

    /// Radius of the RV cross-section at height z and azimuth phi
    /// (phi = 0 points toward the LV).
    pub fn rv_rho(&self, z: f64, phi: f64) -> f64 {
        self.rv_radius * self.rv_profile(z) * (1.0 - self.rv_kappa * cos(phi))
    }
}

fn ellipsoid_volume(semi: [f64; 3]) -> f64 {
    4.0 / 3.0 * core::f64::consts::PI * semi[0] * semi[1] * semi[2] / crate::mesh::MM3_PER_ML
}

/// Resolves unit latents into concrete anatomy, rejecting combinations
/// that would self-intersect.
pub fn phantom_geometry(
    config: &PhantomConfig,
    latents: &[f64; 4],
) -> Result<PhantomGeometry, PhantomError> {
    if latents.iter().any(|v| !v.is_finite()) {
        return Err(PhantomError::NonFiniteLatent);
    }
    let [amp_scale, amp_wall, amp_len, amp_rv] = config.latent_amplitudes;
    let scale = 1.0 + amp_scale * latents[0];
    let wall = WALL_BASE * (1.0 + amp_wall * latents[1]);
    let endo_c = ENDO_LENGTH * (1.0 + amp_len * latents[2]);
    let rv_radius = RV_RADIUS * (1.0 + amp_rv * latents[3]);

    if scale <= 0.2 {
        return Err(PhantomError::SelfIntersecting {
            detail: format!("global scale {scale:.3} collapses the anatomy"),
        });
    }
    if wall < 0.5 {
        return Err(PhantomError::SelfIntersecting {
            detail: format!("wall thickness {wall:.3} mm leaves no myocardium"),
        });
    }
    if endo_c < 5.0 {
        return Err(PhantomError::SelfIntersecting {
            detail: format!("long axis {endo_c:.3} mm collapses the cavity"),
        });
    }
    let geometry = PhantomGeometry {
        scale,
        endo_semi: [ENDO_RADIUS * scale, ENDO_RADIUS * scale, endo_c * scale],
        epi_semi: [
            (ENDO_RADIUS + wall) * scale,
            (ENDO_RADIUS + wall) * scale,
            (endo_c + WALL_APEX_FACTOR * wall) * scale,
        ],
        rv_center_x: RV_CENTER_X * scale,
        rv_radius: rv_radius * scale,
        rv_kappa: RV_KAPPA,
        rv_half_length: RV_LENGTH * scale,
        rv_zlo: RV_ZLO_FRAC * RV_LENGTH * scale,
        rv_zhi: RV_ZHI_FRAC * RV_LENGTH * scale,
    };
    // The RV must stay clear of the epicardium.
    let rv_inner_edge = geometry.rv_center_x + (1.0 - geometry.rv_kappa) * geometry.rv_radius;
    let epi_edge = -geometry.epi_semi[0];
    if rv_inner_edge >= epi_edge - 1.0 {
        return Err(PhantomError::SelfIntersecting {
            detail: format!(
                "RV edge at {rv_inner_edge:.1} mm reaches the epicardium at {epi_edge:.1} mm"
            ),
        });
    }
    Ok(geometry)
}

/// Builds the biventricular mesh for one latent vector. The tessellation is
/// fixed, so every generated shape shares topology and point
/// correspondence.
pub fn make_phantom(
    config: &PhantomConfig,
    latents: &[f64; 4],
) -> Result<BiventricularShape, PhantomError> {
    let geometry = phantom_geometry(config, latents)?;
    let endo = uv_ellipsoid(Point3::origin(), geometry.endo_semi, LV_N_LAT, LV_N_LON);
    let epi = uv_ellipsoid(Point3::origin(), geometry.epi_semi, LV_N_LAT, LV_N_LON);
    let endo_count = endo.vertices().len();
    let mut vertices = endo.vertices().to_vec();
    vertices.extend_from_slice(epi.vertices());
    let mut faces = endo.faces().to_vec();
    faces.extend(epi.faces().iter().map(|f| {
        [
            f[0] + endo_count as u32,
            f[1] + endo_count as u32,
            f[2] + endo_count as u32,
        ]
    }));
    let lv = Mesh::new(vertices, faces)?;
    let rv = rv_tube(&geometry)?;
    Ok(BiventricularShape::new(lv, rv, endo_count)?)
}

fn rv_tube(geometry: &PhantomGeometry) -> Result<Mesh, MeshError> {
    let mut vertices = Vec::with_capacity(RV_N_RINGS * RV_N_SEGS);
    for ring in 0..RV_N_RINGS {
        let z = geometry.rv_zlo
            + (geometry.rv_zhi - geometry.rv_zlo) * ring as f64 / (RV_N_RINGS - 1) as f64;
        for seg in 0..RV_N_SEGS {
            let phi = 2.0 * core::f64::consts::PI * seg as f64 / RV_N_SEGS as f64;
            let rho = geometry.rv_rho(z, phi);
            vertices.push(Point3::new(
                geometry.rv_center_x + rho * cos(phi),
                rho * sin(phi),
                z,
            ));
        }
    }
    let mut faces = Vec::new();
    for ring in 0..RV_N_RINGS - 1 {
        for seg in 0..RV_N_SEGS {
            let s1 = (seg + 1) % RV_N_SEGS;
            let a = (ring * RV_N_SEGS + seg) as u32;
            let b = (ring * RV_N_SEGS + s1) as u32;
            let c = ((ring + 1) * RV_N_SEGS + s1) as u32;
            let d = ((ring + 1) * RV_N_SEGS + seg) as u32;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(vertices, faces)
}

// ---------------------------------------------------------------------------
// Slice rendering.
// ---------------------------------------------------------------------------

/// x-crossings of the +x ray at (y, z) with a closed mesh; the same
/// jitter-on-graze strategy as the voxelizer.
fn row_crossings(mesh: &Mesh, y: f64, z: f64) -> Vec<f64> {
    for attempt in 0..12u32 {
        let delta = 1e-6 * (attempt * attempt) as f64;
        let angle = 0.754_877_666 * attempt as f64;
        let ry = y + delta * cos(angle);
        let rz = z + delta * sin(angle);
        if let Some(crossings) = try_row(mesh, ry, rz) {
            return crossings;
        }
    }
    Vec::new()
}

fn try_row(mesh: &Mesh, y: f64, z: f64) -> Option<Vec<f64>> {
    let mut out = Vec::new();
    for ti in 0..mesh.faces().len() {
        let [p, q, r] = mesh.triangle(ti);
        let ylo = p.y.min(q.y).min(r.y);
        let yhi = p.y.max(q.y).max(r.y);
        let zlo = p.z.min(q.z).min(r.z);
        let zhi = p.z.max(q.z).max(r.z);
        if y < ylo || y > yhi || z < zlo || z > zhi {
            continue;
        }
        let d1 = (q.y - p.y) * (z - p.z) - (q.z - p.z) * (y - p.y);
        let d2 = (r.y - q.y) * (z - q.z) - (r.z - q.z) * (y - q.y);
        let d3 = (p.y - r.y) * (z - r.z) - (p.z - r.z) * (y - r.y);
        let scale = (yhi - ylo).max(zhi - zlo).max(1.0);
        let eps = 1e-12 * scale * scale;
        let pos = d1 > eps && d2 > eps && d3 > eps;
        let neg = d1 < -eps && d2 < -eps && d3 < -eps;
        if pos || neg {
            let n = (q - p).cross(&(r - p));
            if n.x.abs() <= 1e-12 * n.norm() {
                return None;
            }
            out.push(p.x - (n.y * (y - p.y) + n.z * (z - p.z)) / n.x);
        } else if (d1.abs() <= eps || d2.abs() <= eps || d3.abs() <= eps)
            && ((d1 >= -eps && d2 >= -eps && d3 >= -eps)
                || (d1 <= eps && d2 <= eps && d3 <= eps))
        {
            return None;
        }
    }
    if out.len() % 2 != 0 {
        return None;
    }
    out.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    Some(out)
}

fn inside(crossings: &[f64], x: f64) -> bool {
    crossings.partition_point(|&c| c <= x) % 2 == 1
}

/// The nine SAX plane heights, evenly spanning the LV long axis with an
/// 8 % margin at apex and base.
pub fn sax_plane_heights(shape: &BiventricularShape) -> [f64; SAX_SLICE_COUNT] {
    let epi = shape.lv_epi_mesh();
    let (lo, hi) = epi.bounding_box();
    let margin = 0.08 * (hi.z - lo.z);
    let zmin = lo.z + margin;
    let zmax = hi.z - margin;
    core::array::from_fn(|k| {
        zmin + (zmax - zmin) * k as f64 / (SAX_SLICE_COUNT - 1) as f64
    })
}

/// Renders the SAX stack and padded LAX view: region labels by
/// point-in-mesh tests, seeded Gaussian noise, then per-slice intensity
/// normalization.
pub fn render_slices(
    shape: &BiventricularShape,
    noise_sigma: f64,
    seed: u64,
) -> Result<(SaxStack, SliceImage), PhantomError> {
    let endo = shape.lv_endo_mesh();
    let epi = shape.lv_epi_mesh();
    let center = epi.centroid();
    let mut rng = Rng::derive(seed, 0x51AC);

    let heights = sax_plane_heights(shape);
    let mut slices = Vec::with_capacity(SAX_SLICE_COUNT);
    for &z in &heights {
        let mut raw = Grid2::zeros(SAX_SIZE, SAX_SIZE);
        for i in 0..SAX_SIZE {
            let y = center.y + (i as f64 - (SAX_SIZE as f64 - 1.0) / 2.0) * STANDARD_SPACING_MM;
            let endo_cross = row_crossings(&endo, y, z);
            let epi_cross = row_crossings(&epi, y, z);
            for j in 0..SAX_SIZE {
                let x =
                    center.x + (j as f64 - (SAX_SIZE as f64 - 1.0) / 2.0) * STANDARD_SPACING_MM;
                let label = if inside(&endo_cross, x) {
                    BLOOD_POOL
                } else if inside(&epi_cross, x) {
                    MYOCARDIUM
                } else {
                    BACKGROUND
                };
                raw.set(i, j, label + noise_sigma * rng.normal());
            }
        }
        slices.push(intensity_normalize(&raw, STANDARD_SPACING_MM)?);
    }
    let sax = SaxStack::new(slices)?;

    // 4-chamber-style LAX: the x-z plane through the LV centre, 80 rows of
    // z by 60 columns of x, zero-padded to 80x80.
    let mut raw = Grid2::zeros(LAX_HEIGHT, LAX_RAW_WIDTH);
    let y = center.y;
    for i in 0..LAX_HEIGHT {
        let z = center.z + (i as f64 - (LAX_HEIGHT as f64 - 1.0) / 2.0) * STANDARD_SPACING_MM;
        let endo_cross = row_crossings(&endo, y, z);
        let epi_cross = row_crossings(&epi, y, z);
        for j in 0..LAX_RAW_WIDTH {
            let x =
                center.x + (j as f64 - (LAX_RAW_WIDTH as f64 - 1.0) / 2.0) * STANDARD_SPACING_MM;
            let label = if inside(&endo_cross, x) {
                BLOOD_POOL
            } else if inside(&epi_cross, x) {
                MYOCARDIUM
            } else {
                BACKGROUND
            };
            raw.set(i, j, label + noise_sigma * rng.normal());
        }
    }
    let lax = pad_lax(&intensity_normalize(&raw, STANDARD_SPACING_MM)?)?;
    Ok((sax, lax))
}

// ---------------------------------------------------------------------------
// Contours.
// ---------------------------------------------------------------------------

pub const CONTOUR_POINTS_PER_RING: usize = 40;

/// One labelled contour point with its slice index.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourPoint {
    pub structure: ContourStructure,
    pub slice_index: usize,
    pub point: Point3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContourStructure {
    LvEndo,
    LvEpi,
    Rv,
}

impl ContourStructure {
    pub fn label(&self) -> &'static str {
        match self {
            ContourStructure::LvEndo => "lv_endo",
            ContourStructure::LvEpi => "lv_epi",
            ContourStructure::Rv => "rv",
        }
    }
}

/// Contour rings on the nine SAX planes, sampled from the analytic
/// surfaces the meshes tessellate.
pub fn slice_contours(
    config: &PhantomConfig,
    latents: &[f64; 4],
    shape: &BiventricularShape,
) -> Result<Vec<ContourPoint>, PhantomError> {
    let geometry = phantom_geometry(config, latents)?;
    let heights = sax_plane_heights(shape);
    let mut out = Vec::new();
    let two_pi = 2.0 * core::f64::consts::PI;
    for (slice_index, &z) in heights.iter().enumerate() {
        for (structure, semi) in [
            (ContourStructure::LvEndo, geometry.endo_semi),
            (ContourStructure::LvEpi, geometry.epi_semi),
        ] {
            let t = z / semi[2];
            if t.abs() >= 0.999 {
                continue;
            }
            let g = sqrt(1.0 - t * t);
            for s in 0..CONTOUR_POINTS_PER_RING {
                let phi = two_pi * s as f64 / CONTOUR_POINTS_PER_RING as f64;
                out.push(ContourPoint {
                    structure,
                    slice_index,
                    point: Point3::new(semi[0] * g * cos(phi), semi[1] * g * sin(phi), z),
                });
            }
        }
        if z > geometry.rv_zlo && z < geometry.rv_zhi {
            for s in 0..CONTOUR_POINTS_PER_RING {
                let phi = two_pi * s as f64 / CONTOUR_POINTS_PER_RING as f64;
                let rho = geometry.rv_rho(z, phi);
                out.push(ContourPoint {
                    structure: ContourStructure::Rv,
                    slice_index,
                    point: Point3::new(geometry.rv_center_x + rho * cos(phi), rho * sin(phi), z),
                });
            }
        }
    }
    Ok(out)
}

pub fn contours_by_structure(points: &[ContourPoint]) -> LabeledContours {
    let mut contours = LabeledContours::default();
    for p in points {
        match p.structure {
            ContourStructure::LvEndo => contours.lv_endo.push(p.point),
            ContourStructure::LvEpi => contours.lv_epi.push(p.point),
            ContourStructure::Rv => contours.rv.push(p.point),
        }
    }
    contours
}

// ---------------------------------------------------------------------------
// Metadata.
// ---------------------------------------------------------------------------

/// Metadata correlated with the latents: weight/height/BSA follow the
/// scale latent, heart rate encodes RV breadth (the image-invisible
/// latent), and the remaining fields are seeded noise inside plausible
/// bands.
pub fn sample_metadata(latents: &[f64; 4], seed: u64) -> MetadataRecord {
    let mut rng = Rng::derive(seed, 0x0D47A);
    let mut noise = || rng.uniform_in(-1.0, 1.0);
    let scale = latents[0];
    let rv = latents[3];
    let age_years = 61.0 + 6.0 * noise();
    let weight_kg = 76.0 * (1.0 + 0.13 * scale) + 2.0 * noise();
    let height_cm = 170.0 * (1.0 + 0.045 * scale) + 1.5 * noise();
    let height_m = height_cm / 100.0;
    let bmi = weight_kg / (height_m * height_m);
    let bsa_m2 = 0.007184 * powf(weight_kg, 0.425) * powf(height_cm, 0.725);
    let heart_rate_bpm = 68.0 * (1.0 - 0.10 * rv) + 1.2 * noise();
    let diastolic_bp = 79.0 + 8.0 * noise();
    let systolic_bp = 139.0 + 14.0 * noise();
    let sex = if rng.uniform() < 0.5 { Sex::Female } else { Sex::Male };
    let smoking = match rng.uniform() {
        u if u < 0.55 => Smoking::Never,
        u if u < 0.85 => Smoking::Previous,
        _ => Smoking::Current,
    };
    let alcohol = if rng.uniform() < 0.7 { Alcohol::Yes } else { Alcohol::No };
    MetadataRecord {
        age_years,
        weight_kg,
        height_cm,
        bmi,
        bsa_m2,
        heart_rate_bpm,
        diastolic_bp,
        systolic_bp,
        sex,
        smoking,
        alcohol,
    }
}

// ---------------------------------------------------------------------------
// Subjects.
// ---------------------------------------------------------------------------

/// Everything known about one generated subject.
#[derive(Clone, Debug)]
pub struct PhantomSubject {
    pub index: usize,
    pub latents: [f64; 4],
    pub shape: BiventricularShape,
    pub record: MetadataRecord,
    pub sax: SaxStack,
    pub lax: SliceImage,
    pub contours: Vec<ContourPoint>,
}

/// Generates one subject; all randomness derives from (seed, index), so
/// subjects can be produced independently and in any order.
pub fn generate_subject(
    config: &PhantomConfig,
    index: usize,
) -> Result<PhantomSubject, PhantomError> {
    let mut rng = Rng::derive(config.seed, index as u64);
    let latents: [f64; 4] = core::array::from_fn(|_| rng.uniform_in(-1.0, 1.0));
    let shape = make_phantom(config, &latents)?;
    let render_seed = rng.next_u64();
    let meta_seed = rng.next_u64();
    let (sax, lax) = render_slices(&shape, config.noise_sigma, render_seed)?;
    let record = sample_metadata(&latents, meta_seed);
    let contours = slice_contours(config, &latents, &shape)?;
    Ok(PhantomSubject {
        index,
        latents,
        shape,
        record,
        sax,
        lax,
        contours,
    })
}

/// Train/test split sized like a 6:1 cohort: the test set is the trailing
/// seventh (rounded up).
pub fn split_counts(total: usize) -> (usize, usize) {
    let train = total * 6 / 7;
    (train, total - train)
}

pub fn subject_id(index: usize) -> String {
    format!("s{:04}", index)
}
