//! Shape-agreement metrics and clinical indices.
//!
//! Dice overlap is computed on voxel occupancy grids filled by parity ray
//! casting along +x; rays that graze an edge or vertex are re-cast with a
//! deterministic positive jitter, which makes membership consistent with a
//! half-open box convention. Surface distances are symmetric point-to-
//! triangle distances from mesh vertices, with a pruned search that returns
//! exactly what the exhaustive scan would.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::Point3;
#[cfg(test)]
use nalgebra::Vector3;

use crate::align::{procrustes_pair, AlignError};
use crate::fmath::sqrt;
use crate::mesh::{BiventricularShape, Mesh, MeshError};

pub const DEFAULT_VOXEL_SPACING_MM: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub enum MetricsError {
    NonPositiveSpacing,
    InvalidMesh(MeshError),
    FrameMismatch,
    EmptyMesh,
    TopologyMismatch,
    DegenerateRay { row: (usize, usize) },
    Align(AlignError),
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::NonPositiveSpacing => write!(f, "voxel spacing must be positive"),
            MetricsError::InvalidMesh(e) => write!(f, "mesh not voxelizable: {e}"),
            MetricsError::FrameMismatch => write!(f, "occupancy grids use different frames"),
            MetricsError::EmptyMesh => write!(f, "mesh has no vertices"),
            MetricsError::TopologyMismatch => {
                write!(f, "shapes do not share topology / point correspondence")
            }
            MetricsError::DegenerateRay { row } => {
                write!(f, "ray casting stayed degenerate at row {row:?}")
            }
            MetricsError::Align(e) => write!(f, "alignment failed: {e}"),
        }
    }
}

impl From<MeshError> for MetricsError {
    fn from(e: MeshError) -> Self {
        MetricsError::InvalidMesh(e)
    }
}

impl From<AlignError> for MetricsError {
    fn from(e: AlignError) -> Self {
        MetricsError::Align(e)
    }
}

// ---------------------------------------------------------------------------
// Evaluation alignment.
// ---------------------------------------------------------------------------

/// Rigidly aligns `predicted` onto `reference` using the shared point
/// correspondence; orientation and translation only, never scale.
pub fn align_for_eval(
    predicted: &BiventricularShape,
    reference: &BiventricularShape,
) -> Result<BiventricularShape, MetricsError> {
    if !same_topology(predicted, reference) {
        return Err(MetricsError::TopologyMismatch);
    }
    let t = procrustes_pair(&predicted.to_vector(), &reference.to_vector(), false)?;
    Ok(predicted.map_vertices(|p| t.apply_point(p)))
}

pub fn same_topology(a: &BiventricularShape, b: &BiventricularShape) -> bool {
    a.lv_endo_count() == b.lv_endo_count()
        && a.lv().faces() == b.lv().faces()
        && a.rv().faces() == b.rv().faces()
        && a.lv().vertices().len() == b.lv().vertices().len()
        && a.rv().vertices().len() == b.rv().vertices().len()
}

// ---------------------------------------------------------------------------
// Voxelization and Dice.
// ---------------------------------------------------------------------------

/// Common grid geometry for a pair of occupancy grids. Voxel (i,j,k) has its
/// center at `origin + (i,j,k) * spacing`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFrame {
    pub origin: Point3<f64>,
    pub dims: [usize; 3],
    pub spacing: f64,
}

impl GridFrame {
    /// Frame covering the union bounding box of both meshes with two voxels
    /// of padding on every side.
    pub fn covering(a: &Mesh, b: &Mesh, spacing: f64) -> Result<GridFrame, MetricsError> {
        if spacing <= 0.0 {
            return Err(MetricsError::NonPositiveSpacing);
        }
        if a.vertices().is_empty() || b.vertices().is_empty() {
            return Err(MetricsError::EmptyMesh);
        }
        let (alo, ahi) = a.bounding_box();
        let (blo, bhi) = b.bounding_box();
        let mut dims = [0usize; 3];
        let mut origin = Point3::origin();
        for k in 0..3 {
            let lo = alo[k].min(blo[k]);
            let hi = ahi[k].max(bhi[k]);
            origin[k] = lo - 2.0 * spacing;
            dims[k] = ((hi - lo) / spacing) as usize + 5;
        }
        Ok(GridFrame {
            origin,
            dims,
            spacing,
        })
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }
}

#[derive(Clone, Debug)]
pub struct OccupancyGrid {
    pub frame: GridFrame,
    occupied: Vec<bool>,
    count: usize,
}

impl OccupancyGrid {
    pub fn occupied_count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupied[(k * self.frame.dims[1] + j) * self.frame.dims[0] + i]
    }

    /// Occupied volume estimate in mL.
    pub fn volume_ml(&self) -> f64 {
        self.count as f64 * self.frame.spacing * self.frame.spacing * self.frame.spacing
            / crate::mesh::MM3_PER_ML
    }
}

/// Fills the grid by casting +x rays through every (y,z) row of voxel
/// centers. A voxel is occupied when the crossing count at or before its
/// center is odd, which makes slabs behave half-open: a center exactly on
/// the low surface is inside, one on the high surface is not.
pub fn voxelize(mesh: &Mesh, frame: &GridFrame) -> Result<OccupancyGrid, MetricsError> {
    // Reject open, mis-oriented, or flat inputs up front.
    mesh.enclosed_volume()?;
    let [nx, ny, nz] = frame.dims;
    let sp = frame.spacing;

    // Bucket triangles by the rows their (y,z) bounding box can touch.
    let mut row_tris: Vec<Vec<u32>> = vec![Vec::new(); ny * nz];
    for (ti, _) in mesh.faces().iter().enumerate() {
        let [p, q, r] = mesh.triangle(ti);
        let ylo = p.y.min(q.y).min(r.y);
        let yhi = p.y.max(q.y).max(r.y);
        let zlo = p.z.min(q.z).min(r.z);
        let zhi = p.z.max(q.z).max(r.z);
        let j0 = (((ylo - frame.origin.y) / sp - 1.0).max(0.0)) as usize;
        let j1 = ((((yhi - frame.origin.y) / sp) + 1.0) as usize).min(ny - 1);
        let k0 = (((zlo - frame.origin.z) / sp - 1.0).max(0.0)) as usize;
        let k1 = ((((zhi - frame.origin.z) / sp) + 1.0) as usize).min(nz - 1);
        for k in k0..=k1 {
            for j in j0..=j1 {
                row_tris[k * ny + j].push(ti as u32);
            }
        }
    }

    let mut occupied = vec![false; frame.voxel_count()];
    let mut count = 0usize;
    let mut crossings: Vec<f64> = Vec::new();
    for k in 0..nz {
        let z = frame.origin.z + k as f64 * sp;
        for j in 0..ny {
            let y = frame.origin.y + j as f64 * sp;
            let tris = &row_tris[k * ny + j];
            if tris.is_empty() {
                continue;
            }
            // Deterministic jitter escalation for grazing rays; the
            // direction rotates between attempts so no single mesh edge can
            // stay parallel to every retry.
            let mut accepted = false;
            for attempt in 0..12u32 {
                let delta = sp * 1e-5 * (attempt * attempt) as f64;
                let angle = 0.754_877_666 * attempt as f64;
                let ry = y + delta * crate::fmath::cos(angle);
                let rz = z + delta * crate::fmath::sin(angle);
                if ray_crossings(mesh, tris, ry, rz, &mut crossings) {
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                return Err(MetricsError::DegenerateRay { row: (j, k) });
            }
            if crossings.is_empty() {
                continue;
            }
            crossings.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            for i in 0..nx {
                let x = frame.origin.x + i as f64 * sp;
                let below = crossings.partition_point(|&c| c <= x);
                if below % 2 == 1 {
                    occupied[(k * ny + j) * nx + i] = true;
                    count += 1;
                }
            }
        }
    }
    Ok(OccupancyGrid {
        frame: frame.clone(),
        occupied,
        count,
    })
}

/// Collects x-crossings of the +x ray at (y, z); false when the ray grazes
/// an edge, vertex, or in-plane triangle and needs a jitter retry.
fn ray_crossings(mesh: &Mesh, tris: &[u32], y: f64, z: f64, out: &mut Vec<f64>) -> bool {
    out.clear();
    for &ti in tris {
        let [p, q, r] = mesh.triangle(ti as usize);
        let d1 = cross2(q.y - p.y, q.z - p.z, y - p.y, z - p.z);
        let d2 = cross2(r.y - q.y, r.z - q.z, y - q.y, z - q.z);
        let d3 = cross2(p.y - r.y, p.z - r.z, y - r.y, z - r.z);
        let scale = (q.y - p.y).abs().max((q.z - p.z).abs())
            .max((r.y - p.y).abs())
            .max((r.z - p.z).abs())
            .max((y - p.y).abs())
            .max((z - p.z).abs());
        let eps = 1e-12 * scale * scale;
        let pos = d1 > eps && d2 > eps && d3 > eps;
        let neg = d1 < -eps && d2 < -eps && d3 < -eps;
        let on_edge = d1.abs() <= eps || d2.abs() <= eps || d3.abs() <= eps;
        if pos || neg {
            // Projected area equals the x-component of the face normal.
            let area2 = d1 + d2 + d3;
            let n = (q - p).cross(&(r - p));
            if n.x.abs() <= 1e-12 * n.norm() {
                return false;
            }
            let x = p.x - (n.y * (y - p.y) + n.z * (z - p.z)) / n.x;
            debug_assert!(area2.abs() > 0.0);
            out.push(x);
        } else if on_edge {
            // Could be a graze or a miss; only a graze if the point is also
            // inside or on the triangle boundary.
            let inside_closed = d1 >= -eps && d2 >= -eps && d3 >= -eps;
            let inside_closed_neg = d1 <= eps && d2 <= eps && d3 <= eps;
            if inside_closed || inside_closed_neg {
                return false;
            }
        }
    }
    // A watertight surface must be crossed an even number of times.
    out.len().is_multiple_of(2)
}

#[inline]
fn cross2(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Dice overlap 2|A n B| / (|A| + |B|); two empty grids count as identical.
pub fn dice(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64, MetricsError> {
    if a.frame != b.frame {
        return Err(MetricsError::FrameMismatch);
    }
    let mut both = 0usize;
    for (x, y) in a.occupied.iter().zip(&b.occupied) {
        if *x && *y {
            both += 1;
        }
    }
    let total = a.count + b.count;
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / total as f64)
}

/// Voxelizes both meshes on a shared frame and computes their Dice overlap.
pub fn dice_between(a: &Mesh, b: &Mesh, spacing: f64) -> Result<f64, MetricsError> {
    let frame = GridFrame::covering(a, b, spacing)?;
    let ga = voxelize(a, &frame)?;
    let gb = voxelize(b, &frame)?;
    dice(&ga, &gb)
}

// ---------------------------------------------------------------------------
// Surface distances.
// ---------------------------------------------------------------------------

/// Squared distance from a point to a triangle (closest-point regions).
pub fn point_triangle_distance_sq(p: &Point3<f64>, tri: &[Point3<f64>; 3]) -> f64 {
    let [a, b, c] = tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm_squared();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm_squared();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm_squared();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm_squared();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm_squared();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        let bc = c - b;
        return (bp - bc * w).norm_squared();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm_squared()
}

/// Distance from each vertex of `points` to the closest point on any
/// triangle of `surface`, using a bounding-box lower bound to skip
/// triangles that cannot beat the current best. The returned minima are
/// identical to an exhaustive scan.
pub fn directed_vertex_distances(
    points: &[Point3<f64>],
    surface: &Mesh,
) -> Result<Vec<f64>, MetricsError> {
    if points.is_empty() || surface.faces().is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    let tris: Vec<[Point3<f64>; 3]> = (0..surface.faces().len())
        .map(|i| surface.triangle(i))
        .collect();
    let boxes: Vec<(Point3<f64>, Point3<f64>)> = tris
        .iter()
        .map(|t| {
            let mut lo = t[0];
            let mut hi = t[0];
            for v in &t[1..] {
                for k in 0..3 {
                    lo[k] = lo[k].min(v[k]);
                    hi[k] = hi[k].max(v[k]);
                }
            }
            (lo, hi)
        })
        .collect();
    let centroids: Vec<Point3<f64>> = tris
        .iter()
        .map(|t| Point3::from((t[0].coords + t[1].coords + t[2].coords) / 3.0))
        .collect();

    let mut out = Vec::with_capacity(points.len());
    for p in points {
        // Seed with the triangle whose centroid is nearest.
        let mut seed = 0usize;
        let mut seed_d = f64::INFINITY;
        for (i, c) in centroids.iter().enumerate() {
            let d = (p - c).norm_squared();
            if d < seed_d {
                seed_d = d;
                seed = i;
            }
        }
        let mut best = point_triangle_distance_sq(p, &tris[seed]);
        for (i, tri) in tris.iter().enumerate() {
            if i == seed {
                continue;
            }
            let (lo, hi) = &boxes[i];
            let mut lb = 0.0;
            for k in 0..3 {
                let d = (lo[k] - p[k]).max(p[k] - hi[k]).max(0.0);
                lb += d * d;
            }
            if lb >= best {
                continue;
            }
            let d = point_triangle_distance_sq(p, tri);
            if d < best {
                best = d;
            }
        }
        out.push(sqrt(best));
    }
    Ok(out)
}

/// Symmetric surface distances: mean of the two directed means and max of
/// the two directed maxima (Hausdorff).
pub fn surface_distances(a: &Mesh, b: &Mesh) -> Result<(f64, f64), MetricsError> {
    let da = directed_vertex_distances(a.vertices(), b)?;
    let db = directed_vertex_distances(b.vertices(), a)?;
    let mean_a = da.iter().sum::<f64>() / da.len() as f64;
    let mean_b = db.iter().sum::<f64>() / db.len() as f64;
    let max_a = da.iter().cloned().fold(0.0, f64::max);
    let max_b = db.iter().cloned().fold(0.0, f64::max);
    Ok(((mean_a + mean_b) / 2.0, max_a.max(max_b)))
}

// ---------------------------------------------------------------------------
// Clinical indices and cohort evaluation.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClinicalIndices {
    pub lv_volume_ml: f64,
    pub lv_mass_g: f64,
    pub rv_volume_ml: f64,
}

/// LV cavity volume, myocardial mass, and capped-RV cavity volume.
pub fn region_volumes(shape: &BiventricularShape) -> Result<ClinicalIndices, MetricsError> {
    let lv_volume_ml = shape.lv_endo_mesh().enclosed_volume()?;
    let lv_mass_g = shape.myocardial_mass()?;
    let rv_volume_ml = shape.rv().cap_boundaries()?.enclosed_volume()?;
    Ok(ClinicalIndices {
        lv_volume_ml,
        lv_mass_g,
        rv_volume_ml,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ShapeAgreement {
    pub dice_lv_endo: f64,
    pub dice_lv_epi: f64,
    pub dice_rv: f64,
    pub msd_lv_endo: f64,
    pub msd_lv_epi: f64,
    pub msd_rv: f64,
    pub hd_lv_endo: f64,
    pub hd_lv_epi: f64,
    pub hd_rv: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct IndexDeltas {
    pub dlv_vol_abs: f64,
    pub dlv_vol_rel: f64,
    pub dlv_mass_abs: f64,
    pub dlv_mass_rel: f64,
    pub drv_vol_abs: f64,
    pub drv_vol_rel: f64,
}

#[derive(Clone, Debug)]
pub struct SubjectEval {
    pub subject_id: String,
    pub agreement: ShapeAgreement,
    pub deltas: IndexDeltas,
}

#[derive(Clone, Debug)]
pub struct EvaluationReport {
    pub per_subject: Vec<SubjectEval>,
    pub mean: (ShapeAgreement, IndexDeltas),
    pub sd: (ShapeAgreement, IndexDeltas),
}

/// Metrics for one predicted/reference pair: rigid alignment, per-region
/// Dice (LV cavity, LV epi volume, capped RV cavity), surface distances
/// (endo/epi shells and the open RV surface), and index deltas.
pub fn evaluate_pair(
    subject_id: &str,
    predicted: &BiventricularShape,
    reference: &BiventricularShape,
    voxel_spacing: f64,
) -> Result<SubjectEval, MetricsError> {
    let aligned = align_for_eval(predicted, reference)?;

    let pred_endo = aligned.lv_endo_mesh();
    let pred_epi = aligned.lv_epi_mesh();
    let pred_rv_capped = aligned.rv().cap_boundaries()?;
    let ref_endo = reference.lv_endo_mesh();
    let ref_epi = reference.lv_epi_mesh();
    let ref_rv_capped = reference.rv().cap_boundaries()?;

    let dice_lv_endo = dice_between(&pred_endo, &ref_endo, voxel_spacing)?;
    let dice_lv_epi = dice_between(&pred_epi, &ref_epi, voxel_spacing)?;
    let dice_rv = dice_between(&pred_rv_capped, &ref_rv_capped, voxel_spacing)?;

    let (msd_lv_endo, hd_lv_endo) = surface_distances(&pred_endo, &ref_endo)?;
    let (msd_lv_epi, hd_lv_epi) = surface_distances(&pred_epi, &ref_epi)?;
    let (msd_rv, hd_rv) = surface_distances(aligned.rv(), reference.rv())?;

    let pred_idx = region_volumes(&aligned)?;
    let ref_idx = region_volumes(reference)?;
    let deltas = IndexDeltas {
        dlv_vol_abs: (pred_idx.lv_volume_ml - ref_idx.lv_volume_ml).abs(),
        dlv_vol_rel: (pred_idx.lv_volume_ml - ref_idx.lv_volume_ml).abs()
            / ref_idx.lv_volume_ml
            * 100.0,
        dlv_mass_abs: (pred_idx.lv_mass_g - ref_idx.lv_mass_g).abs(),
        dlv_mass_rel: (pred_idx.lv_mass_g - ref_idx.lv_mass_g).abs() / ref_idx.lv_mass_g * 100.0,
        drv_vol_abs: (pred_idx.rv_volume_ml - ref_idx.rv_volume_ml).abs(),
        drv_vol_rel: (pred_idx.rv_volume_ml - ref_idx.rv_volume_ml).abs()
            / ref_idx.rv_volume_ml
            * 100.0,
    };
    Ok(SubjectEval {
        subject_id: String::from(subject_id),
        agreement: ShapeAgreement {
            dice_lv_endo,
            dice_lv_epi,
            dice_rv,
            msd_lv_endo,
            msd_lv_epi,
            msd_rv,
            hd_lv_endo,
            hd_lv_epi,
            hd_rv,
        },
        deltas,
    })
}

pub fn agreement_values(a: &ShapeAgreement, d: &IndexDeltas) -> [f64; 15] {
    [
        a.dice_lv_endo,
        a.dice_lv_epi,
        a.dice_rv,
        a.msd_lv_endo,
        a.msd_lv_epi,
        a.msd_rv,
        a.hd_lv_endo,
        a.hd_lv_epi,
        a.hd_rv,
        d.dlv_vol_abs,
        d.dlv_vol_rel,
        d.dlv_mass_abs,
        d.dlv_mass_rel,
        d.drv_vol_abs,
        d.drv_vol_rel,
    ]
}

fn from_values(v: &[f64; 15]) -> (ShapeAgreement, IndexDeltas) {
    (
        ShapeAgreement {
            dice_lv_endo: v[0],
            dice_lv_epi: v[1],
            dice_rv: v[2],
            msd_lv_endo: v[3],
            msd_lv_epi: v[4],
            msd_rv: v[5],
            hd_lv_endo: v[6],
            hd_lv_epi: v[7],
            hd_rv: v[8],
        },
        IndexDeltas {
            dlv_vol_abs: v[9],
            dlv_vol_rel: v[10],
            dlv_mass_abs: v[11],
            dlv_mass_rel: v[12],
            drv_vol_abs: v[13],
            drv_vol_rel: v[14],
        },
    )
}

/// Cohort mean and sample standard deviation over per-subject metrics.
pub fn summarize(per_subject: Vec<SubjectEval>) -> EvaluationReport {
    let n = per_subject.len() as f64;
    let mut mean = [0.0; 15];
    for s in &per_subject {
        let v = agreement_values(&s.agreement, &s.deltas);
        for k in 0..15 {
            mean[k] += v[k];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = [0.0; 15];
    if per_subject.len() > 1 {
        for s in &per_subject {
            let v = agreement_values(&s.agreement, &s.deltas);
            for k in 0..15 {
                let d = v[k] - mean[k];
                var[k] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= n - 1.0;
        }
    }
    let sd: [f64; 15] = core::array::from_fn(|k| sqrt(var[k]));
    EvaluationReport {
        mean: from_values(&mean),
        sd: from_values(&sd),
        per_subject,
    }
}

/// Serial cohort evaluation; the CLI parallelizes per subject and funnels
/// results through [`summarize`] in subject order for identical output.
pub fn evaluate_cohort(
    pairs: &[(String, BiventricularShape, BiventricularShape)],
    voxel_spacing: f64,
) -> Result<EvaluationReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    let mut evals = Vec::with_capacity(pairs.len());
    for (id, pred, reference) in pairs {
        evals.push(evaluate_pair(id, pred, reference, voxel_spacing)?);
    }
    Ok(summarize(evals))
}
