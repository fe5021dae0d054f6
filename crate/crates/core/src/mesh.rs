//! Triangle meshes, biventricular shapes, and shape vectors.
//!
//! Meshes are immutable after construction: `Mesh::new` validates indices,
//! manifoldness, and winding consistency, and extracts the boundary loops
//! (edges used by exactly one face, grouped into closed loops). All geometry
//! is in millimetres; volumes are reported in millilitres.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Point3, Vector3};

/// Myocardial tissue density used to convert wall volume to mass.
pub const MYOCARDIAL_DENSITY_G_PER_ML: f64 = 1.05;

pub const MM3_PER_ML: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MeshError {
    FaceIndexOutOfRange { face: usize, index: u32 },
    DegenerateFace { face: usize },
    NonManifoldEdge { a: u32, b: u32 },
    InconsistentWinding { a: u32, b: u32 },
    NonSimpleBoundary { vertex: u32 },
    NotWatertight,
    NonPositiveVolume,
    NonPlanarBoundaryLoop { loop_index: usize },
    NonPositiveWallVolume,
    RegionSpansFace { face: usize },
    BadRegionSplit { endo_count: usize, vertex_count: usize },
    LengthMismatch { expected: usize, got: usize },
    WrongBoundaryLoopCount { expected: usize, got: usize },
}

impl fmt::Display for MeshError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshError::FaceIndexOutOfRange { face, index } => {
                write!(f, "face {face} references vertex {index} out of range")
            }
            MeshError::DegenerateFace { face } => {
                write!(f, "face {face} repeats a vertex")
            }
            MeshError::NonManifoldEdge { a, b } => {
                write!(f, "edge ({a},{b}) used by more than two faces")
            }
            MeshError::InconsistentWinding { a, b } => {
                write!(f, "edge ({a},{b}) traversed twice in the same direction")
            }
            MeshError::NonSimpleBoundary { vertex } => {
                write!(f, "boundary vertex {vertex} has more than one outgoing boundary edge")
            }
            MeshError::NotWatertight => write!(f, "mesh has boundary loops"),
            MeshError::NonPositiveVolume => {
                write!(f, "signed volume is not positive; orientation inconsistent or mesh degenerate")
            }
            MeshError::NonPlanarBoundaryLoop { loop_index } => {
                write!(f, "boundary loop {loop_index} deviates from planarity beyond tolerance")
            }
            MeshError::NonPositiveWallVolume => {
                write!(f, "endocardial volume is not smaller than epicardial volume")
            }
            MeshError::RegionSpansFace { face } => {
                write!(f, "face {face} crosses the endo/epi region split")
            }
            MeshError::BadRegionSplit { endo_count, vertex_count } => {
                write!(f, "region split {endo_count} invalid for {vertex_count} vertices")
            }
            MeshError::LengthMismatch { expected, got } => {
                write!(f, "shape vector length {got}, expected {expected}")
            }
            MeshError::WrongBoundaryLoopCount { expected, got } => {
                write!(f, "expected {expected} boundary loops, found {got}")
            }
        }
    }
}

/// Immutable triangle mesh with precomputed boundary loops.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    boundary_loops: Vec<Vec<u32>>,
}

impl Mesh {
    /// Validates topology and extracts boundary loops.
    ///
    /// Every undirected edge must be used by at most two faces, and a shared
    /// edge must be traversed in opposite directions (consistent winding).
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        let n = vertices.len() as u32;
        for (fi, face) in faces.iter().enumerate() {
            for &v in face {
                if v >= n {
                    return Err(MeshError::FaceIndexOutOfRange { face: fi, index: v });
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(MeshError::DegenerateFace { face: fi });
            }
        }
        let boundary_loops = extract_boundary_loops(&faces)?;
        Ok(Mesh {
            vertices,
            faces,
            boundary_loops,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn boundary_loops(&self) -> &[Vec<u32>] {
        &self.boundary_loops
    }

    pub fn is_watertight(&self) -> bool {
        self.boundary_loops.is_empty()
    }

    /// Same topology, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::LengthMismatch {
                expected: self.vertices.len(),
                got: vertices.len(),
            });
        }
        Ok(Mesh {
            vertices,
            faces: self.faces.clone(),
            boundary_loops: self.boundary_loops.clone(),
        })
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Enclosed volume in millilitres via the signed-tetrahedron sum.
    ///
    /// Requires a watertight mesh with outward counter-clockwise winding;
    /// a non-positive total signals inconsistent orientation or degeneracy.
    pub fn enclosed_volume(&self) -> Result<f64, MeshError> {
        if !self.is_watertight() {
            return Err(MeshError::NotWatertight);
        }
        let mut signed = 0.0;
        let mut magnitude = 0.0;
        for face in 0..self.faces.len() {
            let [a, b, c] = self.triangle(face);
            let contrib = a.coords.dot(&b.coords.cross(&c.coords)) / 6.0;
            signed += contrib;
            magnitude += contrib.abs();
        }
        if signed <= 1e-9 * magnitude.max(1e-9) {
            return Err(MeshError::NonPositiveVolume);
        }
        Ok(signed / MM3_PER_ML)
    }

    /// Closes every boundary loop with a fan from its centroid.
    ///
    /// Watertight input is returned unchanged. Each loop must be planar
    /// within 10 % of its diameter. Existing vertices never move.
    pub fn cap_boundaries(&self) -> Result<Mesh, MeshError> {
        if self.boundary_loops.is_empty() {
            return Ok(self.clone());
        }
        let mut vertices = self.vertices.clone();
        let mut faces = self.faces.clone();
        for (li, ring) in self.boundary_loops.iter().enumerate() {
            check_loop_planarity(&self.vertices, ring, li)?;
            let centroid = ring
                .iter()
                .fold(Vector3::zeros(), |acc, &v| acc + self.vertices[v as usize].coords)
                / ring.len() as f64;
            let c = vertices.len() as u32;
            vertices.push(Point3::from(centroid));
            // The loop follows boundary directed edges u->v; emitting (c, v, u)
            // pairs each boundary edge with its reverse.
            for i in 0..ring.len() {
                let u = ring[i];
                let v = ring[(i + 1) % ring.len()];
                faces.push([c, v, u]);
            }
        }
        let capped = Mesh::new(vertices, faces)?;
        debug_assert!(capped.is_watertight());
        Ok(capped)
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self
            .vertices
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.vertices.len() as f64)
    }

    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}

fn extract_boundary_loops(faces: &[[u32; 3]]) -> Result<Vec<Vec<u32>>, MeshError> {
    // Directed edge list; a consistent 2-manifold uses each directed edge once.
    let mut directed: Vec<(u32, u32)> = Vec::with_capacity(faces.len() * 3);
    for face in faces {
        directed.push((face[0], face[1]));
        directed.push((face[1], face[2]));
        directed.push((face[2], face[0]));
    }
    directed.sort_unstable();
    for w in directed.windows(2) {
        if w[0] == w[1] {
            let (a, b) = w[0];
            // Same directed edge twice: either >2 faces on the undirected
            // edge or two faces wound the same way.
            let reverse_count = count_edge(&directed, (b, a));
            if reverse_count + 2 > 2 {
                return Err(MeshError::NonManifoldEdge { a, b });
            }
            return Err(MeshError::InconsistentWinding { a, b });
        }
    }
    let mut boundary: Vec<(u32, u32)> = Vec::new();
    for &(u, v) in &directed {
        if count_edge(&directed, (v, u)) == 0 {
            boundary.push((u, v));
        }
    }
    if boundary.is_empty() {
        return Ok(Vec::new());
    }
    // Group into loops; each boundary vertex must have exactly one outgoing
    // boundary edge or the boundary is not a set of simple loops.
    boundary.sort_unstable();
    for w in boundary.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(MeshError::NonSimpleBoundary { vertex: w[0].0 });
        }
    }
    let mut used = vec![false; boundary.len()];
    let mut loops = Vec::new();
    for start in 0..boundary.len() {
        if used[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut edge = start;
        loop {
            used[edge] = true;
            let (u, v) = boundary[edge];
            ring.push(u);
            match boundary.binary_search_by_key(&v, |e| e.0) {
                Ok(next) => {
                    if next == start {
                        break;
                    }
                    if used[next] {
                        return Err(MeshError::NonSimpleBoundary { vertex: v });
                    }
                    edge = next;
                }
                Err(_) => return Err(MeshError::NonSimpleBoundary { vertex: v }),
            }
        }
        loops.push(ring);
    }
    Ok(loops)
}

fn count_edge(sorted: &[(u32, u32)], edge: (u32, u32)) -> usize {
    let lo = sorted.partition_point(|&e| e < edge);
    let hi = sorted.partition_point(|&e| e <= edge);
    hi - lo
}

fn check_loop_planarity(
    vertices: &[Point3<f64>],
    ring: &[u32],
    loop_index: usize,
) -> Result<(), MeshError> {
    let centroid = ring
        .iter()
        .fold(Vector3::zeros(), |acc, &v| acc + vertices[v as usize].coords)
        / ring.len() as f64;
    // Newell normal.
    let mut normal = Vector3::zeros();
    for i in 0..ring.len() {
        let a = vertices[ring[i] as usize].coords;
        let b = vertices[ring[(i + 1) % ring.len()] as usize].coords;
        normal += (a - centroid).cross(&(b - centroid));
    }
    let norm = normal.norm();
    let mut diameter: f64 = 0.0;
    for i in 0..ring.len() {
        for j in (i + 1)..ring.len() {
            let d = (vertices[ring[i] as usize] - vertices[ring[j] as usize]).norm();
            diameter = diameter.max(d);
        }
    }
    if norm == 0.0 {
        return Err(MeshError::NonPlanarBoundaryLoop { loop_index });
    }
    let unit = normal / norm;
    let deviation = ring
        .iter()
        .map(|&v| (vertices[v as usize].coords - centroid).dot(&unit).abs())
        .fold(0.0_f64, f64::max);
    if deviation > 0.1 * diameter {
        return Err(MeshError::NonPlanarBoundaryLoop { loop_index });
    }
    Ok(())
}

/// LV (watertight, endo + epi shells as labelled vertex subsets) and RV
/// (open, atrioventricular and pulmonary boundary loops) with a cohort-wide
/// canonical vertex order: LV endo, LV epi, then RV.
#[derive(Clone, Debug, PartialEq)]
pub struct BiventricularShape {
    lv: Mesh,
    rv: Mesh,
    lv_endo_count: usize,
}

impl BiventricularShape {
    pub fn new(lv: Mesh, rv: Mesh, lv_endo_count: usize) -> Result<Self, MeshError> {
        if !lv.is_watertight() {
            return Err(MeshError::NotWatertight);
        }
        if rv.boundary_loops().len() != 2 {
            return Err(MeshError::WrongBoundaryLoopCount {
                expected: 2,
                got: rv.boundary_loops().len(),
            });
        }
        if lv_endo_count == 0 || lv_endo_count >= lv.vertices().len() {
            return Err(MeshError::BadRegionSplit {
                endo_count: lv_endo_count,
                vertex_count: lv.vertices().len(),
            });
        }
        // The endo/epi split must separate faces cleanly.
        for (fi, face) in lv.faces().iter().enumerate() {
            let endo = face.iter().filter(|&&v| (v as usize) < lv_endo_count).count();
            if endo != 0 && endo != 3 {
                return Err(MeshError::RegionSpansFace { face: fi });
            }
        }
        Ok(BiventricularShape { lv, rv, lv_endo_count })
    }

    pub fn lv(&self) -> &Mesh {
        &self.lv
    }

    pub fn rv(&self) -> &Mesh {
        &self.rv
    }

    pub fn lv_endo_count(&self) -> usize {
        self.lv_endo_count
    }

    pub fn point_count(&self) -> usize {
        self.lv.vertices().len() + self.rv.vertices().len()
    }

    /// Closed endocardial sub-mesh (vertices `0..lv_endo_count`).
    pub fn lv_endo_mesh(&self) -> Mesh {
        let vertices = self.lv.vertices()[..self.lv_endo_count].to_vec();
        let faces = self
            .lv
            .faces()
            .iter()
            .filter(|f| (f[0] as usize) < self.lv_endo_count)
            .copied()
            .collect();
        Mesh::new(vertices, faces).expect("endo subset of a valid LV mesh")
    }

    /// Closed epicardial sub-mesh (vertices `lv_endo_count..`), reindexed.
    pub fn lv_epi_mesh(&self) -> Mesh {
        let offset = self.lv_endo_count as u32;
        let vertices = self.lv.vertices()[self.lv_endo_count..].to_vec();
        let faces = self
            .lv
            .faces()
            .iter()
            .filter(|f| f[0] >= offset)
            .map(|f| [f[0] - offset, f[1] - offset, f[2] - offset])
            .collect();
        Mesh::new(vertices, faces).expect("epi subset of a valid LV mesh")
    }

    /// Interleaved (x, y, z, ...) flattening in canonical vertex order.
    pub fn to_vector(&self) -> ShapeVector {
        let mut data = Vec::with_capacity(3 * self.point_count());
        for p in self.lv.vertices().iter().chain(self.rv.vertices()) {
            data.push(p.x);
            data.push(p.y);
            data.push(p.z);
        }
        ShapeVector::new(data)
    }

    /// Rebuilds a shape from a flat vector using this shape's topology.
    pub fn from_vector(v: &ShapeVector, topology: &BiventricularShape) -> Result<Self, MeshError> {
        let n = topology.point_count();
        if v.coords().len() != 3 * n {
            return Err(MeshError::LengthMismatch {
                expected: 3 * n,
                got: v.coords().len(),
            });
        }
        let lv_n = topology.lv.vertices().len();
        let point = |i: usize| {
            Point3::new(v.coords()[3 * i], v.coords()[3 * i + 1], v.coords()[3 * i + 2])
        };
        let lv_vertices: Vec<_> = (0..lv_n).map(point).collect();
        let rv_vertices: Vec<_> = (lv_n..n).map(point).collect();
        Ok(BiventricularShape {
            lv: topology.lv.with_vertices(lv_vertices)?,
            rv: topology.rv.with_vertices(rv_vertices)?,
            lv_endo_count: topology.lv_endo_count,
        })
    }

    /// Wall volume between the epi and endo shells times tissue density.
    pub fn myocardial_mass(&self) -> Result<f64, MeshError> {
        myocardial_mass(&self.lv, self.lv_endo_count)
    }

    /// Applies `f` to every vertex, keeping topology.
    pub fn map_vertices(&self, mut f: impl FnMut(&Point3<f64>) -> Point3<f64>) -> Self {
        let lv_vertices = self.lv.vertices().iter().map(&mut f).collect();
        let rv_vertices = self.rv.vertices().iter().map(&mut f).collect();
        BiventricularShape {
            lv: self.lv.with_vertices(lv_vertices).expect("same length"),
            rv: self.rv.with_vertices(rv_vertices).expect("same length"),
            lv_endo_count: self.lv_endo_count,
        }
    }
}

/// Myocardial mass in grams from a watertight LV mesh whose vertices
/// `0..endo_count` form the endocardial shell and the rest the epicardial.
pub fn myocardial_mass(lv: &Mesh, endo_count: usize) -> Result<f64, MeshError> {
    if endo_count == 0 || endo_count >= lv.vertices().len() {
        return Err(MeshError::BadRegionSplit {
            endo_count,
            vertex_count: lv.vertices().len(),
        });
    }
    let mut endo_faces = Vec::new();
    let mut epi_faces = Vec::new();
    for (fi, face) in lv.faces().iter().enumerate() {
        let inside = face.iter().filter(|&&v| (v as usize) < endo_count).count();
        match inside {
            3 => endo_faces.push(*face),
            0 => {
                let o = endo_count as u32;
                epi_faces.push([face[0] - o, face[1] - o, face[2] - o]);
            }
            _ => return Err(MeshError::RegionSpansFace { face: fi }),
        }
    }
    let endo = Mesh::new(lv.vertices()[..endo_count].to_vec(), endo_faces)?;
    let epi = Mesh::new(lv.vertices()[endo_count..].to_vec(), epi_faces)?;
    let endo_vol = endo.enclosed_volume()?;
    let epi_vol = epi.enclosed_volume()?;
    if endo_vol >= epi_vol {
        return Err(MeshError::NonPositiveWallVolume);
    }
    Ok((epi_vol - endo_vol) * MYOCARDIAL_DENSITY_G_PER_ML)
}

/// Flat interleaved coordinate vector of a shape, length 3N, in mm.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeVector {
    data: Vec<f64>,
}

impl ShapeVector {
    pub fn new(data: Vec<f64>) -> Self {
        assert!(data.len().is_multiple_of(3), "shape vector length must be 3N");
        ShapeVector { data }
    }

    pub fn coords(&self) -> &[f64] {
        &self.data
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    pub fn point_count(&self) -> usize {
        self.data.len() / 3
    }

    pub fn point(&self, i: usize) -> Point3<f64> {
        Point3::new(self.data[3 * i], self.data[3 * i + 1], self.data[3 * i + 2])
    }

    pub fn set_point(&mut self, i: usize, p: Point3<f64>) {
        self.data[3 * i] = p.x;
        self.data[3 * i + 1] = p.y;
        self.data[3 * i + 2] = p.z;
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let mut c = Vector3::zeros();
        for i in 0..self.point_count() {
            c += self.point(i).coords;
        }
        c / self.point_count() as f64
    }

    /// Root sum of squared distances from the centroid.
    pub fn centroid_size(&self) -> f64 {
        let c = self.centroid();
        let mut s = 0.0;
        for i in 0..self.point_count() {
            s += (self.point(i).coords - c).norm_squared();
        }
        crate::fmath::sqrt(s)
    }

    pub fn describe(&self) -> String {
        format!("{} points", self.point_count())
    }
}

pub mod primitives {
    //! Small analytic test meshes.

    use super::Mesh;
    use crate::fmath::{cos, sin, sqrt};
    use alloc::vec;
    use alloc::vec::Vec;
    use nalgebra::Point3;

    /// Axis-aligned unit cube, 12 outward-wound triangles.
    pub fn unit_cube() -> Mesh {
        let v = |x: f64, y: f64, z: f64| Point3::new(x, y, z);
        let vertices = vec![
            v(0., 0., 0.),
            v(1., 0., 0.),
            v(1., 1., 0.),
            v(0., 1., 0.),
            v(0., 0., 1.),
            v(1., 0., 1.),
            v(1., 1., 1.),
            v(0., 1., 1.),
        ];
        let faces = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        Mesh::new(vertices, faces).expect("unit cube is valid")
    }

    /// Icosphere: subdivided icosahedron projected to the sphere.
    pub fn icosphere(center: Point3<f64>, radius: f64, subdivisions: u32) -> Mesh {
        let phi = (1.0 + sqrt(5.0)) / 2.0;
        let mut vertices: Vec<Point3<f64>> = [
            (-1.0, phi, 0.0),
            (1.0, phi, 0.0),
            (-1.0, -phi, 0.0),
            (1.0, -phi, 0.0),
            (0.0, -1.0, phi),
            (0.0, 1.0, phi),
            (0.0, -1.0, -phi),
            (0.0, 1.0, -phi),
            (phi, 0.0, -1.0),
            (phi, 0.0, 1.0),
            (-phi, 0.0, -1.0),
            (-phi, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Point3::new(x, y, z))
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoints: Vec<((u32, u32), u32)> = Vec::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            for face in &faces {
                let mids: Vec<u32> = (0..3)
                    .map(|i| {
                        let a = face[i];
                        let b = face[(i + 1) % 3];
                        let key = (a.min(b), a.max(b));
                        match midpoints.binary_search_by_key(&key, |m| m.0) {
                            Ok(pos) => midpoints[pos].1,
                            Err(pos) => {
                                let m = Point3::from(
                                    (vertices[a as usize].coords + vertices[b as usize].coords)
                                        / 2.0,
                                );
                                let idx = vertices.len() as u32;
                                vertices.push(m);
                                midpoints.insert(pos, (key, idx));
                                idx
                            }
                        }
                    })
                    .collect();
                next.push([face[0], mids[0], mids[2]]);
                next.push([face[1], mids[1], mids[0]]);
                next.push([face[2], mids[2], mids[1]]);
                next.push([mids[0], mids[1], mids[2]]);
            }
            faces = next;
        }
        let vertices = vertices
            .into_iter()
            .map(|p| Point3::from(center.coords + p.coords.normalize() * radius))
            .collect();
        Mesh::new(vertices, faces).expect("icosphere is valid")
    }

    /// Open cylinder wall along z with boundary rings at z = 0 and z = height.
    pub fn open_cylinder(radius: f64, height: f64, segments: usize, rings: usize) -> Mesh {
        let mut vertices = Vec::new();
        for r in 0..=rings {
            let z = height * r as f64 / rings as f64;
            for s in 0..segments {
                let a = 2.0 * core::f64::consts::PI * s as f64 / segments as f64;
                vertices.push(Point3::new(radius * cos(a), radius * sin(a), z));
            }
        }
        let mut faces = Vec::new();
        for r in 0..rings {
            for s in 0..segments {
                let s1 = (s + 1) % segments;
                let a = (r * segments + s) as u32;
                let b = (r * segments + s1) as u32;
                let c = ((r + 1) * segments + s1) as u32;
                let d = ((r + 1) * segments + s) as u32;
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
        Mesh::new(vertices, faces).expect("cylinder wall is valid")
    }

    /// Latitude/longitude tessellated ellipsoid with pole vertices.
    pub fn uv_ellipsoid(
        center: Point3<f64>,
        semi_axes: [f64; 3],
        n_lat: usize,
        n_lon: usize,
    ) -> Mesh {
        assert!(n_lat >= 3 && n_lon >= 3);
        let [a, b, c] = semi_axes;
        let mut vertices = Vec::new();
        vertices.push(Point3::new(center.x, center.y, center.z + c));
        for i in 1..n_lat {
            let theta = core::f64::consts::PI * i as f64 / n_lat as f64;
            for j in 0..n_lon {
                let phi = 2.0 * core::f64::consts::PI * j as f64 / n_lon as f64;
                vertices.push(Point3::new(
                    center.x + a * sin(theta) * cos(phi),
                    center.y + b * sin(theta) * sin(phi),
                    center.z + c * cos(theta),
                ));
            }
        }
        vertices.push(Point3::new(center.x, center.y, center.z - c));
        let last = (vertices.len() - 1) as u32;
        let ring = |i: usize, j: usize| (1 + (i - 1) * n_lon + (j % n_lon)) as u32;
        let mut faces = Vec::new();
        for j in 0..n_lon {
            faces.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..(n_lat - 1) {
            for j in 0..n_lon {
                faces.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
                faces.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
            }
        }
        for j in 0..n_lon {
            faces.push([last, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)]);
        }
        Mesh::new(vertices, faces).expect("ellipsoid is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::primitives::*;
    use super::*;
    use crate::fmath::sqrt;

    #[test]
    fn unit_cube_volume_is_one_cubic_mm() {
        let cube = unit_cube();
        assert!(cube.is_watertight());
        let vol = cube.enclosed_volume().unwrap();
        assert!((vol - 0.001).abs() < 1e-15, "got {vol} mL");
    }

    #[test]
    fn icosphere_volume_matches_analytic_within_one_percent() {
        let r = 10.0;
        let sphere = icosphere(Point3::origin(), r, 3);
        let vol = sphere.enclosed_volume().unwrap() * MM3_PER_ML;
        let analytic = 4.0 / 3.0 * core::f64::consts::PI * r * r * r;
        assert!(
            (vol - analytic).abs() / analytic < 0.01,
            "vol {vol} vs analytic {analytic}"
        );
    }

    #[test]
    fn deleted_face_makes_mesh_non_watertight() {
        let cube = unit_cube();
        let mut faces = cube.faces().to_vec();
        faces.pop();
        let broken = Mesh::new(cube.vertices().to_vec(), faces).unwrap();
        assert!(!broken.is_watertight());
        assert_eq!(broken.enclosed_volume(), Err(MeshError::NotWatertight));
    }

    #[test]
    fn flipped_face_is_rejected_at_construction() {
        let cube = unit_cube();
        let mut faces = cube.faces().to_vec();
        faces[0] = [faces[0][0], faces[0][2], faces[0][1]];
        let err = Mesh::new(cube.vertices().to_vec(), faces).unwrap_err();
        assert!(matches!(err, MeshError::InconsistentWinding { .. }));
    }

    #[test]
    fn face_index_out_of_range_is_rejected() {
        let err = Mesh::new(vec![Point3::origin()], vec![[0, 0, 7]]).unwrap_err();
        assert!(matches!(err, MeshError::FaceIndexOutOfRange { .. } | MeshError::DegenerateFace { .. }));
    }

    #[test]
    fn volume_is_rigid_invariant() {
        let sphere = icosphere(Point3::new(3.0, -2.0, 5.0), 8.0, 2);
        let v0 = sphere.enclosed_volume().unwrap();
        let angle: f64 = 0.7;
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        let moved = sphere
            .with_vertices(
                sphere
                    .vertices()
                    .iter()
                    .map(|p| {
                        Point3::new(
                            c * p.x - s * p.y + 11.0,
                            s * p.x + c * p.y - 4.0,
                            p.z + 2.5,
                        )
                    })
                    .collect(),
            )
            .unwrap();
        let v1 = moved.enclosed_volume().unwrap();
        assert!((v0 - v1).abs() / v0 < 1e-9);
    }

    #[test]
    fn volume_scales_cubically() {
        let sphere = icosphere(Point3::origin(), 5.0, 2);
        let v0 = sphere.enclosed_volume().unwrap();
        let scale = 1.7;
        let scaled = sphere
            .with_vertices(sphere.vertices().iter().map(|p| p * scale).collect())
            .unwrap();
        let v1 = scaled.enclosed_volume().unwrap();
        assert!((v1 - v0 * scale.powi(3)).abs() / v1 < 1e-9);
    }

    #[test]
    fn capping_open_cylinder_recovers_volume() {
        let (r, h) = (6.0, 20.0);
        let wall = open_cylinder(r, h, 64, 8);
        assert_eq!(wall.boundary_loops().len(), 2);
        let capped = wall.cap_boundaries().unwrap();
        assert!(capped.is_watertight());
        let vol = capped.enclosed_volume().unwrap() * MM3_PER_ML;
        let analytic = core::f64::consts::PI * r * r * h;
        // The 64-gon slightly underestimates the circle.
        assert!(
            (vol - analytic).abs() / analytic < 0.005,
            "vol {vol} vs {analytic}"
        );
        // Original vertices untouched.
        for (a, b) in wall.vertices().iter().zip(capped.vertices()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn capping_watertight_mesh_is_identity() {
        let cube = unit_cube();
        let capped = cube.cap_boundaries().unwrap();
        assert_eq!(cube, capped);
    }

    #[test]
    fn myocardial_mass_of_concentric_spheres() {
        let endo = icosphere(Point3::origin(), 20.0, 3);
        let epi = icosphere(Point3::origin(), 30.0, 3);
        let endo_count = endo.vertices().len();
        let mut vertices = endo.vertices().to_vec();
        vertices.extend_from_slice(epi.vertices());
        let mut faces = endo.faces().to_vec();
        faces.extend(
            epi.faces()
                .iter()
                .map(|f| [f[0] + endo_count as u32, f[1] + endo_count as u32, f[2] + endo_count as u32]),
        );
        let lv = Mesh::new(vertices, faces).unwrap();
        let mass = myocardial_mass(&lv, endo_count).unwrap();
        let analytic =
            1.05 * 4.0 / 3.0 * core::f64::consts::PI * (30.0_f64.powi(3) - 20.0_f64.powi(3))
                / MM3_PER_ML;
        assert!((mass - analytic).abs() / analytic < 0.01, "mass {mass} vs {analytic}");
    }

    #[test]
    fn equal_shells_have_no_wall_volume() {
        let endo = icosphere(Point3::origin(), 20.0, 2);
        let n = endo.vertices().len() as u32;
        let mut vertices = endo.vertices().to_vec();
        vertices.extend_from_slice(endo.vertices());
        let mut faces = endo.faces().to_vec();
        faces.extend(endo.faces().iter().map(|f| [f[0] + n, f[1] + n, f[2] + n]));
        let lv = Mesh::new(vertices, faces).unwrap();
        assert_eq!(
            myocardial_mass(&lv, n as usize),
            Err(MeshError::NonPositiveWallVolume)
        );
    }

    fn toy_shape() -> BiventricularShape {
        let endo = icosphere(Point3::origin(), 15.0, 1);
        let epi = icosphere(Point3::origin(), 22.0, 1);
        let n = endo.vertices().len() as u32;
        let mut vertices = endo.vertices().to_vec();
        vertices.extend_from_slice(epi.vertices());
        let mut faces = endo.faces().to_vec();
        faces.extend(epi.faces().iter().map(|f| [f[0] + n, f[1] + n, f[2] + n]));
        let lv = Mesh::new(vertices, faces).unwrap();
        let rv = open_cylinder(10.0, 30.0, 12, 4);
        let rv = rv
            .with_vertices(
                rv.vertices()
                    .iter()
                    .map(|p| Point3::new(p.x - 45.0, p.y, p.z - 15.0))
                    .collect(),
            )
            .unwrap();
        BiventricularShape::new(lv, rv, n as usize).unwrap()
    }

    #[test]
    fn shape_vector_interleaving() {
        let shape = toy_shape();
        let v = shape.to_vector();
        assert_eq!(v.coords().len(), 3 * shape.point_count());
        let p0 = shape.lv().vertices()[0];
        assert_eq!(v.coords()[0], p0.x);
        assert_eq!(v.coords()[1], p0.y);
        assert_eq!(v.coords()[2], p0.z);
        let rv0 = shape.rv().vertices()[0];
        let off = 3 * shape.lv().vertices().len();
        assert_eq!(v.coords()[off], rv0.x);
    }

    #[test]
    fn shape_vector_round_trip_is_exact() {
        let shape = toy_shape();
        let v = shape.to_vector();
        let back = BiventricularShape::from_vector(&v, &shape).unwrap();
        assert_eq!(shape, back);
    }

    #[test]
    fn from_vector_rejects_bad_length() {
        let shape = toy_shape();
        let mut data = shape.to_vector().into_inner();
        data.pop();
        data.pop();
        data.pop();
        let short = ShapeVector::new(data);
        assert!(matches!(
            BiventricularShape::from_vector(&short, &shape),
            Err(MeshError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn zero_vector_builds_degenerate_shape() {
        let shape = toy_shape();
        let zero = ShapeVector::new(vec![0.0; 3 * shape.point_count()]);
        let degenerate = BiventricularShape::from_vector(&zero, &shape).unwrap();
        assert!(degenerate.lv().enclosed_volume().is_err());
    }

    #[test]
    fn centroid_size_of_unit_square() {
        let v = ShapeVector::new(vec![
            1.0, 0.0, 0.0, //
            -1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, -1.0, 0.0,
        ]);
        assert!((v.centroid_size() - sqrt(4.0)).abs() < 1e-15);
    }
}
