//! ASCII PLY with region labels in header comments.
//!
//! Vertices follow the canonical order (LV endo, LV epi, RV); the region
//! comment lines make files self-describing. Coordinates print with 17
//! significant digits so values survive a round trip; face indices are
//! reproduced byte-exactly.

use std::fmt::Write as _;
use std::path::Path;

use ventric_core::mesh::{BiventricularShape, Mesh};
use ventric_core::nalgebra::Point3;

use super::{read_file, write_file};
use crate::PipelineError;

pub fn shape_to_ply(shape: &BiventricularShape) -> String {
    let lv_n = shape.lv().vertices().len();
    let endo_n = shape.lv_endo_count();
    let rv_n = shape.rv().vertices().len();
    let total_v = lv_n + rv_n;
    let total_f = shape.lv().faces().len() + shape.rv().faces().len();
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "comment region lv_endo {endo_n}");
    let _ = writeln!(out, "comment region lv_epi {}", lv_n - endo_n);
    let _ = writeln!(out, "comment region rv {rv_n}");
    let _ = writeln!(out, "element vertex {total_v}");
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(out, "element face {total_f}");
    out.push_str("property list uchar uint vertex_indices\nend_header\n");
    for p in shape.lv().vertices().iter().chain(shape.rv().vertices()) {
        let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z);
    }
    for f in shape.lv().faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    for f in shape.rv().faces() {
        let _ = writeln!(
            out,
            "3 {} {} {}",
            f[0] + lv_n as u32,
            f[1] + lv_n as u32,
            f[2] + lv_n as u32
        );
    }
    out
}

pub fn write_shape(path: &Path, shape: &BiventricularShape) -> Result<(), PipelineError> {
    write_file(path, shape_to_ply(shape).as_bytes())
}

pub fn parse_shape(path: &Path, text: &str) -> Result<BiventricularShape, PipelineError> {
    let bad = |msg: &str| PipelineError::format(path, msg);
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(bad("not a PLY file"));
    }
    if lines.next() != Some("format ascii 1.0") {
        return Err(bad("unsupported PLY format"));
    }
    let mut endo_n = None;
    let mut epi_n = None;
    let mut rv_n = None;
    let mut vertex_count = None;
    let mut face_count = None;
    for line in lines.by_ref() {
        if line == "end_header" {
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["comment", "region", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| bad("bad region count"))?;
                match *name {
                    "lv_endo" => endo_n = Some(count),
                    "lv_epi" => epi_n = Some(count),
                    "rv" => rv_n = Some(count),
                    _ => return Err(bad("unknown region label")),
                }
            }
            ["element", "vertex", count] => {
                vertex_count = Some(count.parse().map_err(|_| bad("bad vertex count"))?)
            }
            ["element", "face", count] => {
                face_count = Some(count.parse().map_err(|_| bad("bad face count"))?)
            }
            ["property", ..] | ["comment", ..] => {}
            _ => return Err(bad("unexpected header line")),
        }
    }
    let endo_n = endo_n.ok_or_else(|| bad("missing lv_endo region"))?;
    let epi_n = epi_n.ok_or_else(|| bad("missing lv_epi region"))?;
    let rv_n = rv_n.ok_or_else(|| bad("missing rv region"))?;
    let vertex_count: usize = vertex_count.ok_or_else(|| bad("missing vertex element"))?;
    let face_count: usize = face_count.ok_or_else(|| bad("missing face element"))?;
    if endo_n + epi_n + rv_n != vertex_count {
        return Err(bad("region counts do not sum to the vertex count"));
    }

    let mut vertices = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let line = lines.next().ok_or_else(|| bad("missing vertex line"))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(bad("vertex line must have three coordinates"));
        }
        let coords: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let coords = coords.map_err(|_| bad("bad vertex coordinate"))?;
        vertices.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    let lv_n = endo_n + epi_n;
    let mut lv_faces = Vec::new();
    let mut rv_faces = Vec::new();
    for _ in 0..face_count {
        let line = lines.next().ok_or_else(|| bad("missing face line"))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "3" {
            return Err(bad("face line must list three vertex indices"));
        }
        let idx: Result<Vec<u32>, _> = fields[1..].iter().map(|f| f.parse::<u32>()).collect();
        let idx = idx.map_err(|_| bad("bad face index"))?;
        let in_lv = idx.iter().filter(|&&v| (v as usize) < lv_n).count();
        match in_lv {
            3 => lv_faces.push([idx[0], idx[1], idx[2]]),
            0 => rv_faces.push([
                idx[0] - lv_n as u32,
                idx[1] - lv_n as u32,
                idx[2] - lv_n as u32,
            ]),
            _ => return Err(bad("face crosses the LV/RV split")),
        }
    }
    let lv = Mesh::new(vertices[..lv_n].to_vec(), lv_faces)?;
    let rv = Mesh::new(vertices[lv_n..].to_vec(), rv_faces)?;
    Ok(BiventricularShape::new(lv, rv, endo_n)?)
}

pub fn read_shape(path: &Path) -> Result<BiventricularShape, PipelineError> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| PipelineError::format(path, "PLY is not valid UTF-8"))?;
    parse_shape(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ventric_core::phantom::{make_phantom, PhantomConfig};

    #[test]
    fn round_trip_is_byte_exact() {
        let shape = make_phantom(&PhantomConfig::default(), &[0.3, -0.4, 0.2, 0.6]).unwrap();
        let text = shape_to_ply(&shape);
        let parsed = parse_shape(Path::new("test.ply"), &text).unwrap();
        assert_eq!(parsed, shape);
        let again = shape_to_ply(&parsed);
        assert_eq!(text, again);
    }

    #[test]
    fn rejects_tampered_headers() {
        let shape = make_phantom(&PhantomConfig::default(), &[0.0; 4]).unwrap();
        let text = shape_to_ply(&shape);
        let broken = text.replace("comment region rv", "comment region xx");
        assert!(parse_shape(Path::new("test.ply"), &broken).is_err());
    }
}
