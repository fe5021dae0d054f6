//! Contour point CSV: `structure,slice_index,x,y,z` in millimetres.

use std::fmt::Write as _;
use std::path::Path;

use ventric_core::nalgebra::Point3;
use ventric_core::phantom::{ContourPoint, ContourStructure};

use super::{csv_fields, parse_f64, read_file, write_file};
use crate::PipelineError;

pub const HEADER: &str = "structure,slice_index,x,y,z";

pub fn encode(points: &[ContourPoint]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.structure.label(),
            p.slice_index,
            p.point.x,
            p.point.y,
            p.point.z
        );
    }
    out
}

pub fn write_contours(path: &Path, points: &[ContourPoint]) -> Result<(), PipelineError> {
    write_file(path, encode(points).as_bytes())
}

pub fn read_contours(path: &Path) -> Result<Vec<ContourPoint>, PipelineError> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| PipelineError::format(path, "contour CSV is not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(PipelineError::format(path, "bad contour CSV header"));
    }
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields = csv_fields(line);
        if fields.len() != 5 {
            return Err(PipelineError::format(path, "contour row needs 5 fields"));
        }
        let structure = match fields[0] {
            "lv_endo" => ContourStructure::LvEndo,
            "lv_epi" => ContourStructure::LvEpi,
            "rv" => ContourStructure::Rv,
            other => {
                return Err(PipelineError::format(
                    path,
                    format!("unknown structure {other:?}"),
                ))
            }
        };
        let slice_index = fields[1]
            .parse()
            .map_err(|_| PipelineError::format(path, "bad slice index"))?;
        out.push(ContourPoint {
            structure,
            slice_index,
            point: Point3::new(
                parse_f64(path, fields[2])?,
                parse_f64(path, fields[3])?,
                parse_f64(path, fields[4])?,
            ),
        });
    }
    Ok(out)
}
