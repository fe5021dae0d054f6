//! `PDM1` shape-model files: counts, beta, mean shape, eigenvalues, modes
//! (column-major), then the canonical topology embedded as a PLY block.

use std::path::Path;

use ventric_core::mesh::{BiventricularShape, ShapeVector};
use ventric_core::nalgebra::DMatrix;
use ventric_core::pdm::PointDistributionModel;

use super::{ply, read_file, write_file, Cursor};
use crate::PipelineError;

const MAGIC: &[u8; 4] = b"PDM1";

pub fn encode(model: &PointDistributionModel, template: &BiventricularShape) -> Vec<u8> {
    let n = model.point_count();
    let l = model.mode_count();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(model.training_count() as u64).to_le_bytes());
    out.extend_from_slice(&(l as u64).to_le_bytes());
    out.extend_from_slice(&model.beta().to_le_bytes());
    for v in model.mean_shape().coords() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in model.eigenvalues() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for j in 0..l {
        for v in model.mode(j).iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    // Topology block: the mean shape on the template topology.
    let mean_shape = BiventricularShape::from_vector(model.mean_shape(), template)
        .expect("mean length matches template");
    let ply_bytes = ply::shape_to_ply(&mean_shape).into_bytes();
    out.extend_from_slice(&(ply_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&ply_bytes);
    out
}

pub fn write_model(
    path: &Path,
    model: &PointDistributionModel,
    template: &BiventricularShape,
) -> Result<(), PipelineError> {
    write_file(path, &encode(model, template))
}

pub fn decode(
    path: &Path,
    bytes: &[u8],
) -> Result<(PointDistributionModel, BiventricularShape), PipelineError> {
    let mut cur = Cursor::new(bytes, path);
    cur.magic(MAGIC)?;
    let n = cur.u64()? as usize;
    let m = cur.u64()? as usize;
    let l = cur.u64()? as usize;
    let beta = cur.f64()?;
    let dim = 3 * n;
    let mut mean = Vec::with_capacity(dim);
    for _ in 0..dim {
        mean.push(cur.f64()?);
    }
    let mut eigenvalues = Vec::with_capacity(l);
    for _ in 0..l {
        eigenvalues.push(cur.f64()?);
    }
    let mut modes = DMatrix::zeros(dim, l);
    for j in 0..l {
        for r in 0..dim {
            modes[(r, j)] = cur.f64()?;
        }
    }
    let ply_len = cur.u64()? as usize;
    let ply_bytes = cur.bytes(ply_len)?;
    cur.done()?;
    let text = std::str::from_utf8(ply_bytes)
        .map_err(|_| PipelineError::format(path, "embedded topology is not UTF-8"))?;
    let template = ply::parse_shape(path, text)?;
    if template.point_count() != n {
        return Err(PipelineError::format(
            path,
            "embedded topology does not match the stored point count",
        ));
    }
    let model = PointDistributionModel::from_parts(
        ShapeVector::new(mean),
        modes,
        eigenvalues,
        beta,
        m,
    )?;
    Ok((model, template))
}

pub fn read_model(
    path: &Path,
) -> Result<(PointDistributionModel, BiventricularShape), PipelineError> {
    let bytes = read_file(path)?;
    decode(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ventric_core::align::{generalized_procrustes, GPA_DEFAULT_MAX_ITER, GPA_DEFAULT_TOL};
    use ventric_core::pdm::DEFAULT_BETA;
    use ventric_core::phantom::{generate_subject, make_phantom, PhantomConfig};

    #[test]
    fn model_round_trips_exactly() {
        let config = PhantomConfig {
            subject_count: 6,
            ..Default::default()
        };
        let shapes: Vec<_> = (0..6)
            .map(|i| generate_subject(&config, i).unwrap().shape.to_vector())
            .collect();
        let gpa =
            generalized_procrustes(&shapes, true, GPA_DEFAULT_TOL, GPA_DEFAULT_MAX_ITER).unwrap();
        let model =
            PointDistributionModel::build(&gpa.aligned, 0.997, DEFAULT_BETA).unwrap();
        let template = make_phantom(&config, &[0.0; 4]).unwrap();
        let bytes = encode(&model, &template);
        let (model2, template2) = decode(Path::new("m.pdm"), &bytes).unwrap();
        assert_eq!(model, model2);
        // The embedded topology carries the mean geometry.
        assert_eq!(template2.point_count(), template.point_count());
        assert_eq!(template2.lv().faces(), template.lv().faces());
    }

    #[test]
    fn unknown_magic_is_rejected() {
        let err = decode(Path::new("m.pdm"), b"NOPE1234").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("bad magic"), "{msg}");
    }
}
