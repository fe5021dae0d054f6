//! `NNET` checkpoints: named f32 tensors plus a trailing metadata block
//! carrying the preprocessing bounds used at training time.

use std::path::Path;

use ventric_core::net::NetworkParams;
use ventric_core::nn::{NamedTensor, Tensor};
use ventric_core::preprocess::{MetadataBounds, CONTINUOUS_FIELDS};

use super::{read_file, write_file, Cursor};
use crate::PipelineError;

const MAGIC: &[u8; 4] = b"NNET";
const META_MAGIC: &[u8; 4] = b"META";

pub fn encode(params: &NetworkParams, bounds: &MetadataBounds) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        let name = t.name.as_bytes();
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(t.tensor.dims().len() as u32).to_le_bytes());
        for &d in t.tensor.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.tensor.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.extend_from_slice(META_MAGIC);
    out.extend_from_slice(&(2 * CONTINUOUS_FIELDS as u32).to_le_bytes());
    for v in bounds.min.iter().chain(bounds.max.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_checkpoint(
    path: &Path,
    params: &NetworkParams,
    bounds: &MetadataBounds,
) -> Result<(), PipelineError> {
    write_file(path, &encode(params, bounds))
}

pub fn decode(
    path: &Path,
    bytes: &[u8],
) -> Result<(NetworkParams, MetadataBounds), PipelineError> {
    let mut cur = Cursor::new(bytes, path);
    cur.magic(MAGIC)?;
    let count = cur.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.bytes(name_len)?)
            .map_err(|_| PipelineError::format(path, "tensor name is not UTF-8"))?
            .to_string();
        let rank = cur.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32()? as usize);
        }
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(cur.f32()? as f64);
        }
        // Running statistics are the only non-trainable tensors.
        let trainable = !(name.ends_with(".rmean") || name.ends_with(".rvar"));
        tensors.push(NamedTensor {
            name,
            trainable,
            tensor: Tensor::from_vec(&dims, data),
        });
    }
    cur.magic(META_MAGIC)?;
    let meta_count = cur.u32()? as usize;
    if meta_count != 2 * CONTINUOUS_FIELDS {
        return Err(PipelineError::format(path, "bad metadata block size"));
    }
    let mut min = [0.0; CONTINUOUS_FIELDS];
    let mut max = [0.0; CONTINUOUS_FIELDS];
    for v in min.iter_mut() {
        *v = cur.f64()?;
    }
    for v in max.iter_mut() {
        *v = cur.f64()?;
    }
    cur.done()?;
    Ok((NetworkParams { tensors }, MetadataBounds { min, max }))
}

pub fn read_checkpoint(path: &Path) -> Result<(NetworkParams, MetadataBounds), PipelineError> {
    let bytes = read_file(path)?;
    decode(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ventric_core::net::ArchitectureConfig;

    fn bounds() -> MetadataBounds {
        MetadataBounds {
            min: [50.0, 55.0, 150.0, 18.0, 1.4, 45.0, 60.0, 100.0],
            max: [80.0, 110.0, 195.0, 40.0, 2.3, 95.0, 100.0, 180.0],
        }
    }

    #[test]
    fn checkpoint_round_trips_through_f32() {
        let arch = ArchitectureConfig::toy(4);
        let params = NetworkParams::init(&arch, 3).unwrap();
        let bytes = encode(&params, &bounds());
        let (loaded, b2) = decode(Path::new("c.nnet"), &bytes).unwrap();
        assert_eq!(b2, bounds());
        assert_eq!(loaded.tensors.len(), params.tensors.len());
        for (a, b) in params.tensors.iter().zip(&loaded.tensors) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.trainable, b.trainable);
            assert_eq!(a.tensor.dims(), b.tensor.dims());
            for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
        // Saving the loaded parameters is byte-stable.
        let again = encode(&loaded, &b2);
        assert_eq!(bytes, again);
    }
}
