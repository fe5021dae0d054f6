//! `TNSR` image tensors: magic, u32 rank, u32 dims, then f32 data
//! row-major, all little-endian.

use std::path::Path;

use ventric_core::preprocess::{Grid2, SaxStack, SliceImage, STANDARD_SPACING_MM};

use super::{read_file, write_file, Cursor};
use crate::PipelineError;

const MAGIC: &[u8; 4] = b"TNSR";

pub fn encode(dims: &[usize], data: &[f64]) -> Vec<u8> {
    assert_eq!(dims.iter().product::<usize>(), data.len());
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>), PipelineError> {
    let mut cur = Cursor::new(bytes, path);
    cur.magic(MAGIC)?;
    let rank = cur.u32()? as usize;
    if rank == 0 || rank > 8 {
        return Err(PipelineError::format(path, format!("implausible rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(cur.u32()? as usize);
    }
    let len: usize = dims.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(cur.f32()? as f64);
    }
    cur.done()?;
    Ok((dims, data))
}

pub fn write_tensor(path: &Path, dims: &[usize], data: &[f64]) -> Result<(), PipelineError> {
    write_file(path, &encode(dims, data))
}

pub fn read_tensor(path: &Path) -> Result<(Vec<usize>, Vec<f64>), PipelineError> {
    let bytes = read_file(path)?;
    decode(path, &bytes)
}

pub fn write_sax(path: &Path, sax: &SaxStack) -> Result<(), PipelineError> {
    let slices = sax.slices();
    let h = slices[0].pixels.height;
    let w = slices[0].pixels.width;
    let mut data = Vec::with_capacity(slices.len() * h * w);
    for s in slices {
        data.extend_from_slice(&s.pixels.data);
    }
    write_tensor(path, &[slices.len(), h, w], &data)
}

pub fn read_sax(path: &Path) -> Result<SaxStack, PipelineError> {
    let (dims, data) = read_tensor(path)?;
    if dims.len() != 3 {
        return Err(PipelineError::format(path, "SAX tensor must be rank 3"));
    }
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    let slices = (0..n)
        .map(|k| SliceImage {
            pixels: Grid2 {
                height: h,
                width: w,
                data: data[k * h * w..(k + 1) * h * w].to_vec(),
            },
            spacing_mm: STANDARD_SPACING_MM,
        })
        .collect();
    Ok(SaxStack::new(slices)?)
}

pub fn write_lax(path: &Path, lax: &SliceImage) -> Result<(), PipelineError> {
    write_tensor(
        path,
        &[lax.pixels.height, lax.pixels.width],
        &lax.pixels.data,
    )
}

pub fn read_lax(path: &Path) -> Result<SliceImage, PipelineError> {
    let (dims, data) = read_tensor(path)?;
    if dims.len() != 2 {
        return Err(PipelineError::format(path, "LAX tensor must be rank 2"));
    }
    Ok(SliceImage {
        pixels: Grid2 {
            height: dims[0],
            width: dims[1],
            data,
        },
        spacing_mm: STANDARD_SPACING_MM,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_preserves_f32_values() {
        let dims = [2usize, 3, 4];
        let data: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37) as f32 as f64).collect();
        let bytes = encode(&dims, &data);
        let (d2, v2) = decode(Path::new("t.tnsr"), &bytes).unwrap();
        assert_eq!(d2, dims.to_vec());
        assert_eq!(v2, data);
    }

    #[test]
    fn rejects_wrong_magic() {
        let mut bytes = encode(&[1], &[0.0]);
        bytes[0] = b'X';
        assert!(decode(Path::new("t.tnsr"), &bytes).is_err());
    }
}
