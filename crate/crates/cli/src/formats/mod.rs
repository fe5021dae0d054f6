//! On-disk formats: ASCII PLY meshes, little-endian `TNSR` image tensors,
//! `PDM1` shape models, `NNET` network checkpoints, and the CSV sidecars.

pub mod checkpoint;
pub mod contours;
pub mod metadata;
pub mod pdm_file;
pub mod ply;
pub mod report;
pub mod tensor;

use std::io::Read;
use std::path::Path;

use crate::PipelineError;

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

/// Little-endian binary cursor with typed reads.
pub(crate) struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    pub fn new(data: &'a [u8], path: &'a Path) -> Self {
        Cursor { data, pos: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PipelineError> {
        if self.pos + n > self.data.len() {
            return Err(PipelineError::format(self.path, "unexpected end of file"));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn magic(&mut self, expect: &[u8; 4]) -> Result<(), PipelineError> {
        let got = self.take(4)?;
        if got != expect {
            return Err(PipelineError::format(
                self.path,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expect)
                ),
            ));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32, PipelineError> {
        let mut b = [0u8; 4];
        self.take(4)?.read_exact(&mut b).unwrap();
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self) -> Result<u64, PipelineError> {
        let mut b = [0u8; 8];
        self.take(8)?.read_exact(&mut b).unwrap();
        Ok(u64::from_le_bytes(b))
    }

    pub fn f64(&mut self) -> Result<f64, PipelineError> {
        let mut b = [0u8; 8];
        self.take(8)?.read_exact(&mut b).unwrap();
        Ok(f64::from_le_bytes(b))
    }

    pub fn f32(&mut self) -> Result<f32, PipelineError> {
        let mut b = [0u8; 4];
        self.take(4)?.read_exact(&mut b).unwrap();
        Ok(f32::from_le_bytes(b))
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], PipelineError> {
        self.take(n)
    }

    pub fn done(&self) -> Result<(), PipelineError> {
        if self.pos != self.data.len() {
            return Err(PipelineError::format(self.path, "trailing bytes"));
        }
        Ok(())
    }
}

/// CSV splitting for the simple comma formats used here (no quoting).
pub(crate) fn csv_fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

pub(crate) fn parse_f64(path: &Path, field: &str) -> Result<f64, PipelineError> {
    field
        .parse::<f64>()
        .map_err(|_| PipelineError::format(path, format!("bad number {field:?}")))
}
