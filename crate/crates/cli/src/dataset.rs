//! Dataset directory layout and loaders.
//!
//! ```text
//! <dataset_dir>/
//!   template.ply            registration template (base anatomy)
//!   manifest.csv            subject_id,split  (train | test)
//!   metadata.csv            one row per subject, manifest order
//!   latents.csv             ground-truth latent values per subject
//!   subjects/<id>/ground_truth.ply
//!   subjects/<id>/contours.csv
//!   subjects/<id>/sax.tnsr
//!   subjects/<id>/lax.tnsr
//! <model_dir>/
//!   model.pdm               shape model + canonical topology
//!   reference_params.csv    subject_id,b1..bk (unit-encoded)
//!   checkpoint.nnet         final weights + preprocessing bounds
//!   checkpoint_<iter>.nnet  periodic checkpoints
//!   loss_log.csv            iteration,loss
//! <report_dir>/
//!   registered/<id>.ply     CPD-fitted reference shapes
//!   predicted/<id>.ply      network predictions
//!   report.csv              evaluation table
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ventric_core::mesh::BiventricularShape;
use ventric_core::preprocess::{
    encode_metadata, MetadataBounds, MetadataRecord, SubjectSample,
};

use crate::formats::{csv_fields, parse_f64, ply, tensor};
use crate::PipelineError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Manifest {
    pub entries: Vec<(String, Split)>,
}

impl Manifest {
    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, s)| *s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

pub struct DatasetPaths {
    pub root: PathBuf,
}

impl DatasetPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetPaths { root: root.into() }
    }

    pub fn template(&self) -> PathBuf {
        self.root.join("template.ply")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.csv")
    }

    pub fn metadata(&self) -> PathBuf {
        self.root.join("metadata.csv")
    }

    pub fn latents(&self) -> PathBuf {
        self.root.join("latents.csv")
    }

    pub fn subject_dir(&self, id: &str) -> PathBuf {
        self.root.join("subjects").join(id)
    }

    pub fn ground_truth(&self, id: &str) -> PathBuf {
        self.subject_dir(id).join("ground_truth.ply")
    }

    pub fn contours(&self, id: &str) -> PathBuf {
        self.subject_dir(id).join("contours.csv")
    }

    pub fn sax(&self, id: &str) -> PathBuf {
        self.subject_dir(id).join("sax.tnsr")
    }

    pub fn lax(&self, id: &str) -> PathBuf {
        self.subject_dir(id).join("lax.tnsr")
    }
}

pub fn write_manifest(path: &Path, entries: &[(String, Split)]) -> Result<(), PipelineError> {
    let mut out = String::from("subject_id,split\n");
    for (id, split) in entries {
        let _ = writeln!(out, "{id},{}", split.label());
    }
    crate::formats::write_file(path, out.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("subject_id,split") {
        return Err(PipelineError::format(path, "bad manifest header"));
    }
    let mut entries = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields = csv_fields(line);
        if fields.len() != 2 {
            return Err(PipelineError::format(path, "manifest row needs 2 fields"));
        }
        let split = match fields[1] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(PipelineError::format(path, format!("unknown split {other:?}")))
            }
        };
        entries.push((fields[0].to_string(), split));
    }
    Ok(Manifest { entries })
}

pub fn write_latents(path: &Path, rows: &[(String, [f64; 4])]) -> Result<(), PipelineError> {
    let mut out = String::from("subject_id,scale,wall,long_axis,rv_breadth\n");
    for (id, l) in rows {
        let _ = writeln!(out, "{id},{},{},{},{}", l[0], l[1], l[2], l[3]);
    }
    crate::formats::write_file(path, out.as_bytes())
}

pub fn write_reference_params(
    path: &Path,
    rows: &[(String, Vec<f64>)],
) -> Result<(), PipelineError> {
    let k = rows.first().map(|(_, b)| b.len()).unwrap_or(0);
    let mut out = String::from("subject_id");
    for i in 1..=k {
        let _ = write!(out, ",b{i}");
    }
    out.push('\n');
    for (id, b) in rows {
        let _ = write!(out, "{id}");
        for v in b {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    crate::formats::write_file(path, out.as_bytes())
}

pub fn read_reference_params(path: &Path) -> Result<Vec<(String, Vec<f64>)>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| PipelineError::format(path, "empty reference file"))?;
    if !header.starts_with("subject_id,b1") {
        return Err(PipelineError::format(path, "bad reference header"));
    }
    let k = header.split(',').count() - 1;
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields = csv_fields(line);
        if fields.len() != k + 1 {
            return Err(PipelineError::format(path, "reference row length mismatch"));
        }
        let values: Result<Vec<f64>, _> =
            fields[1..].iter().map(|f| parse_f64(path, f)).collect();
        out.push((fields[0].to_string(), values?));
    }
    Ok(out)
}

/// Loaded per-subject pieces shared by training and prediction.
pub struct LoadedSubject {
    pub id: String,
    pub split: Split,
    pub sample: SubjectSample,
}

/// Loads image tensors and metadata for the requested subjects, encoding
/// metadata against the given bounds; reference parameters are attached
/// when available.
pub fn load_subjects(
    paths: &DatasetPaths,
    manifest: &Manifest,
    records: &[MetadataRecord],
    bounds: &MetadataBounds,
    references: Option<&[(String, Vec<f64>)]>,
    split: Option<Split>,
) -> Result<Vec<LoadedSubject>, PipelineError> {
    if records.len() != manifest.entries.len() {
        return Err(PipelineError::validation(format!(
            "metadata has {} rows but the manifest lists {} subjects",
            records.len(),
            manifest.entries.len()
        )));
    }
    let mut out = Vec::new();
    for (i, (id, subject_split)) in manifest.entries.iter().enumerate() {
        if let Some(want) = split {
            if *subject_split != want {
                continue;
            }
        }
        let sax = tensor::read_sax(&paths.sax(id))?;
        let lax = tensor::read_lax(&paths.lax(id))?;
        let meta = encode_metadata(&records[i], bounds)?;
        let reference_params = match references {
            Some(refs) => Some(
                refs.iter()
                    .find(|(rid, _)| rid == id)
                    .map(|(_, b)| b.clone())
                    .ok_or_else(|| {
                        PipelineError::validation(format!("no reference parameters for {id}"))
                    })?,
            ),
            None => None,
        };
        out.push(LoadedSubject {
            id: id.clone(),
            split: *subject_split,
            sample: SubjectSample {
                sax,
                lax,
                meta,
                reference_params,
            },
        });
    }
    Ok(out)
}

/// Training-cohort metadata bounds (rows in manifest order).
pub fn train_bounds(manifest: &Manifest, records: &[MetadataRecord]) -> MetadataBounds {
    MetadataBounds::from_records(
        manifest
            .entries
            .iter()
            .zip(records)
            .filter(|((_, split), _)| *split == Split::Train)
            .map(|(_, rec)| rec),
    )
}

pub fn read_shape_for(
    paths: &DatasetPaths,
    id: &str,
) -> Result<BiventricularShape, PipelineError> {
    ply::read_shape(&paths.ground_truth(id))
}
