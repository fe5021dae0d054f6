//! `build-pdm`: generalized Procrustes alignment of the training shapes,
//! PCA model construction, and unit-encoded reference parameters for every
//! subject.

use ventric_core::align::{
    generalized_procrustes, procrustes_pair, GPA_DEFAULT_MAX_ITER, GPA_DEFAULT_TOL,
};
use ventric_core::mesh::ShapeVector;
use ventric_core::pdm::PointDistributionModel;

use crate::config::{PipelineConfig, ReferenceSource};
use crate::dataset::{read_manifest, write_reference_params, DatasetPaths, Split};
use crate::formats::{pdm_file, ply};
use crate::PipelineError;

pub fn reference_shape_path(
    config: &PipelineConfig,
    id: &str,
) -> std::path::PathBuf {
    match config.reference_source {
        ReferenceSource::GroundTruth => {
            DatasetPaths::new(&config.dataset_dir).ground_truth(id)
        }
        ReferenceSource::Registered => config.report_dir.join("registered").join(format!("{id}.ply")),
    }
}

pub fn build_pdm(config: &PipelineConfig) -> Result<(), PipelineError> {
    super::log_config("build-pdm", config);
    let paths = DatasetPaths::new(&config.dataset_dir);
    let template = ply::read_shape(&paths.template())?;
    let manifest = read_manifest(&paths.manifest())?;

    let mut all_shapes: Vec<(String, ShapeVector)> = Vec::new();
    for (id, _) in &manifest.entries {
        let shape = ply::read_shape(&reference_shape_path(config, id))?;
        all_shapes.push((id.clone(), shape.to_vector()));
    }
    let train_shapes: Vec<ShapeVector> = manifest
        .entries
        .iter()
        .zip(&all_shapes)
        .filter(|((_, split), _)| *split == Split::Train)
        .map(|(_, (_, v))| v.clone())
        .collect();

    let gpa = generalized_procrustes(
        &train_shapes,
        true,
        GPA_DEFAULT_TOL,
        GPA_DEFAULT_MAX_ITER,
    )?;
    let model =
        PointDistributionModel::build(&gpa.aligned, config.variance_fraction, config.beta)?;

    eprintln!(
        "[build-pdm] {} training shapes, {} modes at {:.3} variance",
        train_shapes.len(),
        model.mode_count(),
        config.variance_fraction
    );
    eprintln!("[build-pdm] cumulative variance per mode:");
    for (i, cum) in model.cumulative_variance().iter().enumerate() {
        eprintln!("[build-pdm]   mode {:>3}: {:.6}", i + 1, cum);
    }

    // Unit-encoded reference parameters for every subject: align to the
    // consensus with the same similarity family used in training, project,
    // clamp, encode.
    let mut rows = Vec::with_capacity(all_shapes.len());
    for (id, vector) in &all_shapes {
        let transform = procrustes_pair(vector, &gpa.consensus, true)?;
        let aligned = transform.apply(vector);
        let params = model.clamp(&model.project(&aligned)?);
        let encoded = model.encode_unit(&params)?;
        rows.push((id.clone(), encoded));
    }
    write_reference_params(&config.model_dir.join("reference_params.csv"), &rows)?;
    pdm_file::write_model(&config.model_dir.join("model.pdm"), &model, &template)?;
    eprintln!(
        "[build-pdm] wrote model and reference parameters to {}",
        config.model_dir.display()
    );
    Ok(())
}
