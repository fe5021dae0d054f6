//! `gen-synthetic`: write a phantom cohort to the dataset directory.

use ventric_core::phantom::{generate_subject, make_phantom, split_counts, subject_id};

use crate::config::PipelineConfig;
use crate::dataset::{write_latents, write_manifest, DatasetPaths, Split};
use crate::formats::{contours, metadata, ply, tensor};
use crate::parallel::Pool;
use crate::PipelineError;

pub fn gen_synthetic(config: &PipelineConfig) -> Result<(), PipelineError> {
    super::log_config("gen-synthetic", config);
    let phantom = config.phantom_config();
    let paths = DatasetPaths::new(&config.dataset_dir);
    let pool = Pool::new(config.threads);

    let template = make_phantom(&phantom, &[0.0; 4])?;
    ply::write_shape(&paths.template(), &template)?;

    let subjects = pool.map(phantom.subject_count, |i| generate_subject(&phantom, i));

    let mut records = Vec::with_capacity(subjects.len());
    let mut latents = Vec::with_capacity(subjects.len());
    for result in subjects {
        let subject = result?;
        let id = subject_id(subject.index);
        ply::write_shape(&paths.ground_truth(&id), &subject.shape)?;
        contours::write_contours(&paths.contours(&id), &subject.contours)?;
        tensor::write_sax(&paths.sax(&id), &subject.sax)?;
        tensor::write_lax(&paths.lax(&id), &subject.lax)?;
        latents.push((id, subject.latents));
        records.push(subject.record);
    }
    metadata::write_metadata(&paths.metadata(), &records)?;
    write_latents(&paths.latents(), &latents)?;

    let (train_count, _) = split_counts(phantom.subject_count);
    let entries: Vec<(String, Split)> = (0..phantom.subject_count)
        .map(|i| {
            let split = if i < train_count { Split::Train } else { Split::Test };
            (subject_id(i), split)
        })
        .collect();
    write_manifest(&paths.manifest(), &entries)?;

    eprintln!(
        "[gen-synthetic] wrote {} subjects ({} train / {} test) to {}",
        phantom.subject_count,
        train_count,
        phantom.subject_count - train_count,
        config.dataset_dir.display()
    );
    Ok(())
}
