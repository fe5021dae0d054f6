//! `train`: mini-batch Adam on the mode-weighted loss, with a loss log and
//! periodic checkpoints.

use std::fmt::Write as _;

use ventric_core::net::{self, TrainSample};

use crate::config::PipelineConfig;
use crate::dataset::{
    load_subjects, read_manifest, read_reference_params, train_bounds, DatasetPaths, Split,
};
use crate::formats::{checkpoint, metadata, pdm_file, write_file};
use crate::parallel::Pool;
use crate::PipelineError;

pub const CHECKPOINT_EVERY: usize = 1000;

pub fn train(config: &PipelineConfig) -> Result<(), PipelineError> {
    super::log_config("train", config);
    let paths = DatasetPaths::new(&config.dataset_dir);
    let manifest = read_manifest(&paths.manifest())?;
    let records = metadata::read_metadata(&paths.metadata())?;
    let bounds = train_bounds(&manifest, &records);
    let references = read_reference_params(&config.model_dir.join("reference_params.csv"))?;
    let (model, _) = pdm_file::read_model(&config.model_dir.join("model.pdm"))?;
    let k = model.mode_count();

    let loaded = load_subjects(
        &paths,
        &manifest,
        &records,
        &bounds,
        Some(&references),
        Some(Split::Train),
    )?;
    let dataset: Vec<TrainSample> = loaded
        .iter()
        .map(|s| TrainSample::from_subject(&s.sample))
        .collect();
    eprintln!(
        "[train] {} training subjects, k = {k}, {} iterations",
        dataset.len(),
        config.iterations
    );

    let arch = config.architecture(k);
    let tc = config.train_config();
    let pool = Pool::new(config.threads);
    let mut loss_log = String::from("iteration,loss\n");
    let model_dir = config.model_dir.clone();
    let bounds_for_observer = bounds.clone();
    let mut checkpoint_error: Option<PipelineError> = None;
    let params = net::train(&dataset, &arch, &tc, &pool, &mut |iteration, loss, p| {
        let _ = writeln!(loss_log, "{iteration},{loss}");
        if iteration % CHECKPOINT_EVERY == 0 && checkpoint_error.is_none() {
            let path = model_dir.join(format!("checkpoint_{iteration}.nnet"));
            if let Err(e) = checkpoint::write_checkpoint(&path, p, &bounds_for_observer) {
                checkpoint_error = Some(e);
            }
        }
    })?;
    if let Some(e) = checkpoint_error {
        return Err(e);
    }

    checkpoint::write_checkpoint(&config.model_dir.join("checkpoint.nnet"), &params, &bounds)?;
    write_file(&config.model_dir.join("loss_log.csv"), loss_log.as_bytes())?;
    let final_loss = loss_log
        .lines()
        .last()
        .and_then(|l| l.split(',').nth(1))
        .unwrap_or("?")
        .to_string();
    eprintln!("[train] finished; final batch loss {final_loss}");
    Ok(())
}
