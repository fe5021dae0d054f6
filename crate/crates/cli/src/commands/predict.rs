//! `predict`: run the network on test subjects and write predicted meshes.

use std::path::{Path, PathBuf};

use ventric_core::net::{predict_shape, ArchitectureConfig, NetworkParams, TrainSample};

use crate::config::PipelineConfig;
use crate::dataset::{load_subjects, read_manifest, DatasetPaths, Split};
use crate::formats::{checkpoint, metadata, pdm_file, ply};
use crate::parallel::Pool;
use crate::PipelineError;

/// Reconstructs the architecture from checkpoint tensor shapes.
pub fn infer_architecture(params: &NetworkParams) -> Result<ArchitectureConfig, PipelineError> {
    let missing = |name: &str| PipelineError::validation(format!("checkpoint lacks {name}"));
    let need = |name: &str| -> Result<&ventric_core::nn::Tensor, PipelineError> {
        if params.has(name) {
            Ok(params.get(name))
        } else {
            Err(missing(name))
        }
    };
    let encoder = |prefix: &str| -> Result<(usize, Vec<usize>, usize, usize), PipelineError> {
        let mut channels = Vec::new();
        let mut stage = 0;
        while params.has(&format!("{prefix}.enc{stage}.conv0.w")) {
            channels.push(params.get(&format!("{prefix}.enc{stage}.conv0.w")).dims()[0]);
            stage += 1;
        }
        if channels.is_empty() {
            return Err(missing(&format!("{prefix}.enc0.conv0.w")));
        }
        let in_ch = need(&format!("{prefix}.enc0.conv0.w"))?.dims()[1];
        let final_w = need(&format!("{prefix}.final.w"))?;
        let features = final_w.dims()[0];
        let size = final_w.dims()[2] << channels.len();
        Ok((in_ch, channels, features, size))
    };
    let (sax_slices, sax_channels, sax_features, sax_size) = encoder("sax")?;
    let (_, lax_channels, lax_features, lax_size) = encoder("lax")?;
    let use_metadata = params.has("mlp.fc0.w");
    let (meta_inputs, mlp_hidden, mlp_output) = if use_metadata {
        let inputs = need("mlp.fc0.w")?.dims()[1];
        let hidden = [
            need("mlp.fc0.w")?.dims()[0],
            need("mlp.fc1.w")?.dims()[0],
            need("mlp.fc2.w")?.dims()[0],
        ];
        (inputs, hidden, need("mlp.fc3.w")?.dims()[0])
    } else {
        let d = ArchitectureConfig::full_scale(1);
        (d.meta_inputs, d.mlp_hidden, d.mlp_output)
    };
    let head_hidden = [
        need("head.fc0.w")?.dims()[0],
        need("head.fc1.w")?.dims()[0],
        need("head.fc2.w")?.dims()[0],
    ];
    let mode_count = need("head.fc3.w")?.dims()[0];
    let arch = ArchitectureConfig {
        sax_slices,
        sax_size,
        sax_channels,
        sax_features,
        lax_size,
        lax_channels,
        lax_features,
        meta_inputs,
        mlp_hidden,
        mlp_output,
        head_hidden,
        mode_count,
        use_metadata,
    };
    arch.validate()?;
    Ok(arch)
}

pub fn predict(
    config: &PipelineConfig,
    checkpoint_path: Option<&Path>,
) -> Result<(), PipelineError> {
    super::log_config("predict", config);
    let default_path = config.model_dir.join("checkpoint.nnet");
    let checkpoint_path: PathBuf = checkpoint_path
        .map(Path::to_path_buf)
        .unwrap_or(default_path);
    let (params, bounds) = checkpoint::read_checkpoint(&checkpoint_path)?;
    let arch = infer_architecture(&params)?;
    let (model, template) = pdm_file::read_model(&config.model_dir.join("model.pdm"))?;
    if model.mode_count() != arch.mode_count {
        return Err(PipelineError::validation(format!(
            "checkpoint predicts {} modes but the model has {}",
            arch.mode_count,
            model.mode_count()
        )));
    }

    let paths = DatasetPaths::new(&config.dataset_dir);
    let manifest = read_manifest(&paths.manifest())?;
    let records = metadata::read_metadata(&paths.metadata())?;
    let loaded = load_subjects(&paths, &manifest, &records, &bounds, None, Some(Split::Test))?;
    eprintln!(
        "[predict] {} test subjects via {}",
        loaded.len(),
        checkpoint_path.display()
    );

    let pool = Pool::new(config.threads);
    let results = pool.map(loaded.len(), |i| {
        let subject = &loaded[i];
        let sample = TrainSample::from_subject(&subject.sample);
        predict_shape(&params, &arch, &sample, &model, &template)
            .map(|shape| (subject.id.clone(), shape))
            .map_err(|e| PipelineError::validation(format!("{}: {e}", subject.id)))
    });
    let out_dir = config.report_dir.join("predicted");
    for result in results {
        let (id, shape) = result?;
        ply::write_shape(&out_dir.join(format!("{id}.ply")), &shape)?;
    }
    eprintln!("[predict] wrote predictions to {}", out_dir.display());
    Ok(())
}
