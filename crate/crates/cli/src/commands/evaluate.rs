//! `evaluate`: align predictions to references and write the metric table.

use ventric_core::metrics::{evaluate_pair, summarize};

use super::build_pdm::reference_shape_path;
use crate::config::PipelineConfig;
use crate::dataset::{read_manifest, DatasetPaths, Split};
use crate::formats::{ply, report};
use crate::parallel::Pool;
use crate::PipelineError;

pub fn evaluate(config: &PipelineConfig) -> Result<(), PipelineError> {
    super::log_config("evaluate", config);
    let paths = DatasetPaths::new(&config.dataset_dir);
    let manifest = read_manifest(&paths.manifest())?;
    let test_ids: Vec<String> = manifest
        .ids(Split::Test)
        .into_iter()
        .map(str::to_string)
        .collect();
    if test_ids.is_empty() {
        return Err(PipelineError::validation("no test subjects in the manifest"));
    }
    let predicted_dir = config.report_dir.join("predicted");
    let pool = Pool::new(config.threads);
    let evals = pool.map(test_ids.len(), |i| {
        let id = &test_ids[i];
        let predicted = ply::read_shape(&predicted_dir.join(format!("{id}.ply")))?;
        let reference = ply::read_shape(&reference_shape_path(config, id))?;
        evaluate_pair(id, &predicted, &reference, config.voxel_mm)
            .map_err(|e| PipelineError::validation(format!("{id}: {e}")))
    });
    let mut per_subject = Vec::with_capacity(evals.len());
    for e in evals {
        per_subject.push(e?);
    }
    let summary = summarize(per_subject);
    let path = config.report_dir.join("report.csv");
    report::write_report(&path, &summary)?;
    eprintln!(
        "[evaluate] {} subjects; mean LV endo dice {:.4}, LV epi dice {:.4}, RV dice {:.4}",
        summary.per_subject.len(),
        summary.mean.0.dice_lv_endo,
        summary.mean.0.dice_lv_epi,
        summary.mean.0.dice_rv
    );
    eprintln!("[evaluate] wrote {}", path.display());
    Ok(())
}
