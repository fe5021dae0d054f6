//! `register`: fit the biventricular template to every subject's contour
//! cloud, producing reference meshes with template topology.

use ventric_core::cpd::fit_template_to_contours;
use ventric_core::phantom::contours_by_structure;

use crate::config::PipelineConfig;
use crate::dataset::{read_manifest, DatasetPaths};
use crate::formats::{contours, ply};
use crate::parallel::Pool;
use crate::PipelineError;

pub fn register(config: &PipelineConfig) -> Result<(), PipelineError> {
    super::log_config("register", config);
    let paths = DatasetPaths::new(&config.dataset_dir);
    let template = ply::read_shape(&paths.template())?;
    let manifest = read_manifest(&paths.manifest())?;
    let pool = Pool::new(config.threads);

    let results = pool.map(manifest.entries.len(), |i| {
        let id = &manifest.entries[i].0;
        let points = contours::read_contours(&paths.contours(id))?;
        let labelled = contours_by_structure(&points);
        let fitted = fit_template_to_contours(&template, &labelled, &config.cpd)
            .map_err(|e| PipelineError::validation(format!("{id}: {e}")))?;
        Ok::<_, PipelineError>((id.clone(), fitted))
    });

    let out_dir = config.report_dir.join("registered");
    for result in results {
        let (id, fitted) = result?;
        ply::write_shape(&out_dir.join(format!("{id}.ply")), &fitted)?;
    }
    eprintln!(
        "[register] fitted {} subjects into {}",
        manifest.entries.len(),
        out_dir.display()
    );
    Ok(())
}
