//! Static pipeline configuration: a flat `key = value` text file plus
//! command-line overrides (flags win).
//!
//! Unknown keys are rejected so typos fail loudly. See the README for the
//! full key list.

use std::path::{Path, PathBuf};

use ventric_core::cpd::CpdConfig;
use ventric_core::net::{ArchitectureConfig, TrainConfig};
use ventric_core::phantom::PhantomConfig;

use crate::PipelineError;

#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceSource {
    GroundTruth,
    Registered,
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub dataset_dir: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub subjects: usize,
    pub noise_sigma: f64,
    pub latent_amplitudes: [f64; 4],
    pub variance_fraction: f64,
    pub beta: f64,
    pub cpd: CpdConfig,
    pub sax_channels: Vec<usize>,
    pub lax_channels: Vec<usize>,
    pub head_hidden: [usize; 3],
    pub use_metadata: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub voxel_mm: f64,
    pub reference_source: ReferenceSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let arch = ArchitectureConfig::full_scale(1);
        let tc = TrainConfig::default();
        PipelineConfig {
            dataset_dir: PathBuf::from("data"),
            model_dir: PathBuf::from("models"),
            report_dir: PathBuf::from("reports"),
            seed: 7,
            threads: 1,
            subjects: PhantomConfig::default().subject_count,
            noise_sigma: PhantomConfig::default().noise_sigma,
            latent_amplitudes: PhantomConfig::default().latent_amplitudes,
            variance_fraction: 0.997,
            beta: ventric_core::pdm::DEFAULT_BETA,
            cpd: CpdConfig::default(),
            sax_channels: arch.sax_channels,
            lax_channels: arch.lax_channels,
            head_hidden: arch.head_hidden,
            use_metadata: true,
            learning_rate: tc.learning_rate,
            batch_size: tc.batch_size,
            iterations: tc.iterations,
            voxel_mm: ventric_core::metrics::DEFAULT_VOXEL_SPACING_MM,
            reference_source: ReferenceSource::GroundTruth,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut config = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::config(format!("line {}: expected key = value", lineno + 1))
            })?;
            config.set(key.trim(), value.trim()).map_err(|e| {
                PipelineError::config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(value: &str) -> Result<T, String> {
            value
                .parse::<T>()
                .map_err(|_| format!("cannot parse {value:?}"))
        }
        fn list(value: &str) -> Result<Vec<usize>, String> {
            value.split(',').map(|v| num::<usize>(v.trim())).collect()
        }
        match key {
            "dataset_dir" => self.dataset_dir = PathBuf::from(value),
            "model_dir" => self.model_dir = PathBuf::from(value),
            "report_dir" => self.report_dir = PathBuf::from(value),
            "seed" => self.seed = num(value)?,
            "threads" => self.threads = num(value)?,
            "cohort.subjects" => self.subjects = num(value)?,
            "cohort.noise_sigma" => self.noise_sigma = num(value)?,
            "cohort.amp_scale" => self.latent_amplitudes[0] = num(value)?,
            "cohort.amp_wall" => self.latent_amplitudes[1] = num(value)?,
            "cohort.amp_long_axis" => self.latent_amplitudes[2] = num(value)?,
            "cohort.amp_rv_breadth" => self.latent_amplitudes[3] = num(value)?,
            "pdm.variance_fraction" => self.variance_fraction = num(value)?,
            "pdm.beta" => self.beta = num(value)?,
            "cpd.kernel_width" => self.cpd.kernel_width = num(value)?,
            "cpd.regularization" => self.cpd.regularization_weight = num(value)?,
            "cpd.outlier_weight" => self.cpd.outlier_weight = num(value)?,
            "cpd.max_iter" => self.cpd.max_iter = num(value)?,
            "cpd.sigma_tol" => self.cpd.sigma_tol = num(value)?,
            "arch.sax_channels" => self.sax_channels = list(value)?,
            "arch.lax_channels" => self.lax_channels = list(value)?,
            "arch.head_hidden" => {
                let v = list(value)?;
                if v.len() != 3 {
                    return Err("head_hidden needs exactly 3 sizes".to_string());
                }
                self.head_hidden = [v[0], v[1], v[2]];
            }
            "arch.use_metadata" => {
                self.use_metadata = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(format!("cannot parse {value:?} as bool")),
                }
            }
            "train.learning_rate" => self.learning_rate = num(value)?,
            "train.batch_size" => self.batch_size = num(value)?,
            "train.iterations" => self.iterations = num(value)?,
            "metrics.voxel_mm" => self.voxel_mm = num(value)?,
            "eval.reference" => {
                self.reference_source = match value {
                    "ground_truth" => ReferenceSource::GroundTruth,
                    "registered" => ReferenceSource::Registered,
                    _ => return Err(format!("unknown reference source {value:?}")),
                }
            }
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.subjects < 10 {
            return Err(PipelineError::config("cohort.subjects must be at least 10"));
        }
        if !(self.variance_fraction > 0.0 && self.variance_fraction <= 1.0) {
            return Err(PipelineError::config(
                "pdm.variance_fraction must be in (0, 1]",
            ));
        }
        if self.batch_size < 2 {
            return Err(PipelineError::config("train.batch_size must be at least 2"));
        }
        if self.iterations == 0 {
            return Err(PipelineError::config("train.iterations must be positive"));
        }
        if self.voxel_mm <= 0.0 {
            return Err(PipelineError::config("metrics.voxel_mm must be positive"));
        }
        if self.threads == 0 {
            return Err(PipelineError::config("threads must be at least 1"));
        }
        self.cpd.validate().map_err(PipelineError::Cpd)?;
        Ok(())
    }

    pub fn phantom_config(&self) -> PhantomConfig {
        PhantomConfig {
            subject_count: self.subjects,
            latent_amplitudes: self.latent_amplitudes,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }

    pub fn architecture(&self, mode_count: usize) -> ArchitectureConfig {
        ArchitectureConfig {
            sax_channels: self.sax_channels.clone(),
            lax_channels: self.lax_channels.clone(),
            head_hidden: self.head_hidden,
            use_metadata: self.use_metadata,
            ..ArchitectureConfig::full_scale(mode_count)
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            iterations: self.iterations,
            seed: self.seed,
        }
    }

    /// Resolved key/value view, logged by each subcommand so runs are
    /// reconstructible.
    pub fn describe(&self) -> String {
        let amp = self.latent_amplitudes;
        format!(
            "dataset_dir = {}\nmodel_dir = {}\nreport_dir = {}\nseed = {}\nthreads = {}\n\
             cohort.subjects = {}\ncohort.noise_sigma = {}\n\
             cohort.amp_scale = {}\ncohort.amp_wall = {}\ncohort.amp_long_axis = {}\ncohort.amp_rv_breadth = {}\n\
             pdm.variance_fraction = {}\npdm.beta = {}\n\
             cpd.kernel_width = {}\ncpd.regularization = {}\ncpd.outlier_weight = {}\ncpd.max_iter = {}\ncpd.sigma_tol = {}\n\
             arch.sax_channels = {}\narch.lax_channels = {}\narch.head_hidden = {}\narch.use_metadata = {}\n\
             train.learning_rate = {}\ntrain.batch_size = {}\ntrain.iterations = {}\n\
             metrics.voxel_mm = {}\neval.reference = {}",
            self.dataset_dir.display(),
            self.model_dir.display(),
            self.report_dir.display(),
            self.seed,
            self.threads,
            self.subjects,
            self.noise_sigma,
            amp[0],
            amp[1],
            amp[2],
            amp[3],
            self.variance_fraction,
            self.beta,
            self.cpd.kernel_width,
            self.cpd.regularization_weight,
            self.cpd.outlier_weight,
            self.cpd.max_iter,
            self.cpd.sigma_tol,
            join(&self.sax_channels),
            join(&self.lax_channels),
            join(&self.head_hidden),
            self.use_metadata,
            self.learning_rate,
            self.batch_size,
            self.iterations,
            self.voxel_mm,
            match self.reference_source {
                ReferenceSource::GroundTruth => "ground_truth",
                ReferenceSource::Registered => "registered",
            },
        )
    }
}

fn join(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys_and_rejects_unknown_ones() {
        let dir = std::env::temp_dir().join("ventric_config_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pipeline.cfg");
        std::fs::write(
            &path,
            "# comment\nseed = 11\ncohort.subjects = 40\narch.sax_channels = 4,8,16,32\n\
             pdm.variance_fraction = 0.99\neval.reference = registered\n",
        )
        .unwrap();
        let config = PipelineConfig::load(&path).unwrap();
        assert_eq!(config.seed, 11);
        assert_eq!(config.subjects, 40);
        assert_eq!(config.sax_channels, vec![4, 8, 16, 32]);
        assert_eq!(config.reference_source, ReferenceSource::Registered);

        std::fs::write(&path, "sax.channels = 1\n").unwrap();
        assert!(PipelineConfig::load(&path).is_err());

        std::fs::write(&path, "train.batch_size = 1\n").unwrap();
        assert!(PipelineConfig::load(&path).is_err());
    }

    #[test]
    fn describe_round_trips_through_the_parser() {
        let config = PipelineConfig::default();
        let dir = std::env::temp_dir().join("ventric_config_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pipeline.cfg");
        std::fs::write(&path, config.describe()).unwrap();
        let reloaded = PipelineConfig::load(&path).unwrap();
        assert_eq!(config.describe(), reloaded.describe());
    }
}
