//! Evaluation report CSV: one row per subject plus `mean` and `sd` rows.

use std::fmt::Write as _;
use std::path::Path;

use ventric_core::metrics::{agreement_values, EvaluationReport};

use super::write_file;
use crate::PipelineError;

pub const HEADER: &str = "subject_id,dice_lv_endo,dice_lv_epi,dice_rv,msd_lv_endo,msd_lv_epi,msd_rv,hd_lv_endo,hd_lv_epi,hd_rv,dlv_vol_abs,dlv_vol_rel,dlv_mass_abs,dlv_mass_rel,drv_vol_abs,drv_vol_rel";

pub fn encode(report: &EvaluationReport) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    let mut row = |id: &str, values: [f64; 15]| {
        let _ = write!(out, "{id}");
        for v in values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    };
    for s in &report.per_subject {
        row(&s.subject_id, agreement_values(&s.agreement, &s.deltas));
    }
    row("mean", agreement_values(&report.mean.0, &report.mean.1));
    row("sd", agreement_values(&report.sd.0, &report.sd.1));
    out
}

pub fn write_report(path: &Path, report: &EvaluationReport) -> Result<(), PipelineError> {
    write_file(path, encode(report).as_bytes())
}
