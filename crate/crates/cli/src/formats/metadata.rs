//! Metadata CSV with the fixed header
//! `age,weight,height,bmi,bsa,heart_rate,dbp,sbp,sex,smoking,alcohol`;
//! one row per subject in manifest order.

use std::fmt::Write as _;
use std::path::Path;

use ventric_core::preprocess::{Alcohol, MetadataRecord, Sex, Smoking};

use super::{csv_fields, parse_f64, read_file, write_file};
use crate::PipelineError;

pub const HEADER: &str = "age,weight,height,bmi,bsa,heart_rate,dbp,sbp,sex,smoking,alcohol";

fn sex_label(s: Sex) -> &'static str {
    match s {
        Sex::Female => "female",
        Sex::Male => "male",
    }
}

fn smoking_label(s: Smoking) -> &'static str {
    match s {
        Smoking::Never => "never",
        Smoking::Previous => "previous",
        Smoking::Current => "current",
    }
}

fn alcohol_label(a: Alcohol) -> &'static str {
    match a {
        Alcohol::No => "no",
        Alcohol::Yes => "yes",
    }
}

pub fn encode(records: &[MetadataRecord]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.age_years,
            r.weight_kg,
            r.height_cm,
            r.bmi,
            r.bsa_m2,
            r.heart_rate_bpm,
            r.diastolic_bp,
            r.systolic_bp,
            sex_label(r.sex),
            smoking_label(r.smoking),
            alcohol_label(r.alcohol)
        );
    }
    out
}

pub fn write_metadata(path: &Path, records: &[MetadataRecord]) -> Result<(), PipelineError> {
    write_file(path, encode(records).as_bytes())
}

pub fn read_metadata(path: &Path) -> Result<Vec<MetadataRecord>, PipelineError> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| PipelineError::format(path, "metadata CSV is not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(PipelineError::format(path, "bad metadata CSV header"));
    }
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields = csv_fields(line);
        if fields.len() != 11 {
            return Err(PipelineError::format(path, "metadata row needs 11 fields"));
        }
        let sex = match fields[8] {
            "female" => Sex::Female,
            "male" => Sex::Male,
            other => {
                return Err(PipelineError::format(path, format!("unknown sex {other:?}")))
            }
        };
        let smoking = match fields[9] {
            "never" => Smoking::Never,
            "previous" => Smoking::Previous,
            "current" => Smoking::Current,
            other => {
                return Err(PipelineError::format(
                    path,
                    format!("unknown smoking status {other:?}"),
                ))
            }
        };
        let alcohol = match fields[10] {
            "no" => Alcohol::No,
            "yes" => Alcohol::Yes,
            other => {
                return Err(PipelineError::format(
                    path,
                    format!("unknown alcohol value {other:?}"),
                ))
            }
        };
        out.push(MetadataRecord {
            age_years: parse_f64(path, fields[0])?,
            weight_kg: parse_f64(path, fields[1])?,
            height_cm: parse_f64(path, fields[2])?,
            bmi: parse_f64(path, fields[3])?,
            bsa_m2: parse_f64(path, fields[4])?,
            heart_rate_bpm: parse_f64(path, fields[5])?,
            diastolic_bp: parse_f64(path, fields[6])?,
            systolic_bp: parse_f64(path, fields[7])?,
            sex,
            smoking,
            alcohol,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ventric_core::phantom::sample_metadata;

    #[test]
    fn metadata_round_trips_exactly() {
        let records: Vec<MetadataRecord> = (0..5)
            .map(|i| sample_metadata(&[0.1 * i as f64, -0.2, 0.3, 0.4], i as u64))
            .collect();
        let text = encode(&records);
        std::fs::write("/tmp/ventric_metadata_test.csv", &text).unwrap();
        let parsed = read_metadata(Path::new("/tmp/ventric_metadata_test.csv")).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn unknown_categorical_is_rejected() {
        let text = format!("{HEADER}\n61,76,170,26,1.8,68,79,139,female,sometimes,no\n");
        std::fs::write("/tmp/ventric_metadata_bad.csv", &text).unwrap();
        assert!(read_metadata(Path::new("/tmp/ventric_metadata_bad.csv")).is_err());
    }
}
