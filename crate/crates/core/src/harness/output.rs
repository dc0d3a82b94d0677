//! CSV and JSON-lines writers. File names derive from the configured
//! output path: `out.csv`, `out.summary.csv`, `out.traces.jsonl`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{BoundCheckOutput, RunOutput};
use crate::error::{Error, Result};

/// `dir/stem.<suffix>` beside `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Serializes `rows` as CSV with a header row; the header is written even
/// when `rows` is empty.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Format(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub const RESULT_HEADER: &[&str] = &[
    "snr_db",
    "system",
    "attack",
    "frame_id",
    "rho_star",
    "success",
    "steps",
    "clean_distortion",
    "final_distortion",
    "bound_lower",
    "bound_upper",
    "seed",
];

pub const SUMMARY_HEADER: &[&str] = &[
    "snr_db",
    "system",
    "attack",
    "frames",
    "successes",
    "median_rho",
    "q1_rho",
    "q3_rho",
    "median_clean_distortion",
    "bound_lower",
    "bound_upper",
    "ratio_sem_over_sscc",
    "seed",
];

pub const BOUND_HEADER: &[&str] = &[
    "snr_db",
    "system",
    "attack",
    "frame_id",
    "rho_star",
    "success",
    "d_star",
    "g_hat",
    "bound_lower",
    "bound_upper",
    "regime",
    "condition_lhs",
    "condition_rhs",
    "condition_holds",
    "violation",
    "distortion_decreased",
    "seed",
];

/// Writes rows to `path`, the summary beside it and traces when present.
/// Returns every file written.
pub fn write_run(path: &Path, out: &RunOutput) -> Result<Vec<PathBuf>> {
    write_csv(path, &out.rows, RESULT_HEADER)?;
    let summary = sibling(path, "summary.csv");
    write_csv(&summary, &out.summary, SUMMARY_HEADER)?;
    let mut files = vec![path.to_path_buf(), summary];
    if !out.traces.is_empty() {
        let traces = sibling(path, "traces.jsonl");
        write_jsonl(&traces, &out.traces)?;
        files.push(traces);
    }
    Ok(files)
}

pub fn write_bound_check(path: &Path, out: &BoundCheckOutput) -> Result<Vec<PathBuf>> {
    write_csv(path, &out.rows, BOUND_HEADER)?;
    let summary = sibling(path, "summary.csv");
    write_csv(&summary, &out.summary, SUMMARY_HEADER)?;
    Ok(vec![path.to_path_buf(), summary])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::{BoundRow, ResultRow, SummaryRow};

    #[test]
    fn header_matches_row_fields() {
        let row = ResultRow {
            snr_db: 6.0,
            system: "classical".into(),
            attack: "vs".into(),
            frame_id: 3,
            rho_star: 1.5,
            success: true,
            steps: 7,
            clean_distortion: 0.01,
            final_distortion: 0.4,
            bound_lower: None,
            bound_upper: Some(2.0),
            seed: 9,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_csv(&p, std::slice::from_ref(&row), RESULT_HEADER).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "snr_db,system,attack,frame_id,rho_star,success,steps,clean_distortion,final_distortion,bound_lower,bound_upper,seed\n\
             6.0,classical,vs,3,1.5,true,7,0.01,0.4,,2.0,9\n"
        );
        // serde's own field order agrees with the fixed header
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(&row).unwrap();
        let auto = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(auto.lines().next().unwrap(), RESULT_HEADER.join(","));
    }

    fn serde_header<T: Serialize>(row: &T) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(row).unwrap();
        String::from_utf8(w.into_inner().unwrap()).unwrap().lines().next().unwrap().to_string()
    }

    #[test]
    fn summary_and_bound_headers_follow_field_order() {
        let summary = SummaryRow {
            snr_db: 9.0,
            system: "semantic".into(),
            attack: "pga".into(),
            frames: 4,
            successes: 3,
            median_rho: 1.0,
            q1_rho: 0.5,
            q3_rho: f64::INFINITY,
            median_clean_distortion: 0.01,
            bound_lower: Some(0.2),
            bound_upper: None,
            ratio_sem_over_sscc: Some(2.0),
            seed: 1,
        };
        assert_eq!(serde_header(&summary), SUMMARY_HEADER.join(","));
        let bound = BoundRow {
            snr_db: 9.0,
            system: "classical".into(),
            attack: "vs".into(),
            frame_id: 0,
            rho_star: 1.0,
            success: true,
            d_star: 0.3,
            g_hat: None,
            bound_lower: None,
            bound_upper: Some(5.0),
            regime: Some("II".into()),
            condition_lhs: None,
            condition_rhs: None,
            condition_holds: Some(true),
            violation: false,
            distortion_decreased: false,
            seed: 1,
        };
        assert_eq!(serde_header(&bound), BOUND_HEADER.join(","));
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/res.csv"), "summary.csv"), Path::new("out/res.summary.csv"));
        assert_eq!(sibling(Path::new("res"), "traces.jsonl"), Path::new("res.traces.jsonl"));
    }
}
