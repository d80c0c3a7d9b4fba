use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::formation::VariantKind;
use crate::milp::SolveStatus;
use crate::radiality::Formulation;

pub const BATCH_COLUMNS: [&str; 11] = [
    "scenario",
    "seed",
    "variant",
    "radiality",
    "status",
    "objective",
    "restored_kw",
    "utilization",
    "nodes_explored",
    "wall_ms",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
    /// Build, solve or verification failed; see the `error` column.
    Error,
}

impl From<SolveStatus> for RowStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => RowStatus::Optimal,
            SolveStatus::Infeasible => RowStatus::Infeasible,
            SolveStatus::Unbounded => RowStatus::Unbounded,
            SolveStatus::Limit => RowStatus::Limit,
        }
    }
}

/// One solve of one scenario under one (variant, radiality) pair. Numeric
/// result columns are empty unless the solve was optimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub scenario: usize,
    pub seed: u64,
    pub variant: VariantKind,
    pub radiality: Formulation,
    pub status: RowStatus,
    pub objective: Option<f64>,
    pub restored_kw: Option<f64>,
    pub utilization: Option<f64>,
    pub nodes_explored: Option<u64>,
    pub wall_ms: f64,
    pub error: Option<String>,
}

pub fn write_batch_csv<W: Write>(out: W, rows: &[BatchRow]) -> Result<(), DataError> {
    let csv_err = |source| DataError::Csv { origin: "batch csv".into(), source };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(BATCH_COLUMNS).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))?;
    Ok(())
}

pub fn read_batch_csv<R: Read>(input: R, origin: &str) -> Result<Vec<BatchRow>, DataError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r
        .headers()
        .map_err(|source| DataError::Csv { origin: origin.into(), source })?
        .clone();
    if headers.iter().ne(BATCH_COLUMNS) {
        return Err(DataError::Schema {
            origin: origin.into(),
            field: "header".into(),
            line: 1,
            column: 1,
            message: format!("expected columns {}", BATCH_COLUMNS.join(",")),
        });
    }
    r.deserialize()
        .map(|row| row.map_err(|source| DataError::Csv { origin: origin.into(), source }))
        .collect()
}

impl BatchRow {
    pub fn save_all(path: impl AsRef<Path>, rows: &[BatchRow]) -> Result<(), DataError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| DataError::Io { path: path.into(), source })?;
        write_batch_csv(file, rows)
    }

    pub fn load_all(path: impl AsRef<Path>) -> Result<Vec<BatchRow>, DataError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| DataError::Io { path: path.into(), source })?;
        read_batch_csv(file, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: usize) -> BatchRow {
        BatchRow {
            scenario: i,
            seed: 1000 + i as u64,
            variant: VariantKind::Proposed,
            radiality: Formulation::Dmcf,
            status: RowStatus::Optimal,
            objective: Some(3715.0),
            restored_kw: Some(3715.0),
            utilization: Some(0.25),
            nodes_explored: Some(3),
            wall_ms: 12.5,
            error: None,
        }
    }

    #[test]
    fn empty_batch_is_header_only() {
        let mut buf = Vec::new();
        write_batch_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), BATCH_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn rows_round_trip() {
        let mut rows: Vec<BatchRow> = (0..100).map(row).collect();
        rows[3].status = RowStatus::Infeasible;
        rows[3].objective = None;
        rows[3].restored_kw = None;
        rows[3].utilization = None;
        rows[4].status = RowStatus::Error;
        rows[4].error = Some("bad, \"quoted\" text".into());
        let mut buf = Vec::new();
        write_batch_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 101);
        assert!(text.lines().nth(4).unwrap().starts_with("3,1003,proposed,dmcf,infeasible,,,,3,12.5,"));
        assert_eq!(read_batch_csv(buf.as_slice(), "mem").unwrap(), rows);
    }

    #[test]
    fn wrong_header_rejected() {
        let text = "a,b\n1,2\n";
        assert!(matches!(read_batch_csv(text.as_bytes(), "mem"), Err(DataError::Schema { .. })));
    }
}
