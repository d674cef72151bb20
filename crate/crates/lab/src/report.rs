//! CSV reports. Every file starts with the schema line `#journe-lab v1`;
//! later runs append rows below the existing ones.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

pub const SCHEMA_LINE: &str = "#journe-lab v1";

/// One measured quantity of one suite instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub seed: u64,
    pub suite: String,
    pub instance: u64,
    pub item: String,
    pub metric: String,
    pub value: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub seed: u64,
    pub variant: String,
    pub n_rects: usize,
    pub epsilon: String,
    pub lhs_upper: String,
    pub shadow: String,
    pub ratio_upper: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedRow {
    pub rect_id: usize,
    pub rect: String,
    pub emb: String,
    /// Per-coordinate factors joined by `;`.
    pub mu: String,
}

/// Rows as CSV text, with the schema line and column header when `fresh`.
pub fn to_csv<T: Serialize>(rows: &[T], fresh: bool) -> LabResult<String> {
    to_csv_parts(rows, fresh, fresh)
}

fn to_csv_parts<T: Serialize>(rows: &[T], schema: bool, header: bool) -> LabResult<String> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body =
        String::from_utf8(w.into_inner().map_err(|e| LabError::Config(e.to_string()))?).expect("csv output is utf-8");
    // serde-driven writers emit the column header with the first row.
    Ok(if schema { format!("{SCHEMA_LINE}\n{body}") } else { body })
}

/// Append `rows` to `path`, creating it with the schema line if needed.
pub fn append_csv<T: Serialize>(path: &Path, rows: &[T]) -> LabResult<()> {
    let existing = std::fs::read_to_string(path).unwrap_or_default();
    let schema = existing.is_empty();
    let header = !existing.lines().any(|l| !l.starts_with('#') && !l.is_empty());
    let text = to_csv_parts(rows, schema, header)?;
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| LabError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| LabError::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> LabResult<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u64) -> SuiteRow {
        SuiteRow {
            seed: 1,
            suite: "packing".into(),
            instance: i,
            item: "I".into(),
            metric: "area".into(),
            value: "3/2".into(),
            pass: true,
        }
    }

    #[test]
    fn appends_below_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        append_csv(&p, &[row(0)]).unwrap();
        append_csv(&p, &[row(1), row(2)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("#journe-lab v1\nseed,suite,instance,item,metric,value,pass\n"));
        assert_eq!(text.matches("seed,suite").count(), 1);
        assert_eq!(read_csv::<SuiteRow>(&p).unwrap(), vec![row(0), row(1), row(2)]);
    }
}
