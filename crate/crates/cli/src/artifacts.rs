//! Artifact paths, CSV tables and file hashing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DATASET: &str = "dataset.csv";
pub const SCANS: &str = "scans";
pub const SEGMENTED: &str = "segmented";
pub const DICTIONARY: &str = "dictionary.json";
pub const ENSEMBLE: &str = "ensemble.json";
pub const STIMULI: &str = "stimuli.csv";
pub const FILTRATION: &str = "filtration.json";
pub const CONCEPTS_MODEL: &str = "concepts.json";
pub const CONCEPTS: &str = "concepts.csv";
pub const RESPONSES: &str = "responses.csv";
pub const SWEEP: &str = "sweep.csv";
pub const CLASSIFICATION: &str = "classification.csv";
pub const CLASSIFIER: &str = "classifier.json";
pub const EMBEDDING: &str = "embedding.csv";
pub const GRID: &str = "grid.csv";
pub const BARCODE: &str = "barcode.csv";
pub const F_EDGES: &str = "f_edges.csv";
pub const ANNEXATION: &str = "annexation.csv";
pub const MANIFESTS: &str = "manifests";

pub fn scan_file(id: usize) -> String {
    format!("{SCANS}/{id:04}.xyz")
}

pub fn segmented_file(id: usize) -> String {
    format!("{SEGMENTED}/{id:04}.xyz")
}

/// One row of `dataset.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub id: usize,
    pub label: String,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub scale: f64,
    pub seed: u64,
}

/// A table of `id,label,v0,v1,...` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMatrix {
    pub ids: Vec<usize>,
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl LabeledMatrix {
    pub fn to_csv(&self, prefix: &str) -> String {
        let dim = self.rows.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((0..dim).map(|k| format!("{prefix}{k}")));
        w.write_record(&header).expect("in-memory write");
        for ((id, label), row) in self.ids.iter().zip(&self.labels).zip(&self.rows) {
            let mut rec = vec![id.to_string(), label.clone()];
            rec.extend(row.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut out = LabeledMatrix {
            ids: Vec::new(),
            labels: Vec::new(),
            rows: Vec::new(),
        };
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::artifact(path, e))?;
            if rec.len() < 2 {
                return Err(CliError::artifact(path, "rows need id and label columns"));
            }
            let id = rec[0].parse().map_err(|e| CliError::artifact(path, format!("bad id `{}`: {e}", &rec[0])))?;
            let row = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|e| CliError::artifact(path, format!("bad value `{v}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            out.ids.push(id);
            out.labels.push(rec[1].to_string());
            out.rows.push(row);
        }
        Ok(out)
    }
}

/// Shortest round-trip form, the way the CSV serializer writes floats.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        ryu::Buffer::new().format_finite(v).to_string()
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn write_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<Vec<T>, CliError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::artifact(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Stage record written next to the artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub stage_seed: u64,
    pub parameters: serde_json::Value,
    /// Relative path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub results: serde_json::Value,
}

pub fn manifest_path(out: &Path, stage: &str) -> PathBuf {
    out.join(MANIFESTS).join(format!("{stage}.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_matches_serializer() {
        #[derive(Serialize)]
        struct Row {
            v: f64,
        }
        for v in [0.0, 1.0, -3.0, 0.1, 1e-7, 123.456, 2.5e20, f64::INFINITY, f64::NEG_INFINITY, f64::NAN] {
            let csv = write_csv(&[Row { v }]);
            assert_eq!(csv.lines().nth(1).unwrap(), fmt_f64(v), "{v}");
        }
    }

    #[test]
    fn labeled_matrix_round_trips() {
        let m = LabeledMatrix {
            ids: vec![3, 9],
            labels: vec!["a,b".into(), "c".into()],
            rows: vec![vec![0.1, 1.0 / 3.0], vec![0.0, 1e-300]],
        };
        let text = m.to_csv("s");
        assert!(text.starts_with("id,label,s0,s1\n"));
        assert_eq!(LabeledMatrix::from_csv(&text, Path::new("x")).unwrap(), m);
    }
}
