//! Manifest and feature-table CSV formats.
//!
//! Manifest header: `id,path,label,score`. Feature table header: `id`
//! followed by [`FEATURE_NAMES`] in order. Numbers are written in Rust's
//! shortest round-trip form, so parsing a written table gives back the same
//! bits.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::features::{FeatureVector, FEATURE_NAMES, N_FEATURES};
use crate::models::FeatureMatrix;

pub const MANIFEST_HEADER: [&str; 4] = ["id", "path", "label", "score"];

#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header: {0}")]
    BadHeader(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("line {line}: {message}")]
    InvalidRow { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub path: PathBuf,
    pub label: u8,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), TableError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(TableError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), TableError> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(TableError::BadHeader(format!(
            "expected `{}`, found `{}`",
            expected.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64, TableError> {
    let v: f64 = field.trim().parse().map_err(|_| TableError::InvalidRow {
        line,
        message: format!("{what} {field:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(TableError::InvalidRow {
            line,
            message: format!("{what} is not finite"),
        });
    }
    Ok(v)
}

impl Manifest {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.id.as_str())
    }

    pub fn validate(&self) -> Result<(), TableError> {
        check_unique(self.ids())?;
        for (i, r) in self.rows.iter().enumerate() {
            if r.label > 1 || !(0.0..=1.0).contains(&r.score) {
                return Err(TableError::InvalidRow {
                    line: i + 2,
                    message: format!("label {} / score {} out of range", r.label, r.score),
                });
            }
        }
        Ok(())
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        check_header(rdr.headers()?, &MANIFEST_HEADER)?;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let label = match rec[2].trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(TableError::InvalidRow {
                        line,
                        message: format!("label {other:?} must be 0 or 1"),
                    })
                }
            };
            let score = parse_f64(&rec[3], line, "score")?;
            if !(0.0..=1.0).contains(&score) {
                return Err(TableError::InvalidRow {
                    line,
                    message: format!("score {score} outside [0, 1]"),
                });
            }
            rows.push(ManifestRow {
                id: rec[0].to_string(),
                path: PathBuf::from(&rec[1]),
                label,
                score,
            });
        }
        let manifest = Manifest { rows };
        check_unique(manifest.ids())?;
        Ok(manifest)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, TableError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<(), TableError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(MANIFEST_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.id.clone(),
                r.path.to_string_lossy().into_owned(),
                r.label.to_string(),
                r.score.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TableError> {
        self.to_writer(std::fs::File::create(path)?)
    }

    /// Resolves a row's WAV path against the manifest's directory.
    pub fn resolve(&self, row: &ManifestRow, manifest_path: &Path) -> PathBuf {
        if row.path.is_absolute() {
            row.path.clone()
        } else {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(&row.path)
        }
    }
}

/// Recording-level features keyed by id, in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub rows: Vec<FeatureVector>,
}

pub fn feature_header() -> Vec<&'static str> {
    std::iter::once("id").chain(FEATURE_NAMES).collect()
}

impl FeatureTable {
    pub fn push(&mut self, id: String, row: FeatureVector) {
        self.ids.push(id);
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row_of(&self, id: &str) -> Option<&FeatureVector> {
        self.ids.iter().position(|i| i == id).map(|p| &self.rows[p])
    }

    pub fn to_matrix(&self) -> FeatureMatrix {
        let data: Vec<f64> = self.rows.iter().flat_map(|r| r.values().iter().copied()).collect();
        FeatureMatrix::new(data, self.rows.len(), N_FEATURES)
            .and_then(|m| m.with_names(crate::features::feature_schema()))
            .expect("feature vectors have the schema width")
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<(), TableError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(feature_header())?;
        for (id, row) in self.ids.iter().zip(&self.rows) {
            let mut rec = Vec::with_capacity(N_FEATURES + 1);
            rec.push(id.clone());
            rec.extend(row.values().iter().map(|v| v.to_string()));
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TableError> {
        self.to_writer(std::fs::File::create(path)?)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        check_header(rdr.headers()?, &feature_header())?;
        let mut table = FeatureTable::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let values = rec
                .iter()
                .skip(1)
                .zip(FEATURE_NAMES)
                .map(|(field, name)| parse_f64(field, line, name))
                .collect::<Result<Vec<_>, _>>()?;
            let vector = FeatureVector::from_values(values).ok_or(TableError::InvalidRow {
                line,
                message: "wrong number of columns".into(),
            })?;
            table.push(rec[0].to_string(), vector);
        }
        check_unique(table.ids.iter().map(String::as_str))?;
        Ok(table)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, TableError> {
        Self::from_reader(std::fs::File::open(path)?)
    }
}
