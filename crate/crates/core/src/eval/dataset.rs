//! Manifest CSV: header `frame,label,quadrants`, one row per frame.
//!
//! `frame` is a path relative to the manifest, `label` is `pos` or `neg`,
//! and `quadrants` is a `|`-separated subset of `q0..q3` (possibly empty).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::EvalError;
use crate::detect::QuadrantSet;

const HEADER: [&str; 3] = ["frame", "label", "quadrants"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "pos",
            Label::Negative => "neg",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" => Ok(Label::Positive),
            "neg" => Ok(Label::Negative),
            other => Err(format!("bad label {other:?} (expected pos or neg)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    /// Resolved against the manifest's directory.
    pub path: PathBuf,
    /// As written in the manifest.
    pub frame: String,
    pub label: Label,
    pub quadrants: QuadrantSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedDataset {
    name: String,
    entries: Vec<DatasetEntry>,
}

impl AnnotatedDataset {
    pub fn new(name: impl Into<String>, entries: Vec<DatasetEntry>) -> Self {
        Self {
            name: name.into(),
            entries,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.entries.iter().map(|e| e.label).collect()
    }

    /// Same entries in a different order (for order-sensitivity checks).
    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            entries: order.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }
}

/// Loads a manifest. Rows are numbered from 1, not counting the header.
/// The dataset name is the name of the manifest's parent directory.
pub fn load_dataset(manifest: &Path) -> Result<AnnotatedDataset, EvalError> {
    let text = std::fs::read(manifest).map_err(|e| EvalError::Io {
        path: manifest.to_path_buf(),
        source: e,
    })?;
    let base = manifest.parent().unwrap_or(Path::new("."));

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_slice());

    let header = reader.headers().map_err(|e| EvalError::Manifest {
        row: 0,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(EvalError::Manifest {
            row: 0,
            message: format!("header must be {:?}", HEADER.join(",")),
        });
    }

    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| EvalError::Manifest {
            row,
            message: e.to_string(),
        })?;
        let frame = record[0].to_string();
        if frame.is_empty() {
            return Err(EvalError::Manifest {
                row,
                message: "empty frame path".into(),
            });
        }
        let label = record[1]
            .parse::<Label>()
            .map_err(|message| EvalError::Manifest { row, message })?;
        let quadrants = record[2]
            .parse::<QuadrantSet>()
            .map_err(|message| EvalError::Manifest { row, message })?;
        let path = base.join(&frame);
        if !path.is_file() {
            return Err(EvalError::MissingFrame { row, path });
        }
        entries.push(DatasetEntry {
            path,
            frame,
            label,
            quadrants,
        });
    }

    if entries.is_empty() {
        return Err(EvalError::Empty {
            path: manifest.to_path_buf(),
        });
    }

    let name = manifest
        .canonicalize()
        .ok()
        .and_then(|p| p.parent()?.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "dataset".to_string());
    Ok(AnnotatedDataset::new(name, entries))
}

/// Serializes rows of `(frame, label, quadrants)` in manifest format with
/// `\n` line endings.
pub fn write_manifest<'a>(rows: impl IntoIterator<Item = (&'a str, Label, QuadrantSet)>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for (frame, label, quadrants) in rows {
        w.write_record([frame, label.as_str(), &quadrants.to_string()])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}
