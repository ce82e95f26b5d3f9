//! Delimiter-separated datasets with a header row, an `id` column and a
//! `freq` column.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{exit, CliError};
use crate::regression::FrequencyVector;

pub const ID_COLUMN: &str = "id";
pub const FREQ_COLUMN: &str = "freq";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub ids: Vec<String>,
    pub sha256: String,
    records: Vec<(u64, csv::StringRecord)>,
}

impl Dataset {
    pub fn read(path: &Path, delimiter: u8) -> Result<Self, CliError> {
        let bytes =
            std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(bytes.as_slice());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut records = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            records.push((line, record));
        }
        let mut ds = Self {
            path: path.to_path_buf(),
            headers,
            ids: Vec::new(),
            sha256,
            records,
        };
        let id_col = ds.require(ID_COLUMN)?;
        ds.require(FREQ_COLUMN)?;
        let mut seen = HashSet::new();
        for (line, record) in &ds.records {
            let id = record.get(id_col).unwrap_or_default().to_string();
            if !seen.insert(id.clone()) {
                return Err(CliError::input(format!(
                    "{}:{line}:{}: duplicate id `{id}`",
                    path.display(),
                    id_col + 1
                )));
            }
            ds.ids.push(id);
        }
        Ok(ds)
    }

    pub fn file_name(&self) -> String {
        self.path.file_name().map_or_else(
            || self.path.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        )
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    /// Index of a column that must exist; missing columns are schema errors.
    pub fn require(&self, name: &str) -> Result<usize, CliError> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::new(
                exit::SCHEMA,
                format!("{}: missing column `{name}`", self.path.display()),
            )
        })
    }

    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let col = self.require(name)?;
        self.records
            .iter()
            .map(|(line, record)| {
                let raw = record.get(col).unwrap_or_default();
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        CliError::input(format!(
                            "{}:{line}:{}: column `{name}`: cannot parse `{raw}` as a finite number",
                            self.path.display(),
                            col + 1
                        ))
                    })
            })
            .collect()
    }

    pub fn frequencies(&self, normalize: bool) -> Result<FrequencyVector, CliError> {
        let raw = self.numeric_column(FREQ_COLUMN)?;
        FrequencyVector::new(raw, normalize)
            .map_err(|e| CliError::input(format!("{}: {e}", self.path.display())))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let location = match e.position() {
        Some(p) => format!("{}:{}", path.display(), p.line()),
        None => path.display().to_string(),
    };
    CliError::input(format!("{location}: {e}"))
}
