use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// 17 significant digits, `.` as decimal separator.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn opt_int(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// A CSV file under the output directory with a fixed header.
pub struct Table {
    writer: csv::Writer<File>,
    path: PathBuf,
}

impl Table {
    pub fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self, CliError> {
        let path = dir.join(name);
        let writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut table = Self { writer, path };
        table.row(header.iter().map(|h| h.to_string()))?;
        Ok(table)
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<(), CliError> {
        self.writer
            .write_record(fields)
            .map_err(|e| CliError::Io(format!("{}: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer
            .flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", self.path.display())))?;
        Ok(self.path)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WarningCounts {
    pub failed_realizations: usize,
    pub failed_configs: usize,
    pub failed_entries: usize,
    pub nonconverged_newton: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Resolved parameters in config-file form.
    pub parameters: BTreeMap<String, String>,
    pub master_seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub warnings: WarningCounts,
    pub exit_code: i32,
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("malformed manifest {}: {e}", path.display())))
    }
}
