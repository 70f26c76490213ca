use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::RunError;

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Output directory that remembers the hash of everything written to it.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<FileEntry>,
}

/// Reals with 17 significant digits, enough to round-trip an `f64`.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Empty cell for a quantity that does not apply.
pub fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, RunError> {
        std::fs::create_dir_all(dir).map_err(|source| RunError::Output { path: dir.display().to_string(), source })?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_raw(&self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| RunError::Output { path: path.display().to_string(), source })
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), RunError> {
        self.write_raw(name, &bytes)?;
        self.files.push(FileEntry { name: name.to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() });
        Ok(())
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), RunError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let io = |e: csv::Error| RunError::Output { path: name.to_string(), source: e.into() };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(io)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(&row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Output { path: name.to_string(), source: e.into_error() })?;
        self.write(name, bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
        bytes.push(b'\n');
        self.write(name, bytes)
    }

    /// Written last and not listed in itself.
    pub fn manifest<T: Serialize>(&self, value: &T) -> Result<(), RunError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("manifest serializes");
        bytes.push(b'\n');
        self.write_raw("manifest.json", &bytes)
    }
}
