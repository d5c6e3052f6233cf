//! Output directory handling and the run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;

/// An output directory that remembers every file written into it.
///
/// Cells write their own files concurrently; only the list of names is shared.
pub struct Artifacts {
    root: PathBuf,
    files: Mutex<Vec<String>>,
}

impl Artifacts {
    pub fn create(root: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Mutex::new(Vec::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn open(&self, rel: &str) -> Result<BufWriter<File>, HarnessError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.lock().expect("file list poisoned").push(rel.to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    /// Write through a closure that produces the file body.
    pub fn write_with<F>(&self, rel: &str, body: F) -> Result<(), HarnessError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), HarnessError>,
    {
        let mut w = self.open(rel)?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), HarnessError> {
        self.write_with(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    /// Sorted so the manifest does not depend on thread scheduling.
    fn file_list(&self) -> Vec<String> {
        let mut files = self.files.lock().expect("file list poisoned").clone();
        files.sort();
        files
    }

    /// Write `manifest.json`. Call once, after every cell has finished.
    pub fn finish<T: Serialize>(self, command: &str, config: &ExperimentConfig, details: T) -> Result<PathBuf, HarnessError> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            files: self.file_list(),
            details,
        };
        let path = self.root.join(MANIFEST);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Serialize)]
struct Manifest<'a, T> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a ExperimentConfig,
    files: Vec<String>,
    details: T,
}
