use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// Artifact sink: an output directory, the enabled formats and the files
/// written so far.
#[derive(Debug)]
pub struct Output {
    dir: PathBuf,
    formats: Vec<Format>,
    files: Vec<String>,
}

impl Output {
    /// Creates `dir` if needed. An empty `formats` enables all of them.
    pub fn new(dir: &Path, formats: &[Format]) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
        let meta = fs::metadata(dir).map_err(|e| Failure::Config(format!("cannot inspect {}: {e}", dir.display())))?;
        if meta.permissions().readonly() {
            return Err(Failure::Config(format!("{} is not writable", dir.display())));
        }
        let formats = if formats.is_empty() { vec![Format::Csv, Format::Json, Format::Svg] } else { formats.to_vec() };
        Ok(Output { dir: dir.to_path_buf(), formats, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Writes `name` when its format is enabled; returns whether it did.
    pub fn write(&mut self, name: &str, format: Format, contents: &str) -> Result<bool, Failure> {
        if !self.wants(format) {
            return Ok(false);
        }
        self.write_always(name, contents)?;
        Ok(true)
    }

    pub(crate) fn write_always(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}
