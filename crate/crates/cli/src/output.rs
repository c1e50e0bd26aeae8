//! Output directory bookkeeping: every file is hashed and listed in the report.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{sha256_hex, ExperimentConfig};
use crate::Failure;

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
}

pub struct OutputDir {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

/// Top-level layout of every `<command>.toml` report.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    stamp: Option<&'a str>,
    config_sha256: String,
    inputs_sha256: &'a str,
    outputs: &'a [OutputFile],
    result: &'a T,
    config: &'a ExperimentConfig,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.path(name);
        std::fs::write(&path, bytes).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(OutputFile { name: name.into(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), Failure> {
        self.record(name, text.as_bytes())
    }

    /// Registers a file written by other means (binary snapshots).
    pub fn register(&mut self, name: &str) -> Result<(), Failure> {
        let path = self.path(name);
        let bytes = std::fs::read(&path).map_err(|e| Failure::Config(format!("cannot read back {}: {e}", path.display())))?;
        self.files.push(OutputFile { name: name.into(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), Failure> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| Failure::Config(format!("csv encoding of {name}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Config(format!("csv encoding of {name}: {e}")))?;
        self.record(name, &bytes)
    }

    pub fn write_records(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Failure::Config(format!("csv encoding of {name}: {e}"));
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Config(format!("csv encoding of {name}: {e}")))?;
        self.record(name, &bytes)
    }

    /// Writes `<command>.toml` with the resolved config, hashes and result.
    pub fn write_report<T: Serialize>(
        &mut self,
        command: &str,
        cfg: &ExperimentConfig,
        inputs_sha256: &str,
        result: &T,
    ) -> Result<PathBuf, Failure> {
        let report = Report {
            command,
            version: env!("CARGO_PKG_VERSION"),
            stamp: cfg.stamp.as_deref(),
            config_sha256: cfg.hash(),
            inputs_sha256,
            outputs: &self.files,
            result,
            config: cfg,
        };
        let text = toml::to_string(&report).map_err(|e| Failure::Config(format!("report encoding: {e}")))?;
        let name = format!("{command}.toml");
        let path = self.path(&name);
        std::fs::write(&path, text).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
