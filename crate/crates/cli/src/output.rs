//! Deterministic file output: CSV with a config-hash comment line, floats
//! with 17 significant digits, pretty JSON.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const OUT_DIR_ENV: &str = "SIGNED_HAWKES_OUT_DIR";

/// Scientific notation with 17 significant digits, enough to round-trip.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Output directory: `--out`, then the environment variable, then the
/// config file's `out_dir`, then `./out`.
pub fn resolve_out_dir(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    config.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

pub struct Sink {
    dir: PathBuf,
    hash: String,
}

impl Sink {
    pub fn new(dir: PathBuf, config: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            hash: config_hash(config),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvOut, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut inner = BufWriter::new(file);
        writeln!(inner, "# config_hash={}", self.hash).map_err(|e| CliError::Io(e.to_string()))?;
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
        Ok(CsvOut { writer, path })
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            config_hash: &'a str,
            #[serde(flatten)]
            body: &'a T,
        }
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(&Wrapped {
            config_hash: &self.hash,
            body: value,
        })
        .map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

pub struct CsvOut {
    writer: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl CsvOut {
    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| CliError::Io(format!("{}: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer
            .flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", self.path.display())))
    }
}
