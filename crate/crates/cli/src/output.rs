//! Output envelopes, all-or-nothing file writes, and the error contract.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use supkde::Error;

use crate::args::Cli;

/// JSON document wrapping every result with the resolved configuration.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a Cli,
    pub result: T,
}

impl<'a, T: Serialize> Envelope<'a, T> {
    pub fn new(config: &'a Cli, result: T) -> Self {
        Self { tool: "supkde", version: supkde::VERSION, config, result }
    }

    pub fn to_bytes(&self) -> supkde::Result<Vec<u8>> {
        let mut text = serde_json::to_vec_pretty(self)?;
        text.push(b'\n');
        Ok(text)
    }
}

/// `# supkde <version> <config JSON>` followed by the CSV body.
pub fn csv_document(config: &Cli, header: &[&str], rows: &[Vec<String>]) -> supkde::Result<Vec<u8>> {
    let mut out = Vec::new();
    writeln!(out, "# supkde {} {}", supkde::VERSION, serde_json::to_string(config)?)?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    drop(w);
    Ok(out)
}

/// Files staged in memory and written only once the whole command has succeeded.
#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
    stdout: Option<Vec<u8>>,
}

impl Staged {
    /// `path` if given, otherwise standard output.
    pub fn primary(&mut self, path: Option<&Path>, bytes: Vec<u8>) {
        match path {
            Some(p) => self.files.push((p.to_path_buf(), bytes)),
            None => self.stdout = Some(bytes),
        }
    }

    pub fn file(&mut self, path: &Path, bytes: Vec<u8>) {
        self.files.push((path.to_path_buf(), bytes));
    }

    /// Writes every file to a sibling temporary and renames them into place; on any
    /// failure the temporaries are removed and no target is touched.
    pub fn commit(self) -> supkde::Result<()> {
        let mut temps = Vec::new();
        let result = (|| {
            for (path, bytes) in &self.files {
                let tmp = temp_path(path);
                temps.push(tmp.clone());
                fs::write(&tmp, bytes)?;
            }
            Ok::<_, Error>(())
        })();
        if let Err(e) = result {
            for t in &temps {
                let _ = fs::remove_file(t);
            }
            return Err(e);
        }
        for ((path, _), tmp) in self.files.iter().zip(&temps) {
            fs::rename(tmp, path)?;
        }
        if let Some(bytes) = self.stdout {
            std::io::stdout().write_all(&bytes)?;
        }
        Ok(())
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".partial-{}", std::process::id()));
    path.with_file_name(name)
}

/// Exit code and kind label for each failure class.
pub fn classify(err: &Error) -> (u8, &'static str) {
    match err {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::InvalidData(_) => (3, "input"),
        Error::InvalidArgument(_)
        | Error::InvalidBandwidth(_)
        | Error::InvalidPartition(_)
        | Error::InvalidKernel(_)
        | Error::DimensionMismatch { .. }
        | Error::DimensionOutOfRange { .. }
        | Error::GridMismatch => (4, "config"),
        Error::EmptyCandidates { .. } => (5, "empty_candidates"),
        Error::Quadrature { .. } | Error::NonConvergence(_) | Error::SamplerEfficiency { .. } => (6, "numerical"),
        Error::TableTooLarge { .. } | Error::GridCoverage { .. } => (7, "grid"),
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    exit_code: u8,
}

#[derive(Serialize)]
struct ErrorDocument<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    error: ErrorBody<'a>,
}

/// Machine-readable error line for standard error.
pub fn error_json(command: &str, err: &Error) -> (u8, String) {
    let (code, kind) = classify(err);
    let doc = ErrorDocument {
        tool: "supkde",
        version: supkde::VERSION,
        command,
        error: ErrorBody { kind, message: err.to_string(), exit_code: code },
    };
    (code, serde_json::to_string(&doc).unwrap_or_else(|_| format!("{{\"error\":\"{err}\"}}")))
}
