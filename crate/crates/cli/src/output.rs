use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde_json::Value;
use tempfile::NamedTempFile;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input files.
    Usage(String),
    Numerical {
        message: String,
        diagnostics: Value,
        /// Where the diagnostics JSON is also written.
        path: Option<PathBuf>,
    },
}

impl CliError {
    pub fn numerical(message: impl Into<String>, diagnostics: Value, out: Option<&Path>) -> Self {
        CliError::Numerical { message: message.into(), diagnostics, path: out.map(diagnostics_path) }
    }

    pub fn report(self) -> ExitCode {
        match self {
            CliError::Usage(m) => {
                eprintln!("error: {m}");
                ExitCode::from(2)
            }
            CliError::Numerical { message, diagnostics, path } => {
                eprintln!("numerical failure: {message}");
                let text = serde_json::to_string_pretty(&diagnostics).unwrap_or_default();
                eprintln!("{text}");
                if let Some(p) = path {
                    if let Err(e) = write_atomic(&p, format!("{text}\n").as_bytes()) {
                        eprintln!("could not write diagnostics: {e:?}");
                    }
                }
                ExitCode::from(3)
            }
        }
    }
}

pub fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn diagnostics_path(out: &Path) -> PathBuf {
    out.with_extension("diagnostics.json")
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| CliError::Usage(format!("{}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// `out` when given, stdout otherwise.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
