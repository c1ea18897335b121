use std::fs;
use std::io::{self, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .map_err(|e| CliError::backend(format!("{}: {e}", parent.display())))?;
            }
            fs::write(p, bytes).map_err(|e| CliError::backend(format!("{}: {e}", p.display())))
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::backend(format!("stdout: {e}")))
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut text = serde_json::to_vec_pretty(value).map_err(CliError::validation)?;
    text.push(b'\n');
    Ok(text)
}

/// Single header plus rows, all pre-rendered.
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(CliError::validation)?;
    for r in rows {
        w.write_record(r).map_err(CliError::validation)?;
    }
    w.into_inner().map_err(|e| CliError::validation(e.to_string()))
}

pub fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
