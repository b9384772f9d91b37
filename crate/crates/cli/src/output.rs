//! Output destinations and CSV helpers.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::OUT_DIR_ENV;

/// Resolves `--out`: relative paths land in `$DPBIN_OUT_DIR` when it is set.
/// Without `--out`, `$DPBIN_OUT_DIR/<default_name>` is used if the variable is
/// set, and standard output otherwise.
pub fn resolve(out: Option<&Path>, default_name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    match (out, dir) {
        (Some(p), Some(dir)) if p.is_relative() => Some(dir.join(p)),
        (Some(p), _) => Some(p.to_path_buf()),
        (None, Some(dir)) => Some(dir.join(default_name)),
        (None, None) => None,
    }
}

/// Opens the resolved destination, creating parent directories.
pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

/// Writes `rows` as CSV with a header (emitted even when `rows` is empty).
pub fn write_csv<T: Serialize>(dest: Box<dyn Write>, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(dest);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
