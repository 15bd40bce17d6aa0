//! Atomic output files and run manifests.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use tempfile::NamedTempFile;

use crate::CliError;

/// Output files staged in their target directories. Nothing becomes
/// visible until [`Staged::commit`]; dropping a `Staged` removes the
/// temporaries.
#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stages `path`, filling it through `fill`.
    pub fn write<F>(&mut self, path: &Path, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<&File>) -> Result<(), CliError>,
    {
        let dir = parent_dir(path);
        let tmp = NamedTempFile::new_in(dir).map_err(|e| {
            CliError::Internal(format!(
                "cannot create temporary file in {}: {e}",
                dir.display()
            ))
        })?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            fill(&mut w)?;
            w.flush().map_err(|e| io_error(path, e))?;
        }
        tmp.as_file().sync_all().map_err(|e| io_error(path, e))?;
        self.files.push((tmp, path.to_path_buf()));
        Ok(())
    }

    pub fn write_json(&mut self, path: &Path, value: &Value) -> Result<(), CliError> {
        self.write(path, |w| {
            serde_json::to_writer_pretty(&mut *w, value)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            writeln!(w).map_err(|e| io_error(path, e))
        })
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.files.iter().map(|(_, p)| p.clone()).collect()
    }

    /// Renames every staged file onto its target.
    pub fn commit(self) -> Result<(), CliError> {
        for (tmp, path) in self.files {
            tmp.persist(&path).map_err(|e| io_error(&path, e.error))?;
        }
        Ok(())
    }
}

pub fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Fails with a usage error unless `path` is a readable file.
pub fn check_input(path: &Path) -> Result<(), CliError> {
    File::open(path)
        .and_then(|f| f.metadata())
        .map_err(|e| CliError::Usage(format!("cannot read input {}: {e}", path.display())))
        .and_then(|m| {
            if m.is_file() {
                Ok(())
            } else {
                Err(CliError::Usage(format!(
                    "input {} is not a file",
                    path.display()
                )))
            }
        })
}

/// Fails with a usage error unless the directory of `path` exists.
pub fn check_output(path: &Path) -> Result<(), CliError> {
    let dir = parent_dir(path);
    if !dir.is_dir() {
        return Err(CliError::Usage(format!(
            "output directory {} does not exist",
            dir.display()
        )));
    }
    if path.is_dir() {
        return Err(CliError::Usage(format!(
            "output {} is a directory",
            path.display()
        )));
    }
    Ok(())
}

/// `foo.csv` + `composite` → `foo.composite.csv`.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{suffix}"),
    };
    path.with_file_name(name)
}

/// `foo.csv` → `foo.csv.<tail>`.
pub fn sidecar(path: &Path, tail: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".");
    name.push(tail);
    path.with_file_name(name)
}

pub fn run_manifest(
    command: &str,
    config: Value,
    inputs: &[(PathBuf, String)],
    outputs: &[PathBuf],
) -> Value {
    json!({
        "command": command,
        "tagflow_version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "inputs": inputs
            .iter()
            .map(|(p, d)| json!({ "path": p.display().to_string(), "digest": d }))
            .collect::<Vec<_>>(),
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    })
}
