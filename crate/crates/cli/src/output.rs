//! Atomic artifact writes: temp file in the target directory, then rename.

use std::fmt;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

/// A CLI failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<ddrsim::Error> for CliError {
    fn from(e: ddrsim::Error) -> Self {
        match e {
            ddrsim::Error::Io(m) => CliError::Io(m),
            e if e.is_runtime() => CliError::Runtime(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Create `dir` if needed and check none of `names` exist unless `force`.
pub fn prepare(dir: &Path, names: &[&str], force: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    if !force {
        let existing: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).filter(|p| p.exists()).collect();
        if !existing.is_empty() {
            let list: Vec<String> = existing.iter().map(|p| p.display().to_string()).collect();
            return Err(CliError::Config(format!(
                "refusing to overwrite {} (pass --force)",
                list.join(", ")
            )));
        }
    }
    Ok(())
}

/// Write `dir/name` through `body`; readers see either the old file or the complete new one.
pub fn write_atomic<F>(dir: &Path, name: &str, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    let target = dir.join(name);
    let tmp = NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(&target)
        .map_err(|e| CliError::Io(format!("{}: {}", target.display(), e.error)))?;
    Ok(())
}
