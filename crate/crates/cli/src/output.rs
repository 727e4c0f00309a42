use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tempfile::{NamedTempFile, TempDir};

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = NamedTempFile::new_in(parent_dir(path))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Sends `bytes` to `path` atomically, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> io::Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()
        }
    }
}

pub fn json_bytes<T: serde::Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// A directory output that is filled in a sibling temporary directory and
/// moved into place by [`StagedDir::commit`].
pub struct StagedDir {
    tmp: TempDir,
    target: PathBuf,
}

impl StagedDir {
    /// Fails if `target` exists and is not an empty directory.
    pub fn new(target: &Path) -> io::Result<Self> {
        check_dir_target(target)?;
        let parent = parent_dir(target);
        fs::create_dir_all(&parent)?;
        let tmp = tempfile::Builder::new().prefix(".cagnn-staging").tempdir_in(parent)?;
        Ok(Self {
            tmp,
            target: target.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        self.tmp.path()
    }

    pub fn commit(self) -> io::Result<()> {
        check_dir_target(&self.target)?;
        if self.target.is_dir() {
            fs::remove_dir(&self.target)?;
        }
        let staged = self.tmp.keep();
        fs::rename(&staged, &self.target).inspect_err(|_| {
            let _ = fs::remove_dir_all(&staged);
        })
    }
}

pub fn check_dir_target(target: &Path) -> io::Result<()> {
    if !target.exists() {
        return Ok(());
    }
    if target.is_dir() && fs::read_dir(target)?.next().is_none() {
        return Ok(());
    }
    Err(io::Error::new(
        io::ErrorKind::AlreadyExists,
        format!("{} already exists and is not an empty directory", target.display()),
    ))
}
