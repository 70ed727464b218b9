//! Exclusive ownership of an output directory.
//!
//! Two commands writing into the same directory would interleave
//! checkpoints, logs, and the echoed config. A lock file taken with
//! `create_new` (an atomic create-or-fail on every platform we care about)
//! keeps runs serialized; dropping the guard removes the file. A crashed
//! run leaves the file behind on purpose — the directory contents are in an
//! unknown state at that point and a human should look before reusing it.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use ssp_core::{Error, Result};

pub const LOCK_NAME: &str = "run.lock";

/// Holds the lock for the lifetime of the value.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    /// Creates the output directory if needed and takes its lock.
    pub fn acquire(out_dir: &Path) -> Result<DirLock> {
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                // Record who holds it, purely for a human inspecting a stale lock.
                let _ = writeln!(file, "pid {}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    format!(
                        "output directory {} is locked by another run ({} exists); \
                         remove the file if that run is gone",
                        out_dir.display(),
                        path.display()
                    ),
                )))
            }
            Err(e) => Err(Error::Io(e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
