//! The three autosave write strategies.
//!
//! Only `direct_sync` issues an fsync; the other two reproduce editors that
//! rely on rename or copy semantics without a durability barrier.

use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::WorkloadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteStrategy {
    /// Truncate and write in place, then fsync.
    DirectSync,
    /// Write a sibling temp file and rename it over the target.
    TempRename,
    /// Copy the current target to `<target>.bak`, then overwrite in place.
    BackupOverwrite,
}

impl WriteStrategy {
    pub const ALL: [WriteStrategy; 3] = [
        WriteStrategy::DirectSync,
        WriteStrategy::TempRename,
        WriteStrategy::BackupOverwrite,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaveReceipt {
    pub bytes_written: u64,
    pub files_touched: Vec<PathBuf>,
}

/// Failure points for exercising error paths in tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectedFault {
    /// Fail after part of the content has reached the staging file.
    MidWrite,
    /// Fail after the staging file is complete, before it replaces the target.
    BeforeCommit,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn backup_path(target: &Path) -> PathBuf {
    with_suffix(target, ".bak")
}

fn temp_path(target: &Path) -> PathBuf {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let nonce = COUNTER.fetch_add(1, Ordering::Relaxed);
    with_suffix(target, &format!(".tmp.{}-{nonce}", std::process::id()))
}

/// True when `name` looks like a temp file produced for `target`.
pub fn is_temp_sibling(target: &Path, candidate: &Path) -> bool {
    let Some(prefix) = target.file_name().map(|n| format!("{}.tmp.", n.to_string_lossy())) else {
        return false;
    };
    candidate
        .file_name()
        .is_some_and(|n| n.to_string_lossy().starts_with(&prefix))
}

fn injected(point: &str) -> io::Error {
    io::Error::other(format!("injected fault {point}"))
}

fn write_content(
    file: &mut File,
    content: &[u8],
    fault: Option<InjectedFault>,
) -> io::Result<()> {
    if fault == Some(InjectedFault::MidWrite) {
        file.write_all(&content[..content.len() / 2])?;
        return Err(injected("mid-write"));
    }
    file.write_all(content)
}

pub fn perform_save(
    strategy: WriteStrategy,
    content: &[u8],
    target: &Path,
) -> Result<SaveReceipt, WorkloadError> {
    perform_save_with_fault(strategy, content, target, None)
}

/// [`perform_save`] with an optional injected failure.
pub fn perform_save_with_fault(
    strategy: WriteStrategy,
    content: &[u8],
    target: &Path,
    fault: Option<InjectedFault>,
) -> Result<SaveReceipt, WorkloadError> {
    let save_err = |source: io::Error| WorkloadError::Save {
        strategy,
        path: target.to_path_buf(),
        source,
    };
    let bytes_written = content.len() as u64;
    match strategy {
        WriteStrategy::DirectSync => {
            let mut f = File::create(target).map_err(save_err)?;
            write_content(&mut f, content, fault).map_err(save_err)?;
            if fault == Some(InjectedFault::BeforeCommit) {
                return Err(save_err(injected("before sync")));
            }
            f.sync_all().map_err(save_err)?;
            Ok(SaveReceipt {
                bytes_written,
                files_touched: vec![target.to_path_buf()],
            })
        }
        WriteStrategy::TempRename => {
            let tmp = temp_path(target);
            let staged = (|| {
                let mut f = OpenOptions::new().write(true).create_new(true).open(&tmp)?;
                write_content(&mut f, content, fault)?;
                if fault == Some(InjectedFault::BeforeCommit) {
                    return Err(injected("before rename"));
                }
                fs::rename(&tmp, target)
            })();
            if let Err(e) = staged {
                let _ = fs::remove_file(&tmp);
                return Err(save_err(e));
            }
            Ok(SaveReceipt {
                bytes_written,
                files_touched: vec![tmp, target.to_path_buf()],
            })
        }
        WriteStrategy::BackupOverwrite => {
            let mut touched = Vec::with_capacity(2);
            if target.exists() {
                let bak = backup_path(target);
                fs::copy(target, &bak).map_err(save_err)?;
                touched.push(bak);
            }
            let mut f = File::create(target).map_err(save_err)?;
            write_content(&mut f, content, fault).map_err(save_err)?;
            if fault == Some(InjectedFault::BeforeCommit) {
                return Err(save_err(injected("before close")));
            }
            touched.push(target.to_path_buf());
            Ok(SaveReceipt {
                bytes_written,
                files_touched: touched,
            })
        }
    }
}
