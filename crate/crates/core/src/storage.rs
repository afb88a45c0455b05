//! Atomic multi-file commits under a data directory.
//!
//! A [`Batch`] of writes and deletions is staged into `.journal/`, made
//! durable, and committed by renaming the journal manifest into place. Only
//! then are staged files renamed over their targets. A crash before the
//! manifest rename leaves the directory untouched; a crash after it is rolled
//! forward by [`DataDir::open`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

const JOURNAL_DIR: &str = ".journal";
const MANIFEST: &str = "manifest.json";

/// File changes applied as one unit. Paths are relative to the data root.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Batch {
    writes: BTreeMap<PathBuf, Vec<u8>>,
    deletes: BTreeSet<PathBuf>,
}

impl Batch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        let path = path.into();
        self.deletes.remove(&path);
        self.writes.insert(path, bytes);
    }

    pub fn delete(&mut self, path: impl Into<PathBuf>) {
        let path = path.into();
        self.writes.remove(&path);
        self.deletes.insert(path);
    }

    pub fn extend(&mut self, other: Batch) {
        for (p, b) in other.writes {
            self.write(p, b);
        }
        for p in other.deletes {
            self.delete(p);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.writes.is_empty() && self.deletes.is_empty()
    }

    pub fn writes(&self) -> impl Iterator<Item = (&Path, &[u8])> {
        self.writes.iter().map(|(p, b)| (p.as_path(), b.as_slice()))
    }

    pub fn deletes(&self) -> impl Iterator<Item = &Path> {
        self.deletes.iter().map(PathBuf::as_path)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JournalManifest {
    writes: Vec<(String, PathBuf)>,
    deletes: Vec<PathBuf>,
}

/// Test hook: fail a commit after staging this many files.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CommitFault {
    pub fail_after_staged: Option<usize>,
    pub fail_after_manifest: bool,
}

#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

fn validate_relative(path: &Path) -> io::Result<()> {
    let ok = path.components().next().is_some()
        && path.components().all(|c| matches!(c, Component::Normal(_)))
        && !path.starts_with(JOURNAL_DIR);
    if ok {
        Ok(())
    } else {
        Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("not a plain relative path: {}", path.display()),
        ))
    }
}

pub(crate) fn sync_dir(path: &Path) -> io::Result<()> {
    File::open(path)?.sync_all()
}

pub(crate) fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .open(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write_synced(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    sync_dir(parent)
}

impl DataDir {
    /// Opens (creating if needed) a data directory and finishes or discards
    /// any interrupted commit.
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = DataDir { root: root.into() };
        fs::create_dir_all(&dir.root)?;
        dir.recover()?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn journal(&self) -> PathBuf {
        self.root.join(JOURNAL_DIR)
    }

    fn recover(&self) -> io::Result<()> {
        let journal = self.journal();
        if !journal.exists() {
            return Ok(());
        }
        match fs::read(journal.join(MANIFEST)) {
            Ok(bytes) => {
                let manifest: JournalManifest = serde_json::from_slice(&bytes)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                log::info!("rolling forward interrupted commit in {}", self.root.display());
                self.apply(&manifest)?;
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                log::info!("discarding uncommitted journal in {}", self.root.display());
            }
            Err(e) => return Err(e),
        }
        fs::remove_dir_all(&journal)?;
        sync_dir(&self.root)
    }

    fn apply(&self, manifest: &JournalManifest) -> io::Result<()> {
        let journal = self.journal();
        let mut touched = BTreeSet::new();
        for (staged, target) in &manifest.writes {
            let src = journal.join(staged);
            let dst = self.root.join(target);
            if src.exists() {
                if let Some(parent) = dst.parent() {
                    fs::create_dir_all(parent)?;
                    touched.insert(parent.to_path_buf());
                }
                fs::rename(&src, &dst)?;
            }
        }
        for target in &manifest.deletes {
            let path = self.root.join(target);
            match fs::remove_file(&path) {
                Ok(()) => {
                    if let Some(parent) = path.parent() {
                        touched.insert(parent.to_path_buf());
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(e),
            }
        }
        for dir in touched {
            sync_dir(&dir)?;
        }
        Ok(())
    }

    pub fn commit(&self, batch: &Batch) -> io::Result<()> {
        self.commit_with_fault(batch, CommitFault::default())
    }

    #[doc(hidden)]
    pub fn commit_with_fault(&self, batch: &Batch, fault: CommitFault) -> io::Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        for (p, _) in batch.writes() {
            validate_relative(p)?;
        }
        for p in batch.deletes() {
            validate_relative(p)?;
        }
        let journal = self.journal();
        if journal.exists() {
            fs::remove_dir_all(&journal)?;
        }
        fs::create_dir_all(&journal)?;

        let mut writes = Vec::new();
        for (i, (target, bytes)) in batch.writes().enumerate() {
            if fault.fail_after_staged == Some(i) {
                return Err(io::Error::other("injected failure while staging"));
            }
            let staged = format!("{i:06}.blob");
            write_synced(&journal.join(&staged), bytes)?;
            writes.push((staged, target.to_path_buf()));
        }
        let manifest = JournalManifest {
            writes,
            deletes: batch.deletes().map(Path::to_path_buf).collect(),
        };
        let json = serde_json::to_vec(&manifest).map_err(io::Error::other)?;
        let tmp = journal.join("manifest.tmp");
        write_synced(&tmp, &json)?;
        sync_dir(&journal)?;
        fs::rename(&tmp, journal.join(MANIFEST))?;
        sync_dir(&journal)?;
        if fault.fail_after_manifest {
            return Err(io::Error::other("injected failure after commit point"));
        }

        self.apply(&manifest)?;
        fs::remove_dir_all(&journal)?;
        sync_dir(&self.root)
    }
}
