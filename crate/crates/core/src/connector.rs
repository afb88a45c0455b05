//! The discipline-side connector behind `cbimctl`.
//!
//! Workspace layout:
//!
//! ```text
//! .cbim/state.json           LocalState
//! .cbim/lock                 held while a command runs
//! .cbim/snapshot/<version>/  container copy of the last pushed snapshot
//! references/<package_id>/   manifest.json and <guid>.ply per package
//! ```

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diff::{diff, ChangeKind, ChangeSet};
use crate::model::{parse_container, write_container, ContainerError, Discipline, DisciplineSnapshot};
use crate::propagation::{EntryChange, ReferencePackage, RelationContext};
use crate::protocol::{
    json_frame, parse_header, parse_references, push_frame, read_frame, write_frame, ErrorBody,
    ErrorCode, Frame, MessageType, PullRequest, PushAck, RegisterAck, RegisterRequest,
};
use crate::storage::{atomic_write, sync_dir, write_synced};

pub const STATE_DIR: &str = ".cbim";
pub const STATE_FILE: &str = ".cbim/state.json";
pub const LOCK_FILE: &str = ".cbim/lock";
pub const SNAPSHOT_DIR: &str = ".cbim/snapshot";
pub const REFERENCES_DIR: &str = "references";
pub const REFERENCE_MANIFEST: &str = "manifest.json";

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const IO_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, thiserror::Error)]
pub enum ConnectorError {
    #[error("{0} is not a cbim workspace (run `cbimctl init` first)")]
    Uninitialized(PathBuf),
    #[error("{0} is already initialized")]
    AlreadyInitialized(PathBuf),
    #[error("workspace state is unreadable: {0}")]
    BadState(String),
    #[error("workspace is in use by another cbimctl process")]
    Locked,
    #[error("cannot read container: {0}")]
    Container(#[from] ContainerError),
    #[error("container is {found} but the workspace is {expected}")]
    WrongDiscipline { expected: Discipline, found: Discipline },
    #[error("{0}")]
    Usage(String),
    #[error("server rejected the request ({code:?}): {message}")]
    Rejected { code: ErrorCode, message: String },
    #[error("network failure: {0}")]
    Network(String),
    #[error("disk write failed: {0}")]
    Disk(#[source] io::Error),
}

impl ConnectorError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ConnectorError::Uninitialized(_)
            | ConnectorError::AlreadyInitialized(_)
            | ConnectorError::BadState(_)
            | ConnectorError::Container(_)
            | ConnectorError::WrongDiscipline { .. }
            | ConnectorError::Usage(_) => 2,
            ConnectorError::Rejected { .. } => 3,
            ConnectorError::Network(_) => 4,
            ConnectorError::Disk(_) => 5,
            ConnectorError::Locked => 6,
        }
    }
}

fn net(e: impl fmt::Display) -> ConnectorError {
    ConnectorError::Network(e.to_string())
}

/// A blocking connection to the server, registered for one discipline.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    ack: RegisterAck,
}

impl Client {
    pub fn connect(
        server: &str,
        discipline: Discipline,
        client_id: Option<&str>,
    ) -> Result<Client, ConnectorError> {
        let addrs: Vec<_> = server.to_socket_addrs().map_err(net)?.collect();
        let mut last = None;
        let mut stream = None;
        for a in addrs {
            match TcpStream::connect_timeout(&a, CONNECT_TIMEOUT) {
                Ok(s) => {
                    stream = Some(s);
                    break;
                }
                Err(e) => last = Some(e),
            }
        }
        let stream = match (stream, last) {
            (Some(s), _) => s,
            (None, Some(e)) => return Err(net(format!("{server}: {e}"))),
            (None, None) => return Err(net(format!("{server} resolves to no address"))),
        };
        stream.set_read_timeout(Some(IO_TIMEOUT)).map_err(net)?;
        stream.set_write_timeout(Some(IO_TIMEOUT)).map_err(net)?;
        let _ = stream.set_nodelay(true);
        let mut client = Client {
            reader: BufReader::new(stream.try_clone().map_err(net)?),
            writer: BufWriter::new(stream),
            ack: RegisterAck {
                server_version: String::new(),
                client_id: String::new(),
                latest_version_tag: String::new(),
                queue_head_seq: 0,
            },
        };
        let req = RegisterRequest {
            discipline: discipline.as_str().to_string(),
            client_id: client_id.map(str::to_string),
        };
        let resp = client.request(&json_frame(MessageType::Register, &req, Vec::new()), MessageType::RegisterAck)?;
        client.ack = parse_header(&resp, "REGISTER_ACK").map_err(net)?;
        Ok(client)
    }

    pub fn register_ack(&self) -> &RegisterAck {
        &self.ack
    }

    fn request(&mut self, frame: &Frame, expect: MessageType) -> Result<Frame, ConnectorError> {
        write_frame(&mut self.writer, frame).map_err(net)?;
        let resp = read_frame(&mut self.reader)
            .map_err(net)?
            .ok_or_else(|| net("server closed the connection"))?;
        if resp.msg_type == MessageType::Error {
            let body: ErrorBody = parse_header(&resp, "ERROR").map_err(net)?;
            return Err(ConnectorError::Rejected {
                code: body.code,
                message: body.message,
            });
        }
        if resp.msg_type != expect {
            return Err(net(format!("expected {expect}, got {}", resp.msg_type)));
        }
        Ok(resp)
    }

    pub fn push(&mut self, cs: &ChangeSet) -> Result<PushAck, ConnectorError> {
        let resp = self.request(&push_frame(cs), MessageType::PushAck)?;
        parse_header(&resp, "PUSH_ACK").map_err(net)
    }

    pub fn pull(&mut self, after_seq: u64) -> Result<Vec<ReferencePackage>, ConnectorError> {
        let req = json_frame(MessageType::Pull, &PullRequest { after_seq }, Vec::new());
        let resp = self.request(&req, MessageType::References)?;
        parse_references(&resp).map_err(net)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalState {
    pub discipline: Discipline,
    pub server: String,
    pub client_id: String,
    #[serde(default)]
    pub last_pushed_version: Option<String>,
    /// Container the last push read; `status` diffs it by default.
    #[serde(default)]
    pub container: Option<PathBuf>,
    #[serde(default)]
    pub pull_cursor: u64,
}

/// Test hook for `pull`: fail after this many reference files were written.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PullFault {
    pub fail_after_files: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PushReport {
    NoChanges,
    Pushed {
        objects: usize,
        accepted: usize,
        filtered_out: Vec<String>,
        version_tag: String,
        wire_guids: Vec<String>,
    },
}

impl fmt::Display for PushReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PushReport::NoChanges => f.write_str("no changes detected"),
            PushReport::Pushed {
                objects,
                accepted,
                filtered_out,
                ..
            } => write!(
                f,
                "pushed {objects} objects ({accepted} accepted, {} filtered)",
                filtered_out.len()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullReport {
    pub package_ids: Vec<u64>,
    pub entries: usize,
    pub cursor: u64,
}

impl fmt::Display for PullReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.package_ids.is_empty() {
            return f.write_str("no new references");
        }
        write!(
            f,
            "pulled {} packages ({} entries) into {REFERENCES_DIR}/; cursor {}",
            self.package_ids.len(),
            self.entries,
            self.cursor
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pending {
    pub added: usize,
    pub modified: usize,
    pub deleted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatusReport {
    pub discipline: Discipline,
    pub server: String,
    pub last_pushed_version: Option<String>,
    pub cursor: u64,
    pub pending: Option<Pending>,
}

impl fmt::Display for StatusReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "discipline: {}", self.discipline)?;
        writeln!(f, "server: {}", self.server)?;
        match &self.last_pushed_version {
            None => write!(f, "never pushed; cursor {}", self.cursor)?,
            Some(v) => write!(f, "last pushed {v}; cursor {}", self.cursor)?,
        }
        if let Some(p) = self.pending {
            write!(
                f,
                "\npending: {} added, {} modified, {} deleted",
                p.added, p.modified, p.deleted
            )?;
        }
        Ok(())
    }
}

/// Reference manifest written next to the PLY files of one package.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceManifest {
    pub package_id: u64,
    pub source_discipline: Discipline,
    pub source_version: String,
    pub target_discipline: Discipline,
    pub created_at: DateTime<Utc>,
    pub entries: Vec<ReferenceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub guid: String,
    pub category: String,
    pub name: String,
    pub change: EntryChange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ChangeKind>,
    /// File name of the PLY inside the package directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<String>,
    #[serde(default)]
    pub predicate_context: Vec<RelationContext>,
}

impl ReferenceManifest {
    pub fn of(p: &ReferencePackage) -> ReferenceManifest {
        ReferenceManifest {
            package_id: p.package_id,
            source_discipline: p.source_discipline,
            source_version: p.source_version.clone(),
            target_discipline: p.target_discipline,
            created_at: p.created_at,
            entries: p
                .entries
                .iter()
                .map(|e| ReferenceEntry {
                    guid: e.guid.clone(),
                    category: e.category.clone(),
                    name: e.name.clone(),
                    change: e.change,
                    kind: e.kind,
                    geometry: e.geometry.as_ref().map(|_| format!("{}.ply", e.guid)),
                    predicate_context: e.predicate_context.clone(),
                })
                .collect(),
        }
    }
}

/// An open workspace. Holds the workspace lock until dropped.
pub struct Workspace {
    root: PathBuf,
    state: LocalState,
    _lock: File,
}

fn lock(root: &Path) -> Result<File, ConnectorError> {
    let f = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(root.join(LOCK_FILE))
        .map_err(ConnectorError::Disk)?;
    match f.try_lock() {
        Ok(()) => Ok(f),
        Err(fs::TryLockError::WouldBlock) => Err(ConnectorError::Locked),
        Err(fs::TryLockError::Error(e)) => Err(ConnectorError::Disk(e)),
    }
}

fn sync_tree(dir: &Path) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            sync_tree(&entry.path())?;
        } else {
            File::open(entry.path())?.sync_all()?;
        }
    }
    sync_dir(dir)
}

fn remove_dir_if_exists(path: &Path) -> io::Result<()> {
    match fs::remove_dir_all(path) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}

/// Directory-safe form of a version tag.
fn snapshot_dir_name(version: &str) -> String {
    let safe: String = version
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    let h = Sha256::digest(version.as_bytes());
    format!("{safe}-{:02x}{:02x}{:02x}{:02x}", h[0], h[1], h[2], h[3])
}

impl Workspace {
    pub fn init(root: impl Into<PathBuf>, discipline: Discipline, server: &str) -> Result<Workspace, ConnectorError> {
        let root = root.into();
        fs::create_dir_all(root.join(STATE_DIR)).map_err(ConnectorError::Disk)?;
        let lock = lock(&root)?;
        if root.join(STATE_FILE).exists() {
            return Err(ConnectorError::AlreadyInitialized(root));
        }
        if server.trim().is_empty() {
            return Err(ConnectorError::Usage("--server must not be empty".into()));
        }
        let abs = fs::canonicalize(&root).unwrap_or_else(|_| root.clone());
        let seed = format!("{}|{}|{}", abs.display(), discipline, Utc::now().to_rfc3339());
        let h = Sha256::digest(seed.as_bytes());
        let client_id = format!(
            "{discipline}-{}",
            h[..6].iter().map(|b| format!("{b:02x}")).collect::<String>()
        );
        let ws = Workspace {
            state: LocalState {
                discipline,
                server: server.to_string(),
                client_id,
                last_pushed_version: None,
                container: None,
                pull_cursor: 0,
            },
            root,
            _lock: lock,
        };
        fs::create_dir_all(ws.root.join(SNAPSHOT_DIR)).map_err(ConnectorError::Disk)?;
        fs::create_dir_all(ws.root.join(REFERENCES_DIR)).map_err(ConnectorError::Disk)?;
        ws.save_state(&ws.state).map_err(ConnectorError::Disk)?;
        Ok(ws)
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Workspace, ConnectorError> {
        let root = root.into();
        if !root.join(STATE_FILE).is_file() {
            return Err(ConnectorError::Uninitialized(root));
        }
        let lock = lock(&root)?;
        let bytes = fs::read(root.join(STATE_FILE)).map_err(|e| ConnectorError::BadState(e.to_string()))?;
        let state: LocalState =
            serde_json::from_slice(&bytes).map_err(|e| ConnectorError::BadState(e.to_string()))?;
        Ok(Workspace {
            root,
            state,
            _lock: lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn state(&self) -> &LocalState {
        &self.state
    }

    fn save_state(&self, state: &LocalState) -> io::Result<()> {
        let mut json = serde_json::to_vec_pretty(state).map_err(io::Error::other)?;
        json.push(b'\n');
        atomic_write(&self.root.join(STATE_FILE), &json)
    }

    fn snapshot_path(&self, version: &str) -> PathBuf {
        self.root.join(SNAPSHOT_DIR).join(snapshot_dir_name(version))
    }

    /// The snapshot the server last accepted, or an empty one.
    pub fn last_pushed_snapshot(&self) -> Result<DisciplineSnapshot, ConnectorError> {
        match &self.state.last_pushed_version {
            None => Ok(DisciplineSnapshot::empty(self.state.discipline)),
            Some(v) => parse_container(self.snapshot_path(v)).map_err(|e| ConnectorError::BadState(e.to_string())),
        }
    }

    fn read_container(&self, container: &Path) -> Result<DisciplineSnapshot, ConnectorError> {
        let snap = parse_container(container)?;
        if snap.discipline != self.state.discipline {
            return Err(ConnectorError::WrongDiscipline {
                expected: self.state.discipline,
                found: snap.discipline,
            });
        }
        Ok(snap)
    }

    pub fn push(&mut self, container: &Path, server: Option<&str>) -> Result<PushReport, ConnectorError> {
        let new = self.read_container(container)?;
        let base = self.last_pushed_snapshot()?;
        let cs = diff(&base, &new).map_err(|e| ConnectorError::Usage(e.to_string()))?;
        if cs.is_empty() {
            return Ok(PushReport::NoChanges);
        }
        let server = server.unwrap_or(&self.state.server).to_string();
        let mut client = Client::connect(&server, self.state.discipline, Some(&self.state.client_id))?;
        let ack = client.push(&cs)?;
        if ack.version_tag != cs.new_version {
            return Err(net(format!(
                "server acknowledged {} instead of {}",
                ack.version_tag, cs.new_version
            )));
        }
        self.record_push(&new, container).map_err(ConnectorError::Disk)?;
        Ok(PushReport::Pushed {
            objects: cs.len(),
            accepted: ack.accepted,
            filtered_out: ack.filtered_out,
            version_tag: ack.version_tag,
            wire_guids: cs.guids().map(str::to_string).collect(),
        })
    }

    /// Stores the pushed snapshot, then swaps state.json to point at it.
    fn record_push(&mut self, snap: &DisciplineSnapshot, container: &Path) -> io::Result<()> {
        let dir = self.snapshot_path(&snap.version_tag);
        let mut tmp = dir.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        remove_dir_if_exists(&tmp)?;
        write_container(snap, &tmp)?;
        sync_tree(&tmp)?;
        remove_dir_if_exists(&dir)?;
        fs::rename(&tmp, &dir)?;
        sync_dir(&self.root.join(SNAPSHOT_DIR))?;

        let mut next = self.state.clone();
        next.last_pushed_version = Some(snap.version_tag.clone());
        next.container = Some(fs::canonicalize(container).unwrap_or_else(|_| container.to_path_buf()));
        self.save_state(&next)?;
        self.state = next;

        // Older copies are garbage now.
        let keep = dir.file_name().map(|n| n.to_owned());
        for entry in fs::read_dir(self.root.join(SNAPSHOT_DIR))?.flatten() {
            if Some(entry.file_name()) != keep {
                let _ = fs::remove_dir_all(entry.path());
            }
        }
        Ok(())
    }

    pub fn pull(&mut self, server: Option<&str>) -> Result<PullReport, ConnectorError> {
        self.pull_with_fault(server, PullFault::default())
    }

    #[doc(hidden)]
    pub fn pull_with_fault(&mut self, server: Option<&str>, fault: PullFault) -> Result<PullReport, ConnectorError> {
        let server = server.unwrap_or(&self.state.server).to_string();
        let mut client = Client::connect(&server, self.state.discipline, Some(&self.state.client_id))?;
        let packages = client.pull(self.state.pull_cursor)?;
        let mut report = PullReport {
            package_ids: Vec::new(),
            entries: 0,
            cursor: self.state.pull_cursor,
        };
        if packages.is_empty() {
            return Ok(report);
        }
        let refs = self.root.join(REFERENCES_DIR);
        fs::create_dir_all(&refs).map_err(ConnectorError::Disk)?;
        let mut budget = fault.fail_after_files;
        for p in &packages {
            write_package(&refs, p, &mut budget).map_err(ConnectorError::Disk)?;
            report.package_ids.push(p.package_id);
            report.entries += p.entries.len();
            report.cursor = report.cursor.max(p.package_id);
        }
        let mut next = self.state.clone();
        next.pull_cursor = report.cursor;
        self.save_state(&next).map_err(ConnectorError::Disk)?;
        self.state = next;
        Ok(report)
    }

    pub fn status(&self, container: Option<&Path>) -> Result<StatusReport, ConnectorError> {
        let container = container.map(Path::to_path_buf).or_else(|| self.state.container.clone());
        let pending = match container {
            None => None,
            Some(c) => {
                let new = self.read_container(&c)?;
                let cs = diff(&self.last_pushed_snapshot()?, &new).map_err(|e| ConnectorError::Usage(e.to_string()))?;
                Some(Pending {
                    added: cs.added.len(),
                    modified: cs.modified.len(),
                    deleted: cs.deleted.len(),
                })
            }
        };
        Ok(StatusReport {
            discipline: self.state.discipline,
            server: self.state.server.clone(),
            last_pushed_version: self.state.last_pushed_version.clone(),
            cursor: self.state.pull_cursor,
            pending,
        })
    }
}

/// Writes one package into a scratch directory and renames it into place,
/// replacing any earlier copy of the same package.
fn write_package(refs: &Path, p: &ReferencePackage, budget: &mut Option<usize>) -> io::Result<()> {
    let final_dir = refs.join(p.package_id.to_string());
    let tmp = refs.join(format!(".{}.partial", p.package_id));
    remove_dir_if_exists(&tmp)?;
    fs::create_dir_all(&tmp)?;
    let mut write = |name: &str, bytes: &[u8]| -> io::Result<()> {
        if let Some(left) = budget {
            if *left == 0 {
                return Err(io::Error::other("injected write failure"));
            }
            *left -= 1;
        }
        write_synced(&tmp.join(name), bytes)
    };
    for e in &p.entries {
        if let Some(g) = &e.geometry {
            write(&format!("{}.ply", e.guid), g)?;
        }
    }
    let mut manifest = serde_json::to_vec_pretty(&ReferenceManifest::of(p)).map_err(io::Error::other)?;
    manifest.push(b'\n');
    write(REFERENCE_MANIFEST, &manifest)?;
    sync_dir(&tmp)?;
    remove_dir_if_exists(&final_dir)?;
    fs::rename(&tmp, &final_dir)?;
    sync_dir(refs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(ConnectorError::Uninitialized(PathBuf::new()).exit_code(), 2);
        assert_eq!(
            ConnectorError::Rejected { code: ErrorCode::StaleBaseVersion, message: String::new() }.exit_code(),
            3
        );
        assert_eq!(ConnectorError::Network(String::new()).exit_code(), 4);
        assert_eq!(ConnectorError::Disk(io::Error::other("x")).exit_code(), 5);
    }

    #[test]
    fn init_open_lock() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(Workspace::open(tmp.path()), Err(ConnectorError::Uninitialized(_))));
        let ws = Workspace::init(tmp.path(), Discipline::Structure, "127.0.0.1:1").unwrap();
        assert!(matches!(Workspace::open(tmp.path()), Err(ConnectorError::Locked)));
        drop(ws);
        let ws = Workspace::open(tmp.path()).unwrap();
        assert_eq!(ws.status(None).unwrap().to_string(), "discipline: structure\nserver: 127.0.0.1:1\nnever pushed; cursor 0");
        drop(ws);
        assert!(matches!(
            Workspace::init(tmp.path(), Discipline::Structure, "x:1"),
            Err(ConnectorError::AlreadyInitialized(_))
        ));
    }

    #[test]
    fn snapshot_dir_names_are_safe() {
        assert!(snapshot_dir_name("a1").starts_with("a1-"));
        let odd = snapshot_dir_name("../v 2");
        assert!(!odd.contains('/') && !odd.contains(' '));
        assert_ne!(snapshot_dir_name("a/b"), snapshot_dir_name("a_b"));
    }
}
