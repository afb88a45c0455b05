//! The coordination server.
//!
//! Every connection gets a thread. Pushes run one at a time through a
//! single lane that owns the data directory; pulls and registrations read
//! the last committed state without waiting for a push in progress.

use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};

use chrono::{DateTime, Utc};

use crate::enrichment::EnrichmentRuleset;
use crate::geometry::Tolerances;
use crate::graph::GraphError;
use crate::model::Discipline;
use crate::propagation::{
    drain_queue, Cde, CdeState, PropagationError, PropagationOutcome, RelevanceRuleset,
};
use crate::protocol::{
    error_frame, json_frame, parse_header, parse_push, read_frame, references_frame, write_frame,
    ErrorCode, Frame, FrameError, MessageType, PullRequest, PushAck, RegisterAck, RegisterRequest,
};
use crate::storage::DataDir;

pub const SERVER_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
}

/// Rules the push pipeline runs with.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rules {
    pub relevance: RelevanceRuleset,
    pub enrichment: EnrichmentRuleset,
}

impl Rules {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |reason: String| ConfigError::Invalid {
            what: "ruleset",
            reason,
        };
        self.enrichment.validate().map_err(|e| invalid(e.to_string()))?;
        self.relevance.validate().map_err(invalid)?;
        self.relevance.check_covers(&self.enrichment).map_err(invalid)
    }

    /// Reads the optional ruleset and tolerance files. The ruleset file is
    /// the enrichment ruleset with an optional `relevance` key; without it
    /// the default relevance rules apply, widened to include every eligible
    /// category.
    pub fn load(ruleset: Option<&Path>, tolerances: Option<&Path>) -> Result<Rules, ConfigError> {
        let read = |p: &Path| {
            std::fs::read(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })
        };
        let mut rules = Rules::default();
        if let Some(path) = ruleset {
            let invalid = |reason: String| ConfigError::Invalid {
                what: "ruleset",
                reason,
            };
            let mut value: serde_json::Value =
                serde_json::from_slice(&read(path)?).map_err(|e| invalid(e.to_string()))?;
            let relevance = value.as_object_mut().and_then(|o| o.remove("relevance"));
            rules.enrichment = serde_json::from_value(value).map_err(|e| invalid(e.to_string()))?;
            match relevance {
                Some(r) => {
                    rules.relevance = serde_json::from_value(r).map_err(|e| invalid(e.to_string()))?
                }
                None => {
                    for (d, cats) in &rules.enrichment.eligible {
                        rules
                            .relevance
                            .include
                            .entry(*d)
                            .or_default()
                            .extend(cats.iter().cloned());
                    }
                }
            }
        }
        if let Some(path) = tolerances {
            rules.enrichment.tolerances =
                serde_json::from_slice::<Tolerances>(&read(path)?).map_err(|e| ConfigError::Invalid {
                    what: "tolerances",
                    reason: e.to_string(),
                })?;
        }
        rules.validate()?;
        Ok(rules)
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub client_id: String,
    pub discipline: Option<Discipline>,
    pub registered_at: Option<DateTime<Utc>>,
    pub last_pull_seq: u64,
}

struct Shared {
    rules: Rules,
    committed: RwLock<Arc<CdeState>>,
    lane: Mutex<Cde>,
    next_client: AtomicU64,
}

/// The request handler, independent of any socket.
#[derive(Clone)]
pub struct Coordinator {
    shared: Arc<Shared>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot open data directory: {0}")]
    DataDir(#[from] std::io::Error),
    #[error(transparent)]
    Store(#[from] GraphError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn error_for(e: &PropagationError) -> ErrorCode {
    match e {
        PropagationError::StaleBaseVersion { .. } => ErrorCode::StaleBaseVersion,
        PropagationError::MalformedChangeSet(_) | PropagationError::Graph(GraphError::BadGeometry { .. }) => {
            ErrorCode::MalformedChangeSet
        }
        PropagationError::Graph(GraphError::IntegrityViolation(_)) => ErrorCode::MalformedChangeSet,
        PropagationError::StoreFailure(_) | PropagationError::Graph(_) => ErrorCode::StoreFailure,
        PropagationError::Enrichment(_) => ErrorCode::Internal,
    }
}

impl Coordinator {
    pub fn open(data_dir: impl Into<PathBuf>, rules: Rules) -> Result<Self, ServerError> {
        rules.validate()?;
        let cde = Cde::open(DataDir::open(data_dir)?)?;
        Ok(Coordinator {
            shared: Arc::new(Shared {
                rules,
                committed: RwLock::new(cde.state().clone()),
                lane: Mutex::new(cde),
                next_client: AtomicU64::new(1),
            }),
        })
    }

    pub fn new_session(&self) -> Session {
        let n = self.shared.next_client.fetch_add(1, Ordering::Relaxed);
        Session {
            client_id: format!("client-{n}"),
            discipline: None,
            registered_at: None,
            last_pull_seq: 0,
        }
    }

    /// Last committed state.
    pub fn state(&self) -> Arc<CdeState> {
        self.shared.committed.read().unwrap().clone()
    }

    /// Runs a change set through the push lane.
    pub fn push(&self, cs: &crate::diff::ChangeSet) -> Result<PropagationOutcome, PropagationError> {
        let mut lane = self.shared.lane.lock().unwrap_or_else(|p| p.into_inner());
        let result = lane.push(cs, &self.shared.rules.relevance, &self.shared.rules.enrichment);
        *self.shared.committed.write().unwrap() = lane.state().clone();
        result
    }

    /// Answers one request frame with exactly one response frame.
    pub fn handle(&self, session: &mut Session, frame: &Frame) -> Frame {
        match frame.msg_type {
            MessageType::Register => self.register(session, frame),
            MessageType::Push => self.handle_push(session, frame),
            MessageType::Pull => self.pull(session, frame),
            other => error_frame(ErrorCode::UnexpectedMessage, format!("{other} is not a request")),
        }
    }

    fn register(&self, session: &mut Session, frame: &Frame) -> Frame {
        if session.discipline.is_some() {
            return error_frame(ErrorCode::AlreadyRegistered, "this connection is already registered");
        }
        let req: RegisterRequest = match parse_header(frame, "REGISTER") {
            Ok(r) => r,
            Err(e) => return error_frame(ErrorCode::BadFrame, e.to_string()),
        };
        let discipline: Discipline = match req.discipline.parse() {
            Ok(d) => d,
            Err(e) => return error_frame(ErrorCode::UnknownDiscipline, format!("{e}")),
        };
        if let Some(id) = req.client_id.filter(|id| !id.is_empty()) {
            session.client_id = id;
        }
        session.discipline = Some(discipline);
        session.registered_at = Some(Utc::now());
        let state = self.state();
        log::info!("{} registered as {discipline}", session.client_id);
        json_frame(
            MessageType::RegisterAck,
            &RegisterAck {
                server_version: SERVER_VERSION.to_string(),
                client_id: session.client_id.clone(),
                latest_version_tag: state.graph.latest_version(discipline).to_string(),
                queue_head_seq: state.queue_head(discipline),
            },
            Vec::new(),
        )
    }

    fn handle_push(&self, session: &mut Session, frame: &Frame) -> Frame {
        let Some(discipline) = session.discipline else {
            return error_frame(ErrorCode::NotRegistered, "REGISTER first");
        };
        let cs = match parse_push(frame) {
            Ok(cs) => cs,
            Err(e) => return error_frame(ErrorCode::MalformedChangeSet, e.to_string()),
        };
        if cs.discipline != discipline {
            return error_frame(
                ErrorCode::MalformedChangeSet,
                format!("session is {discipline} but the change set is {}", cs.discipline),
            );
        }
        match self.push(&cs) {
            Ok(out) => {
                log::info!(
                    "{} pushed {discipline} {}: {} accepted, {} filtered, {} packages",
                    session.client_id,
                    out.version_tag,
                    out.accepted,
                    out.filtered_out.len(),
                    out.packages.len()
                );
                json_frame(
                    MessageType::PushAck,
                    &PushAck {
                        accepted: out.accepted,
                        filtered_out: out.filtered_out.clone(),
                        packages_queued: out.packages_queued(),
                        version_tag: out.version_tag.clone(),
                    },
                    Vec::new(),
                )
            }
            Err(e) => {
                log::warn!("{} push rejected: {e}", session.client_id);
                error_frame(error_for(&e), e.to_string())
            }
        }
    }

    fn pull(&self, session: &mut Session, frame: &Frame) -> Frame {
        let Some(discipline) = session.discipline else {
            return error_frame(ErrorCode::NotRegistered, "REGISTER first");
        };
        let req: PullRequest = match parse_header(frame, "PULL") {
            Ok(r) => r,
            Err(e) => return error_frame(ErrorCode::BadFrame, e.to_string()),
        };
        let packages = drain_queue(&self.state(), discipline, req.after_seq);
        if let Some(last) = packages.last() {
            session.last_pull_seq = last.package_id;
        }
        references_frame(packages.iter().map(|p| p.as_ref()))
    }
}

fn serve_connection(coord: Coordinator, stream: TcpStream) {
    let peer = stream.peer_addr().ok();
    let _ = stream.set_nodelay(true);
    let Ok(write_half) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(stream);
    let mut writer = BufWriter::new(write_half);
    let mut session = coord.new_session();
    log::debug!("{} connected from {peer:?}", session.client_id);
    loop {
        let response = match read_frame(&mut reader) {
            Ok(None) => break,
            Ok(Some(frame)) => coord.handle(&mut session, &frame),
            Err(FrameError::Io(e)) => {
                log::debug!("{} read failed: {e}", session.client_id);
                break;
            }
            Err(e) => {
                // The stream cannot be resynchronised after a bad frame.
                let _ = write_frame(&mut writer, &error_frame(ErrorCode::BadFrame, e.to_string()));
                break;
            }
        };
        if write_frame(&mut writer, &response).is_err() {
            break;
        }
    }
    log::debug!("{} disconnected", session.client_id);
}

/// A listening server running on background threads.
pub struct RunningServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    coordinator: Coordinator,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn coordinator(&self) -> &Coordinator {
        &self.coordinator
    }

    /// Stops accepting connections. Open connections finish on their own.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

pub fn serve(coordinator: Coordinator, addr: impl ToSocketAddrs) -> std::io::Result<RunningServer> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let accept = {
        let stop = stop.clone();
        let coordinator = coordinator.clone();
        thread::Builder::new().name("cbim-accept".into()).spawn(move || {
            for conn in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let c = coordinator.clone();
                        let _ = thread::Builder::new()
                            .name("cbim-conn".into())
                            .spawn(move || serve_connection(c, stream));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        })?
    };
    Ok(RunningServer {
        addr,
        stop,
        accept: Some(accept),
        coordinator,
    })
}
