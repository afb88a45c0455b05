//! Length-prefixed frames and the messages carried in them.
//!
//! ```text
//! "CBIM" | version u8 | msg_type u8 | header_len u32 BE | header (UTF-8 JSON)
//!        | payload_len u64 BE | payload
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diff::{Added, ChangeKind, ChangeSet, Deleted, Modified};
use crate::model::{Discipline, ModelObject, Space, Storey};
use crate::propagation::{from_manifest, PackageManifest, ReferencePackage};

pub const MAGIC: [u8; 4] = *b"CBIM";
pub const VERSION: u8 = 0x01;
pub const MAX_HEADER: u32 = 16 * 1024 * 1024;
pub const MAX_PAYLOAD: u64 = 4 * 1024 * 1024 * 1024;
/// Bytes before the header.
pub const PREFIX_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MessageType {
    Register = 0x01,
    RegisterAck = 0x02,
    Push = 0x03,
    PushAck = 0x04,
    Pull = 0x05,
    References = 0x06,
    Error = 0x7F,
}

impl MessageType {
    pub const ALL: [MessageType; 7] = [
        MessageType::Register,
        MessageType::RegisterAck,
        MessageType::Push,
        MessageType::PushAck,
        MessageType::Pull,
        MessageType::References,
        MessageType::Error,
    ];

    pub fn from_byte(b: u8) -> Option<MessageType> {
        MessageType::ALL.into_iter().find(|m| *m as u8 == b)
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MessageType::Register => "REGISTER",
            MessageType::RegisterAck => "REGISTER_ACK",
            MessageType::Push => "PUSH",
            MessageType::PushAck => "PUSH_ACK",
            MessageType::Pull => "PULL",
            MessageType::References => "REFERENCES",
            MessageType::Error => "ERROR",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MessageType,
    /// UTF-8 JSON.
    pub header: Vec<u8>,
    pub payload: Vec<u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type 0x{0:02x}")]
    UnknownMessageType(u8),
    #[error("frame is truncated")]
    Truncated,
    #[error("header of {0} bytes exceeds the limit")]
    OversizeHeader(u32),
    #[error("payload of {0} bytes exceeds the limit")]
    OversizePayload(u64),
    #[error("header is not UTF-8")]
    HeaderNotUtf8,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Frame {
    pub fn new(msg_type: MessageType, header: Vec<u8>, payload: Vec<u8>) -> Self {
        Frame {
            msg_type,
            header,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        PREFIX_LEN + self.header.len() + 8 + self.payload.len()
    }
}

pub fn encode_frame(msg_type: MessageType, header: &[u8], payload: &[u8]) -> Vec<u8> {
    assert!(header.len() as u64 <= MAX_HEADER as u64, "header over limit");
    assert!(payload.len() as u64 <= MAX_PAYLOAD, "payload over limit");
    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + 8 + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg_type as u8);
    out.extend_from_slice(&(header.len() as u32).to_be_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(&(payload.len() as u64).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

/// Checks the fixed prefix and returns message type and header length.
fn check_prefix(p: &[u8; PREFIX_LEN]) -> Result<(MessageType, u32), FrameError> {
    let magic: [u8; 4] = p[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    if p[4] != VERSION {
        return Err(FrameError::UnsupportedVersion(p[4]));
    }
    let msg_type = MessageType::from_byte(p[5]).ok_or(FrameError::UnknownMessageType(p[5]))?;
    let header_len = u32::from_be_bytes(p[6..10].try_into().unwrap());
    if header_len > MAX_HEADER {
        return Err(FrameError::OversizeHeader(header_len));
    }
    Ok((msg_type, header_len))
}

/// Decodes one frame from the front of `bytes` and reports how many bytes
/// it used. Nothing beyond the frame is looked at.
pub fn decode_frame(bytes: &[u8]) -> Result<(Frame, usize), FrameError> {
    let prefix: &[u8; PREFIX_LEN] = bytes
        .get(..PREFIX_LEN)
        .ok_or(FrameError::Truncated)?
        .try_into()
        .unwrap();
    let (msg_type, header_len) = check_prefix(prefix)?;
    let header_end = PREFIX_LEN + header_len as usize;
    let header = bytes.get(PREFIX_LEN..header_end).ok_or(FrameError::Truncated)?;
    if std::str::from_utf8(header).is_err() {
        return Err(FrameError::HeaderNotUtf8);
    }
    let len_bytes = bytes.get(header_end..header_end + 8).ok_or(FrameError::Truncated)?;
    let payload_len = u64::from_be_bytes(len_bytes.try_into().unwrap());
    if payload_len > MAX_PAYLOAD {
        return Err(FrameError::OversizePayload(payload_len));
    }
    let start = header_end + 8;
    let end = usize::try_from(payload_len)
        .ok()
        .and_then(|n| start.checked_add(n))
        .ok_or(FrameError::Truncated)?;
    let payload = bytes.get(start..end).ok_or(FrameError::Truncated)?;
    Ok((Frame::new(msg_type, header.to_vec(), payload.to_vec()), end))
}

fn read_exact_or_truncated(r: &mut impl Read, buf: &mut [u8]) -> Result<(), FrameError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })
}

/// Reads a frame from a stream. `Ok(None)` is a clean end of stream before
/// the first byte.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>, FrameError> {
    let mut prefix = [0u8; PREFIX_LEN];
    let mut got = 0;
    while got < PREFIX_LEN {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(FrameError::Io(e)),
        }
    }
    let (msg_type, header_len) = check_prefix(&prefix)?;
    let mut header = vec![0u8; header_len as usize];
    read_exact_or_truncated(r, &mut header)?;
    if std::str::from_utf8(&header).is_err() {
        return Err(FrameError::HeaderNotUtf8);
    }
    let mut len = [0u8; 8];
    read_exact_or_truncated(r, &mut len)?;
    let payload_len = u64::from_be_bytes(len);
    if payload_len > MAX_PAYLOAD {
        return Err(FrameError::OversizePayload(payload_len));
    }
    // Grow with the data actually received rather than trusting the prefix.
    let mut payload = Vec::new();
    r.take(payload_len).read_to_end(&mut payload)?;
    if payload.len() as u64 != payload_len {
        return Err(FrameError::Truncated);
    }
    Ok(Some(Frame::new(msg_type, header, payload)))
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    w.write_all(&encode_frame(frame.msg_type, &frame.header, &frame.payload))?;
    w.flush()
}

// Messages.

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub discipline: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterAck {
    pub server_version: String,
    pub client_id: String,
    pub latest_version_tag: String,
    pub queue_head_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushObject {
    pub object: ModelObject,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ChangeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry_len: Option<u64>,
}

/// PUSH header: the change set without its geometry, which follows in the
/// payload in list order (added, then modified).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushHeader {
    pub discipline: Discipline,
    pub base_version: String,
    pub new_version: String,
    pub created_at: DateTime<Utc>,
    pub storeys: Vec<Storey>,
    pub spaces: Vec<Space>,
    pub added: Vec<PushObject>,
    pub modified: Vec<PushObject>,
    pub deleted: Vec<Deleted>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushAck {
    pub accepted: usize,
    pub filtered_out: Vec<String>,
    pub packages_queued: BTreeMap<Discipline, usize>,
    pub version_tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRequest {
    pub after_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencesHeader {
    pub packages: Vec<PackageManifest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    AlreadyRegistered,
    NotRegistered,
    UnknownDiscipline,
    StaleBaseVersion,
    MalformedChangeSet,
    BadFrame,
    UnexpectedMessage,
    StoreFailure,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum MessageError {
    #[error("bad {what} header: {reason}")]
    BadHeader { what: &'static str, reason: String },
    #[error("malformed change set: {0}")]
    MalformedChangeSet(String),
    #[error("malformed references: {0}")]
    MalformedReferences(String),
}

pub fn json_frame<T: Serialize>(msg_type: MessageType, header: &T, payload: Vec<u8>) -> Frame {
    Frame::new(
        msg_type,
        serde_json::to_vec(header).expect("message headers serialize"),
        payload,
    )
}

pub fn parse_header<T: DeserializeOwned>(frame: &Frame, what: &'static str) -> Result<T, MessageError> {
    serde_json::from_slice(&frame.header).map_err(|e| MessageError::BadHeader {
        what,
        reason: e.to_string(),
    })
}

pub fn error_frame(code: ErrorCode, message: impl Into<String>) -> Frame {
    json_frame(
        MessageType::Error,
        &ErrorBody {
            code,
            message: message.into(),
        },
        Vec::new(),
    )
}

/// PUSH frame for a change set.
pub fn push_frame(cs: &ChangeSet) -> Frame {
    let mut payload = Vec::new();
    let mut entry = |object: &ModelObject, kind, geometry: &Option<Vec<u8>>| {
        if let Some(g) = geometry {
            payload.extend_from_slice(g);
        }
        PushObject {
            object: object.clone(),
            kind,
            geometry_len: geometry.as_ref().map(|g| g.len() as u64),
        }
    };
    let added = cs
        .added
        .iter()
        .map(|a| entry(&a.object, None, &a.geometry))
        .collect();
    let modified = cs
        .modified
        .iter()
        .map(|m| entry(&m.object, Some(m.kind), &m.geometry))
        .collect();
    let header = PushHeader {
        discipline: cs.discipline,
        base_version: cs.base_version.clone(),
        new_version: cs.new_version.clone(),
        created_at: cs.created_at,
        storeys: cs.storeys.clone(),
        spaces: cs.spaces.clone(),
        added,
        modified,
        deleted: cs.deleted.clone(),
    };
    json_frame(MessageType::Push, &header, payload)
}

/// Rebuilds the change set of a PUSH frame, checking the declared blob
/// lengths against the payload.
pub fn parse_push(frame: &Frame) -> Result<ChangeSet, MessageError> {
    let h: PushHeader = serde_json::from_slice(&frame.header)
        .map_err(|e| MessageError::MalformedChangeSet(e.to_string()))?;
    let mut rest = frame.payload.as_slice();
    let mut take = |guid: &str, len: Option<u64>| -> Result<Option<Vec<u8>>, MessageError> {
        let Some(n) = len else { return Ok(None) };
        let n = usize::try_from(n).ok().filter(|n| *n <= rest.len()).ok_or_else(|| {
            MessageError::MalformedChangeSet(format!("payload too short for the geometry of {guid}"))
        })?;
        let (blob, tail) = rest.split_at(n);
        rest = tail;
        Ok(Some(blob.to_vec()))
    };
    let mut added = Vec::with_capacity(h.added.len());
    for p in h.added {
        if p.kind.is_some() {
            return Err(MessageError::MalformedChangeSet(format!("added {} has a change kind", p.object.guid)));
        }
        let geometry = take(&p.object.guid, p.geometry_len)?;
        added.push(Added {
            object: p.object,
            geometry,
        });
    }
    let mut modified = Vec::with_capacity(h.modified.len());
    for p in h.modified {
        let kind = p.kind.ok_or_else(|| {
            MessageError::MalformedChangeSet(format!("modified {} lacks a change kind", p.object.guid))
        })?;
        if kind == ChangeKind::Attribute && p.geometry_len.is_some() {
            return Err(MessageError::MalformedChangeSet(format!(
                "attribute change of {} carries geometry",
                p.object.guid
            )));
        }
        let geometry = take(&p.object.guid, p.geometry_len)?;
        modified.push(Modified {
            object: p.object,
            kind,
            geometry,
        });
    }
    if !rest.is_empty() {
        return Err(MessageError::MalformedChangeSet(format!(
            "{} payload bytes not claimed by any object",
            rest.len()
        )));
    }
    Ok(ChangeSet {
        discipline: h.discipline,
        base_version: h.base_version,
        new_version: h.new_version,
        created_at: h.created_at,
        storeys: h.storeys,
        spaces: h.spaces,
        added,
        modified,
        deleted: h.deleted,
    })
}

pub fn references_frame<'a>(packages: impl IntoIterator<Item = &'a ReferencePackage>) -> Frame {
    let mut payload = Vec::new();
    let mut manifests = Vec::new();
    for p in packages {
        manifests.push(p.manifest());
        p.write_blobs(&mut payload);
    }
    json_frame(MessageType::References, &ReferencesHeader { packages: manifests }, payload)
}

pub fn parse_references(frame: &Frame) -> Result<Vec<ReferencePackage>, MessageError> {
    let h: ReferencesHeader = serde_json::from_slice(&frame.header)
        .map_err(|e| MessageError::MalformedReferences(e.to_string()))?;
    let mut rest = frame.payload.as_slice();
    let mut out = Vec::with_capacity(h.packages.len());
    for m in h.packages {
        out.push(from_manifest(m, &mut rest).map_err(|e| MessageError::MalformedReferences(e.to_string()))?);
    }
    if !rest.is_empty() {
        return Err(MessageError::MalformedReferences("trailing payload bytes".into()));
    }
    Ok(out)
}
