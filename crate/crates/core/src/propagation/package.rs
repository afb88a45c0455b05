//! Reference packages and their byte layout.
//!
//! A package file is `u32` BE header length, the header JSON, `u64` BE
//! payload length, then the geometry blobs concatenated in entry order.
//! The REFERENCES wire message uses the same split: manifests in the
//! header, blobs of all packages back to back in the payload.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::diff::ChangeKind;
use crate::geometry::Predicate;
use crate::model::Discipline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryChange {
    Added,
    Modified,
    Deleted,
}

impl EntryChange {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryChange::Added => "added",
            EntryChange::Modified => "modified",
            EntryChange::Deleted => "deleted",
        }
    }
}

impl fmt::Display for EntryChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One spatial relationship of a packaged object, read from that object
/// towards an element of the receiving discipline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationContext {
    pub guid: String,
    pub category: String,
    pub predicate: Predicate,
    pub min_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageEntry {
    pub guid: String,
    pub category: String,
    pub name: String,
    pub change: EntryChange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ChangeKind>,
    /// PLY bytes; the last known geometry for deletions.
    #[serde(skip)]
    pub geometry: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicate_context: Vec<RelationContext>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePackage {
    pub package_id: u64,
    pub target_discipline: Discipline,
    pub source_discipline: Discipline,
    pub source_version: String,
    pub created_at: DateTime<Utc>,
    pub entries: Vec<PackageEntry>,
}

/// Package header as it appears in JSON: entries carry blob lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackageManifest {
    pub package_id: u64,
    pub target_discipline: Discipline,
    pub source_discipline: Discipline,
    pub source_version: String,
    pub created_at: DateTime<Utc>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub guid: String,
    pub category: String,
    #[serde(default)]
    pub name: String,
    pub change: EntryChange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ChangeKind>,
    /// Byte length of the geometry blob, absent when there is none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry_len: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicate_context: Vec<RelationContext>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PackageError {
    #[error("package bytes are truncated")]
    Truncated,
    #[error("bad package header: {0}")]
    BadHeader(String),
    #[error("declared geometry lengths do not match the payload")]
    LengthMismatch,
}

impl ReferencePackage {
    pub fn manifest(&self) -> PackageManifest {
        PackageManifest {
            package_id: self.package_id,
            target_discipline: self.target_discipline,
            source_discipline: self.source_discipline,
            source_version: self.source_version.clone(),
            created_at: self.created_at,
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    guid: e.guid.clone(),
                    category: e.category.clone(),
                    name: e.name.clone(),
                    change: e.change,
                    kind: e.kind,
                    geometry_len: e.geometry.as_ref().map(|g| g.len() as u64),
                    predicate_context: e.predicate_context.clone(),
                })
                .collect(),
        }
    }

    /// Appends this package's blobs to `payload`.
    pub fn write_blobs(&self, payload: &mut Vec<u8>) {
        for e in &self.entries {
            if let Some(g) = &e.geometry {
                payload.extend_from_slice(g);
            }
        }
    }

    pub fn payload_len(&self) -> u64 {
        self.entries
            .iter()
            .filter_map(|e| e.geometry.as_ref())
            .map(|g| g.len() as u64)
            .sum()
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.manifest()).expect("manifest serializes");
        let mut out = Vec::with_capacity(12 + header.len() + self.payload_len() as usize);
        out.extend_from_slice(&(header.len() as u32).to_be_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.payload_len().to_be_bytes());
        self.write_blobs(&mut out);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<ReferencePackage, PackageError> {
        let take = |at: usize, n: usize| {
            at.checked_add(n)
                .and_then(|end| bytes.get(at..end))
                .ok_or(PackageError::Truncated)
        };
        let header_len = u32::from_be_bytes(take(0, 4)?.try_into().unwrap()) as usize;
        let header = take(4, header_len)?;
        let payload_len = u64::from_be_bytes(take(4 + header_len, 8)?.try_into().unwrap());
        let start = 12 + header_len;
        let payload_len = usize::try_from(payload_len).map_err(|_| PackageError::Truncated)?;
        let payload = take(start, payload_len)?;
        if bytes.len() != start + payload_len {
            return Err(PackageError::BadHeader("trailing bytes".into()));
        }
        let manifest: PackageManifest =
            serde_json::from_slice(header).map_err(|e| PackageError::BadHeader(e.to_string()))?;
        let mut rest = payload;
        let package = from_manifest(manifest, &mut rest)?;
        if !rest.is_empty() {
            return Err(PackageError::LengthMismatch);
        }
        Ok(package)
    }
}

/// Rebuilds a package from its manifest, consuming its blobs from the
/// front of `payload`.
pub fn from_manifest(m: PackageManifest, payload: &mut &[u8]) -> Result<ReferencePackage, PackageError> {
    let mut entries = Vec::with_capacity(m.entries.len());
    for e in m.entries {
        let geometry = match e.geometry_len {
            None => None,
            Some(n) => {
                let n = usize::try_from(n).map_err(|_| PackageError::LengthMismatch)?;
                if payload.len() < n {
                    return Err(PackageError::LengthMismatch);
                }
                let (blob, rest) = payload.split_at(n);
                *payload = rest;
                Some(blob.to_vec())
            }
        };
        entries.push(PackageEntry {
            guid: e.guid,
            category: e.category,
            name: e.name,
            change: e.change,
            kind: e.kind,
            geometry,
            predicate_context: e.predicate_context,
        });
    }
    Ok(ReferencePackage {
        package_id: m.package_id,
        target_discipline: m.target_discipline,
        source_discipline: m.source_discipline,
        source_version: m.source_version,
        created_at: m.created_at,
        entries,
    })
}
